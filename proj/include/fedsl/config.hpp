#pragma once

#include "fedsl/analysis.hpp"
#include "fedsl/engine.hpp"

#include <string>

namespace fedsl {

// Flat key-value experiment config: one "key = value" per line, '#' comments.
// Lists are comma separated. Unknown keys are rejected by name.
//
// Keys: K, T, I, L, L_c, layer_dims, rho_f, q, p, eta, batch, seed, d_meters,
// bandwidth_hz, tx_power_client_dbm, tx_power_server_dbm, noise_dbm_per_hz,
// classes, train_samples, eval_samples, blob_sigma, latency_composition,
// artifacts_dir, snapshot_every.
struct ExperimentConfig {
  ExperimentSetup setup;
  bool seed_set = false;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Bound-evaluator params file, same syntax. Keys: beta, eta, K, I, T, L_c,
// rho_f, theta, sigma_sq, G_sq, W_sq, and either J_sq directly or
// q + g_min + g_max + M (per client-side layer) to derive it.
struct BoundConfig {
  BoundParams params;
  bool has_quantizer = false;
  int q = 0;
  std::vector<double> g_min;
  std::vector<double> g_max;
  std::vector<Index> dims;
};

BoundConfig parse_bound_text(const std::string& text);
BoundConfig parse_bound_file(const std::string& path);

}  // namespace fedsl
