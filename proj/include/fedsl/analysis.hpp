#pragma once

#include "fedsl/types.hpp"
#include "fedsl/wire.hpp"

#include <string>
#include <vector>

namespace fedsl {

// Inputs to the convergence-bound evaluator. The per-layer arrays run over
// layers 1..L; j_sq covers the client side 1..L_c only. None of these are
// derivable from first principles here; they are estimated from instrumented
// runs or supplied directly.
struct BoundParams {
  double beta = 1.0;    // smoothness constant
  double eta = 0.1;     // learning rate, must satisfy 0 < eta <= 1/(2 beta)
  int clients = 1;      // K
  int agg_interval = 1; // I
  int rounds = 1;       // T
  int split_layer = 1;  // L_c
  double rho_f = 0.0;
  double theta = 0.0;   // F(w_1) - F(w*)
  std::vector<double> sigma_sq;
  std::vector<double> g_sq;
  std::vector<double> w_sq;
  std::vector<double> j_sq;

  Index layer_count() const { return static_cast<Index>(sigma_sq.size()); }
  void validate() const;
};

// Upper bound on the average squared gradient norm over T rounds:
// optimality-gap term plus per-layer variance, aggregation-frequency,
// pruning-rate and quantization terms.
double theorem1_rhs(const BoundParams& params);

// (Delta_g / (2^q - 1))^2 with Delta_g = sqrt(M/4) * (g_max - g_min);
// the worst-case mean-squared error of the stochastic uniform quantizer.
double quantizer_J(int q, double g_min, double g_max, Index dimension);

// Exact sum of the cubic schedule over t = 1..T.
double sparsity_schedule_sum(double rho_f, int T);

// Strict inequality sum(rho_t) < T * rho_f. Holds for T >= 2; at T = 1 the
// single term equals rho_f exactly and the strict form fails.
bool lemma1_check(double rho_f, int T);

// A run's recorded artifacts: one f32 model dump per (round, client) in the
// model-message wire layout, plus the constants and config echoed by the run.
struct RunArtifacts {
  int clients = 0;
  int rounds = 0;
  int agg_interval = 1;
  int split_layer = 1;
  double eta = 0.0;
  double rho_f = 0.0;
  int snapshot_every = 1;
  std::vector<Index> layer_dims;
  std::vector<double> max_g_sq;        // per client-side layer
  std::vector<double> max_w_sq;        // per layer 1..L
  std::vector<double> max_grad_range;  // per client-side layer
  std::vector<int> snapshot_rounds;
  std::vector<std::vector<ModelWire>> snapshots;  // [round index][client]
};

RunArtifacts load_run_artifacts(const std::string& dir);

struct Lemma2RoundCheck {
  int round = 0;
  double max_ratio = 0.0;
  int bound_violations = 0;
};

struct Lemma2Report {
  double constant_scale = 1.0;
  double max_ratio = 0.0;
  int max_ratio_round = 0;
  int max_ratio_client = 0;
  long bound_violations = 0;
  long premise_violations = 0;
  std::vector<Lemma2RoundCheck> per_round;

  long total_violations() const { return bound_violations + premise_violations; }
};

// Single-sample check of the client-drift bound at every recorded (k, t):
// ||w_mean,t - w_k,t||^2 against 8 eta^2 (I+1)^2 sum G_l^2 (client layers)
// + 4 sum W_l^2 (all layers) + 2 rho_t sum W_l^2 (client layers), using the
// supplied constants scaled by constant_scale. Also verifies the scaled
// constants still dominate the run's recorded observations; constants that
// fail that premise are counted as violations.
Lemma2Report lemma2_empirical(const RunArtifacts& artifacts, double constant_scale = 1.0);

void write_lemma2_report(const std::string& path, const Lemma2Report& report);

}  // namespace fedsl
