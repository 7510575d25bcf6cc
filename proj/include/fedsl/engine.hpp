#pragma once

#include "fedsl/compression.hpp"
#include "fedsl/data.hpp"
#include "fedsl/nn.hpp"
#include "fedsl/rng.hpp"
#include "fedsl/types.hpp"
#include "fedsl/wire.hpp"
#include "fedsl/wireless.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedsl {

struct SplitModelConfig {
  std::vector<Index> layer_dims;          // input width first, then each layer's width
  int split_layer = 1;                    // L_c: client keeps layers 1..L_c
  std::vector<Activation> activations;    // one per layer; empty = ReLU..., Identity last

  Index layer_count() const { return static_cast<Index>(layer_dims.size()) - 1; }
  Index input_dim() const { return layer_dims.front(); }
  Index output_dim() const { return layer_dims.back(); }
  Index split_dim() const { return layer_dims[static_cast<std::size_t>(split_layer)]; }

  Activation activation_of(Index layer) const;
  void validate() const;
};

// Layers [first, last) of the configured stack, each initialized from its own
// per-layer stream so any split of the same seed yields the same weights.
std::vector<DenseLayer> build_layers(const SplitModelConfig& model, std::uint64_t seed,
                                     Index first, Index last);

struct ClientState {
  int id = 0;
  std::vector<DenseLayer> layers;  // layers 1..L_c
  std::vector<PruneMask> masks;    // per layer, weight matrices only
  Dataset shard;

  // epoch cursor; reshuffled lazily from (seed, client, round)
  std::vector<Index> order;
  std::size_t cursor = 0;

  double mean_weight_sparsity() const;
};

struct ServerState {
  std::vector<DenseLayer> layers;  // layers L_c+1..L
};

// In-process smashed data; f64 rows drive training, the f32 wire image is
// produced by smashed_to_wire. payload_bytes is the accounting figure
// (header + count + indices + rows); label bytes ride on top of it.
struct SmashedData {
  std::vector<std::uint32_t> kept_row_indices;
  Matrix kept_rows;
  Labels labels;  // labels of kept rows
  Index batch_rows = 0;
  std::uint64_t payload_bytes = 0;
};

SmashedWire smashed_to_wire(const SmashedData& data, std::uint32_t round,
                            std::uint16_t client_id);

struct ClientForwardResult {
  ForwardCache cache;      // client-side stack cache
  KeepMask keep_mask;
  Labels batch_labels;     // all labels of the drawn batch
  SmashedData smashed;
};

// Forward through the client layers, dropout at the split layer, and sparse
// encoding of the kept rows.
ClientForwardResult client_forward(const ClientState& client, const Matrix& batch_x,
                                   const Labels& batch_y, const DropoutSpec& dropout,
                                   Rng& dropout_rng);

struct ServerRoundResult {
  std::vector<Matrix> act_grads_kept;  // per client, kept rows only
  std::vector<double> client_loss;     // mean CE over that client's kept rows
};

// Forward/backward for every client's smashed batch against the shared
// server model, then one averaged-gradient step.
ServerRoundResult server_round(ServerState& server, const std::vector<SmashedData>& smashed,
                               double eta);

// Alternative route: per-client replicas updated independently, then
// averaged. Kept alongside server_round so the two can be compared directly.
std::vector<DenseLayer> server_round_replicated(const ServerState& server,
                                                const std::vector<SmashedData>& smashed,
                                                double eta);

struct ClientUpdateStats {
  std::vector<std::uint8_t> layer_pruned;  // per layer, 1 if the trigger fired
  std::vector<double> grad_sq_norm;        // per layer, raw backprop gradient
  std::vector<double> grad_range;          // per layer, g_max - g_min over masked support
  std::vector<double> weight_sq_norm;      // per layer, post-update

  bool any_pruned() const {
    for (std::uint8_t p : layer_pruned) {
      if (p) return true;
    }
    return false;
  }
};

// Backprop through dropout and the client stack, prune on trigger, quantize
// the masked gradient, and step the weights. Biases stay dense and
// unquantized.
ClientUpdateStats client_update(ClientState& client, const ClientForwardResult& fwd,
                                const Matrix& act_grads_kept, int t,
                                const SparsitySchedule& schedule, const QuantizerSpec& qspec,
                                const DropoutSpec& dropout, double eta, Rng& quant_rng);

// Arithmetic mean of the client-side layers (weights and biases); masks are
// left alone here.
std::vector<DenseLayer> aggregate_clients(const std::vector<ClientState>& clients);

// Installs the aggregate verbatim (dense) and resets every mask; pruning
// re-evaluates importance at the next trigger.
void install_aggregate(std::vector<ClientState>& clients,
                       const std::vector<DenseLayer>& aggregate);

enum class LatencyComposition { kMaxOverClients, kSumOverClients };

struct ExperimentSetup {
  SplitModelConfig model;
  int clients = 1;        // K
  int rounds = 1;         // T
  int agg_interval = 1;   // I
  double rho_f = 0.0;
  int quant_bits = 0;     // 0 = quantization off
  double dropout_p = 0.0;
  double eta = 0.05;
  Index batch = 32;
  std::uint64_t seed = 0;

  int classes = 0;  // 0 = output width
  Index train_samples = 200;
  Index eval_samples = 100;
  double blob_sigma = 1.0;

  std::vector<double> distances_km;  // per client; empty = drawn from seed
  double bandwidth_hz = 5e6;
  double tx_client_dbm = 23.0;
  double tx_server_dbm = 37.0;
  double noise_dbm_per_hz = -174.0;
  LatencyComposition latency_comp = LatencyComposition::kMaxOverClients;

  std::string artifacts_dir;  // empty = no snapshots/recorder
  int snapshot_every = 1;

  int effective_classes() const { return classes > 0 ? classes : static_cast<int>(model.output_dim()); }
  void validate() const;
};

struct RoundMetrics {
  int round = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  std::vector<double> client_sparsity;
  std::vector<std::uint64_t> uplink_bytes;    // per client
  std::vector<std::uint64_t> downlink_bytes;  // per client
  std::vector<double> uplink_latency_s;
  std::vector<double> downlink_latency_s;
  double comm_latency_s = 0.0;
  double cumulative_latency_s = 0.0;

  double mean_sparsity() const;
  std::uint64_t total_uplink_bytes() const;
  std::uint64_t total_downlink_bytes() const;
};

// Running maxima and snapshot writing for post-hoc analysis.
struct RunRecorder {
  bool enabled = false;
  std::string dir;
  int every = 1;
  std::vector<double> max_g_sq;        // per client-side layer
  std::vector<double> max_w_sq;        // per layer 1..L
  std::vector<double> max_grad_range;  // per client-side layer
};

struct World {
  ExperimentSetup setup;
  SparsitySchedule schedule;
  QuantizerSpec qspec;
  DropoutSpec dropout;
  std::vector<ClientState> clients;
  ServerState server;
  Dataset eval_set;
  std::vector<double> uplink_rate_bps;    // per client
  std::vector<double> downlink_rate_bps;  // per client
  RunRecorder recorder;
  double cumulative_latency_s = 0.0;
};

World make_world(const ExperimentSetup& setup);

// Draws the next minibatch for a client; reshuffles from
// (seed, client id, round) whenever an epoch boundary is crossed.
std::pair<Matrix, Labels> draw_batch(ClientState& client, Index batch, std::uint64_t seed,
                                     int round);

RoundMetrics run_round(World& world, int t);

struct RunResult {
  std::vector<RoundMetrics> rounds;
};

RunResult run_experiment(const ExperimentSetup& setup);

// Client layers joined with the shared server layers into one full stack.
std::vector<DenseLayer> join_model(const std::vector<DenseLayer>& client_layers,
                                   const std::vector<DenseLayer>& server_layers);

double evaluate_accuracy(const std::vector<DenseLayer>& layers, const Dataset& data);

void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& series);

}  // namespace fedsl
