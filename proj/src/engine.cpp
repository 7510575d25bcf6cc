#include "fedsl/engine.hpp"

#include "fedsl/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

namespace fedsl {

namespace {

double compose_latency(const std::vector<double>& per_client, LatencyComposition comp) {
  if (per_client.empty()) return 0.0;
  if (comp == LatencyComposition::kSumOverClients) {
    return std::accumulate(per_client.begin(), per_client.end(), 0.0);
  }
  return *std::max_element(per_client.begin(), per_client.end());
}

std::string snapshot_name(int round, int client) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "round_%05d_client_%03d.bin", round, client);
  return buf;
}

void write_file(const std::string& path, const ByteBuffer& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

struct ServerPass {
  std::vector<LayerGrads> grads;  // empty when the client kept no rows
  Matrix act_grads_kept;
  double loss = 0.0;
};

ServerPass run_server_pass(const std::vector<DenseLayer>& layers, const SmashedData& s) {
  const Index dim = layers.front().in_dim();
  const auto kept = static_cast<Index>(s.kept_row_indices.size());

  Matrix split_batch = Matrix::Zero(s.batch_rows, dim);
  for (Index i = 0; i < kept; ++i) {
    split_batch.row(static_cast<Index>(s.kept_row_indices[static_cast<std::size_t>(i)])) =
        s.kept_rows.row(i);
  }

  ServerPass pass;
  if (kept == 0) {
    pass.act_grads_kept.resize(0, dim);
    return pass;
  }

  ForwardCache cache = stack_forward(layers, split_batch);
  const Index classes = cache.output.cols();

  Matrix kept_logits(kept, classes);
  for (Index i = 0; i < kept; ++i) {
    kept_logits.row(i) =
        cache.output.row(static_cast<Index>(s.kept_row_indices[static_cast<std::size_t>(i)]));
  }
  SoftmaxLoss sl = softmax_cross_entropy(kept_logits, s.labels);

  // Dropped rows carry no labels and no loss, so their upstream gradient is
  // exactly zero and they contribute nothing anywhere downstream.
  Matrix upstream = Matrix::Zero(s.batch_rows, classes);
  for (Index i = 0; i < kept; ++i) {
    upstream.row(static_cast<Index>(s.kept_row_indices[static_cast<std::size_t>(i)])) =
        sl.d_logits.row(i);
  }

  StackGrads grads = stack_backward(layers, cache, upstream);

  pass.act_grads_kept.resize(kept, dim);
  for (Index i = 0; i < kept; ++i) {
    pass.act_grads_kept.row(i) =
        grads.d_input.row(static_cast<Index>(s.kept_row_indices[static_cast<std::size_t>(i)]));
  }
  pass.loss = sl.loss;
  pass.grads = std::move(grads.per_layer);
  return pass;
}

void validate_smashed(const std::vector<DenseLayer>& layers, const SmashedData& s) {
  const auto kept = static_cast<Index>(s.kept_row_indices.size());
  if (s.kept_rows.rows() != kept || static_cast<Index>(s.labels.size()) != kept) {
    throw ProtocolError("smashed data: kept rows, indices and labels disagree");
  }
  if (kept > 0 && s.kept_rows.cols() != layers.front().in_dim()) {
    throw ProtocolError("smashed data: feature dim does not match the split layer");
  }
  const Index classes = layers.back().out_dim();
  for (std::uint32_t idx : s.kept_row_indices) {
    if (static_cast<Index>(idx) >= s.batch_rows) {
      throw ProtocolError("smashed data: row index out of range");
    }
  }
  for (int label : s.labels) {
    if (label < 0 || static_cast<Index>(label) >= classes) {
      throw ProtocolError("smashed data: label out of range");
    }
  }
}

}  // namespace

Activation SplitModelConfig::activation_of(Index layer) const {
  if (!activations.empty()) return activations[static_cast<std::size_t>(layer)];
  return layer + 1 == layer_count() ? Activation::Identity : Activation::ReLU;
}

void SplitModelConfig::validate() const {
  if (layer_dims.size() < 2) {
    throw InputError("layer_dims: need an input width and at least one layer width");
  }
  for (Index d : layer_dims) {
    if (d < 1) throw InputError("layer_dims: widths must be positive");
  }
  const Index layers = layer_count();
  if (split_layer < 1 || static_cast<Index>(split_layer) >= layers) {
    throw InputError("L_c: split layer must satisfy 1 <= L_c < L (got L_c=" +
                     std::to_string(split_layer) + ", L=" + std::to_string(layers) + ")");
  }
  if (!activations.empty() && static_cast<Index>(activations.size()) != layers) {
    throw InputError("activations: need one entry per layer");
  }
}

std::vector<DenseLayer> build_layers(const SplitModelConfig& model, std::uint64_t seed,
                                     Index first, Index last) {
  std::vector<DenseLayer> layers;
  layers.reserve(static_cast<std::size_t>(last - first));
  for (Index l = first; l < last; ++l) {
    Rng rng = derive_rng(seed, stream::kInit, static_cast<std::uint64_t>(l));
    layers.push_back(make_dense_layer(model.layer_dims[static_cast<std::size_t>(l)],
                                      model.layer_dims[static_cast<std::size_t>(l + 1)],
                                      model.activation_of(l), rng));
  }
  return layers;
}

double ClientState::mean_weight_sparsity() const {
  if (layers.empty()) return 0.0;
  double total = 0.0;
  for (const DenseLayer& layer : layers) total += tensor_sparsity(layer.weights);
  return total / static_cast<double>(layers.size());
}

SmashedWire smashed_to_wire(const SmashedData& data, std::uint32_t round,
                            std::uint16_t client_id) {
  SmashedWire msg;
  msg.header.round = round;
  msg.header.client_id = client_id;
  msg.header.msg_type = static_cast<std::uint16_t>(MsgType::kSmashedData);
  msg.kept_row_indices = data.kept_row_indices;
  msg.kept_rows = data.kept_rows.cast<float>();
  msg.labels.reserve(data.labels.size());
  for (int label : data.labels) msg.labels.push_back(static_cast<std::uint16_t>(label));
  return msg;
}

ClientForwardResult client_forward(const ClientState& client, const Matrix& batch_x,
                                   const Labels& batch_y, const DropoutSpec& dropout,
                                   Rng& dropout_rng) {
  if (batch_x.rows() == 0) throw InputError("client_forward: empty batch");
  if (batch_x.rows() != static_cast<Index>(batch_y.size())) {
    throw DimensionError("client_forward: one label per batch row required");
  }

  ClientForwardResult result;
  result.cache = stack_forward(client.layers, batch_x);
  result.batch_labels = batch_y;

  DropoutResult drop = dropout_forward(result.cache.output, dropout, dropout_rng);
  result.keep_mask = drop.keep_mask;

  const Index dim = drop.dropped.cols();
  Index kept = 0;
  for (std::uint8_t k : drop.keep_mask) kept += k;

  SmashedData& smashed = result.smashed;
  smashed.batch_rows = batch_x.rows();
  smashed.kept_row_indices.reserve(static_cast<std::size_t>(kept));
  smashed.kept_rows.resize(kept, dim);
  smashed.labels.reserve(static_cast<std::size_t>(kept));
  Index out_row = 0;
  for (Index i = 0; i < batch_x.rows(); ++i) {
    if (!drop.keep_mask[static_cast<std::size_t>(i)]) continue;
    smashed.kept_row_indices.push_back(static_cast<std::uint32_t>(i));
    smashed.kept_rows.row(out_row++) = drop.dropped.row(i);
    smashed.labels.push_back(batch_y[static_cast<std::size_t>(i)]);
  }
  smashed.payload_bytes = smashed_payload_bytes(static_cast<std::uint64_t>(kept),
                                                static_cast<std::uint64_t>(dim));
  return result;
}

ServerRoundResult server_round(ServerState& server, const std::vector<SmashedData>& smashed,
                               double eta) {
  if (smashed.empty()) throw InputError("server_round: need at least one client");
  for (const SmashedData& s : smashed) validate_smashed(server.layers, s);

  const auto clients = static_cast<int>(smashed.size());
  std::vector<Matrix> dw_sum;
  std::vector<Vector> db_sum;
  dw_sum.reserve(server.layers.size());
  db_sum.reserve(server.layers.size());
  for (const DenseLayer& layer : server.layers) {
    dw_sum.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    db_sum.push_back(Vector::Zero(layer.bias.size()));
  }

  ServerRoundResult result;
  result.act_grads_kept.reserve(smashed.size());
  result.client_loss.reserve(smashed.size());
  for (const SmashedData& s : smashed) {
    ServerPass pass = run_server_pass(server.layers, s);
    result.act_grads_kept.push_back(std::move(pass.act_grads_kept));
    result.client_loss.push_back(pass.loss);
    if (pass.grads.empty()) continue;  // no kept rows, zero contribution
    for (std::size_t l = 0; l < server.layers.size(); ++l) {
      dw_sum[l] += pass.grads[l].d_weights;
      db_sum[l] += pass.grads[l].d_bias;
    }
  }

  const double scale = eta / static_cast<double>(clients);
  for (std::size_t l = 0; l < server.layers.size(); ++l) {
    server.layers[l].weights -= scale * dw_sum[l];
    server.layers[l].bias -= scale * db_sum[l];
  }
  return result;
}

std::vector<DenseLayer> server_round_replicated(const ServerState& server,
                                                const std::vector<SmashedData>& smashed,
                                                double eta) {
  if (smashed.empty()) throw InputError("server_round_replicated: need at least one client");
  for (const SmashedData& s : smashed) validate_smashed(server.layers, s);

  std::vector<std::vector<DenseLayer>> replicas;
  replicas.reserve(smashed.size());
  for (const SmashedData& s : smashed) {
    ServerPass pass = run_server_pass(server.layers, s);
    std::vector<DenseLayer> replica = server.layers;
    if (!pass.grads.empty()) {
      for (std::size_t l = 0; l < replica.size(); ++l) {
        replica[l].weights -= eta * pass.grads[l].d_weights;
        replica[l].bias -= eta * pass.grads[l].d_bias;
      }
    }
    replicas.push_back(std::move(replica));
  }

  std::vector<DenseLayer> mean = replicas.front();
  for (std::size_t k = 1; k < replicas.size(); ++k) {
    for (std::size_t l = 0; l < mean.size(); ++l) {
      mean[l].weights += replicas[k][l].weights;
      mean[l].bias += replicas[k][l].bias;
    }
  }
  const double inv = 1.0 / static_cast<double>(replicas.size());
  for (DenseLayer& layer : mean) {
    layer.weights *= inv;
    layer.bias *= inv;
  }
  return mean;
}

ClientUpdateStats client_update(ClientState& client, const ClientForwardResult& fwd,
                                const Matrix& act_grads_kept, int t,
                                const SparsitySchedule& schedule, const QuantizerSpec& qspec,
                                const DropoutSpec& dropout, double eta, Rng& quant_rng) {
  const SmashedData& smashed = fwd.smashed;
  const auto kept = static_cast<Index>(smashed.kept_row_indices.size());
  if (act_grads_kept.rows() != kept) {
    throw DimensionError("client_update: activation grads must cover exactly the kept rows");
  }
  const Index split_dim = client.layers.back().out_dim();
  if (kept > 0 && act_grads_kept.cols() != split_dim) {
    throw DimensionError("client_update: activation grad width mismatch");
  }

  Matrix d_split = Matrix::Zero(smashed.batch_rows, split_dim);
  for (Index i = 0; i < kept; ++i) {
    d_split.row(static_cast<Index>(smashed.kept_row_indices[static_cast<std::size_t>(i)])) =
        act_grads_kept.row(i);
  }
  Matrix upstream = dropout_backward(d_split, fwd.keep_mask, dropout);
  StackGrads grads = stack_backward(client.layers, fwd.cache, upstream);

  const double rho_t = target_sparsity(schedule, t);
  ClientUpdateStats stats;
  stats.layer_pruned.assign(client.layers.size(), 0);
  stats.grad_sq_norm.resize(client.layers.size());
  stats.grad_range.resize(client.layers.size());
  stats.weight_sq_norm.resize(client.layers.size());

  for (std::size_t l = 0; l < client.layers.size(); ++l) {
    DenseLayer& layer = client.layers[l];
    const LayerGrads& g = grads.per_layer[l];
    stats.grad_sq_norm[l] = g.d_weights.squaredNorm() + g.d_bias.squaredNorm();

    if (tensor_sparsity(layer.weights) < rho_t) {
      Matrix scores = importance(layer.weights, g.d_weights);
      client.masks[l] = build_mask(scores, rho_t, client.masks[l]);
      layer.weights = apply_mask(client.masks[l], layer.weights);
      stats.layer_pruned[l] = 1;
    }

    Matrix masked_grad = apply_mask(client.masks[l], g.d_weights);

    double g_min = std::numeric_limits<double>::infinity();
    double g_max = 0.0;
    for (Index i = 0; i < masked_grad.size(); ++i) {
      const double a = std::abs(masked_grad.data()[i]);
      if (a == 0.0) continue;
      g_min = std::min(g_min, a);
      g_max = std::max(g_max, a);
    }
    stats.grad_range[l] = g_max > g_min ? g_max - g_min : 0.0;

    Matrix quantized = qspec.enabled() ? quantize(masked_grad, qspec, quant_rng)
                                       : std::move(masked_grad);
    layer.weights -= eta * quantized;
    layer.bias -= eta * g.d_bias;
    stats.weight_sq_norm[l] = layer.weights.squaredNorm() + layer.bias.squaredNorm();
  }
  return stats;
}

std::vector<DenseLayer> aggregate_clients(const std::vector<ClientState>& clients) {
  if (clients.empty()) throw InputError("aggregate_clients: need at least one client");
  std::vector<DenseLayer> mean = clients.front().layers;
  for (std::size_t k = 1; k < clients.size(); ++k) {
    if (clients[k].layers.size() != mean.size()) {
      throw DimensionError("aggregate_clients: clients have different layer counts");
    }
    for (std::size_t l = 0; l < mean.size(); ++l) {
      mean[l].weights += clients[k].layers[l].weights;
      mean[l].bias += clients[k].layers[l].bias;
    }
  }
  const double inv = 1.0 / static_cast<double>(clients.size());
  for (DenseLayer& layer : mean) {
    layer.weights *= inv;
    layer.bias *= inv;
  }
  return mean;
}

void install_aggregate(std::vector<ClientState>& clients,
                       const std::vector<DenseLayer>& aggregate) {
  for (ClientState& client : clients) {
    client.layers = aggregate;
    for (std::size_t l = 0; l < client.masks.size(); ++l) {
      client.masks[l] = PruneMask::ones(aggregate[l].weights.rows(),
                                        aggregate[l].weights.cols());
    }
  }
}

void ExperimentSetup::validate() const {
  model.validate();
  if (clients < 1) throw InputError("K: need at least one client");
  if (rounds < 1) throw InputError("T: need at least one round");
  if (agg_interval < 1) throw InputError("I: aggregation interval must be >= 1");
  if (rho_f < 0.0 || rho_f >= 1.0) throw InputError("rho_f: must be in [0, 1)");
  if (quant_bits < 0 || quant_bits > 32) {
    throw InputError("q: must be 0 (off) or in [1, 32]");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw InputError("p: must be in [0, 1)");
  if (!(eta > 0.0)) throw InputError("eta: must be > 0");
  if (batch < 1) throw InputError("batch: must be >= 1");
  const int c = effective_classes();
  if (c < 2 || static_cast<Index>(c) > model.output_dim()) {
    throw InputError("classes: must be in [2, output width]");
  }
  if (train_samples < clients) throw InputError("train_samples: need at least one per client");
  if (eval_samples < 1) throw InputError("eval_samples: must be >= 1");
  if (!(blob_sigma > 0.0)) throw InputError("blob_sigma: must be > 0");
  if (!(bandwidth_hz > 0.0)) throw InputError("bandwidth_hz: must be > 0");
  if (!distances_km.empty() && distances_km.size() != 1 &&
      distances_km.size() != static_cast<std::size_t>(clients)) {
    throw InputError("d_meters: give one distance or one per client");
  }
  for (double d : distances_km) {
    if (!(d > 0.0)) throw InputError("d_meters: distances must be > 0");
  }
  if (snapshot_every < 1) throw InputError("snapshot_every: must be >= 1");
}

World make_world(const ExperimentSetup& setup) {
  setup.validate();

  World world;
  world.setup = setup;
  world.schedule = SparsitySchedule{setup.rho_f, setup.rounds};
  world.qspec = QuantizerSpec{setup.quant_bits};
  world.dropout = DropoutSpec{setup.dropout_p};

  BlobSpec blob;
  blob.classes = setup.effective_classes();
  blob.dim = setup.model.input_dim();
  blob.train_samples = setup.train_samples;
  blob.eval_samples = setup.eval_samples;
  blob.sigma = setup.blob_sigma;
  BlobData data = make_blobs(blob, setup.seed);
  world.eval_set = std::move(data.eval);
  std::vector<Dataset> shards = iid_partition(data.train, setup.clients, setup.seed);

  const Index split = setup.model.split_layer;
  const Index layers = setup.model.layer_count();
  world.clients.resize(static_cast<std::size_t>(setup.clients));
  for (int k = 0; k < setup.clients; ++k) {
    ClientState& client = world.clients[static_cast<std::size_t>(k)];
    client.id = k;
    client.layers = build_layers(setup.model, setup.seed, 0, split);
    client.masks.reserve(client.layers.size());
    for (const DenseLayer& layer : client.layers) {
      client.masks.push_back(PruneMask::ones(layer.weights.rows(), layer.weights.cols()));
    }
    client.shard = std::move(shards[static_cast<std::size_t>(k)]);
  }
  world.server.layers = build_layers(setup.model, setup.seed, split, layers);

  world.uplink_rate_bps.resize(static_cast<std::size_t>(setup.clients));
  world.downlink_rate_bps.resize(static_cast<std::size_t>(setup.clients));
  for (int k = 0; k < setup.clients; ++k) {
    double d_km;
    if (setup.distances_km.empty()) {
      Rng rng = derive_rng(setup.seed, stream::kDistance, static_cast<std::uint64_t>(k));
      d_km = rng.uniform(0.1, 0.3);
    } else if (setup.distances_km.size() == 1) {
      d_km = setup.distances_km.front();
    } else {
      d_km = setup.distances_km[static_cast<std::size_t>(k)];
    }
    LinkParams up{d_km, setup.tx_client_dbm, setup.bandwidth_hz, setup.noise_dbm_per_hz};
    LinkParams down{d_km, setup.tx_server_dbm, setup.bandwidth_hz, setup.noise_dbm_per_hz};
    world.uplink_rate_bps[static_cast<std::size_t>(k)] = link_rate_bps(up);
    world.downlink_rate_bps[static_cast<std::size_t>(k)] = link_rate_bps(down);
  }

  if (!setup.artifacts_dir.empty()) {
    world.recorder.enabled = true;
    world.recorder.dir = setup.artifacts_dir;
    world.recorder.every = setup.snapshot_every;
    world.recorder.max_g_sq.assign(static_cast<std::size_t>(split), 0.0);
    world.recorder.max_w_sq.assign(static_cast<std::size_t>(layers), 0.0);
    world.recorder.max_grad_range.assign(static_cast<std::size_t>(split), 0.0);
    std::filesystem::create_directories(world.recorder.dir);
  }
  return world;
}

std::pair<Matrix, Labels> draw_batch(ClientState& client, Index batch, std::uint64_t seed,
                                     int round) {
  const Index n = client.shard.size();
  if (n == 0) throw InputError("draw_batch: client shard is empty");
  if (client.cursor >= client.order.size()) {
    client.order.resize(static_cast<std::size_t>(n));
    std::iota(client.order.begin(), client.order.end(), Index{0});
    Rng rng = derive_rng(seed, stream::kShuffle, static_cast<std::uint64_t>(client.id),
                         static_cast<std::uint64_t>(round));
    rng.shuffle(client.order);
    client.cursor = 0;
  }
  const Index take = std::min<Index>(batch, n - static_cast<Index>(client.cursor));
  Matrix bx(take, client.shard.features.cols());
  Labels by(static_cast<std::size_t>(take));
  for (Index i = 0; i < take; ++i) {
    const Index src = client.order[client.cursor + static_cast<std::size_t>(i)];
    bx.row(i) = client.shard.features.row(src);
    by[static_cast<std::size_t>(i)] = client.shard.labels[static_cast<std::size_t>(src)];
  }
  client.cursor += static_cast<std::size_t>(take);
  return {std::move(bx), std::move(by)};
}

double RoundMetrics::mean_sparsity() const {
  if (client_sparsity.empty()) return 0.0;
  return std::accumulate(client_sparsity.begin(), client_sparsity.end(), 0.0) /
         static_cast<double>(client_sparsity.size());
}

std::uint64_t RoundMetrics::total_uplink_bytes() const {
  return std::accumulate(uplink_bytes.begin(), uplink_bytes.end(), std::uint64_t{0});
}

std::uint64_t RoundMetrics::total_downlink_bytes() const {
  return std::accumulate(downlink_bytes.begin(), downlink_bytes.end(), std::uint64_t{0});
}

RoundMetrics run_round(World& world, int t) {
  const ExperimentSetup& setup = world.setup;
  const auto clients = static_cast<std::size_t>(setup.clients);

  std::vector<ClientForwardResult> fwd(clients);
  std::vector<SmashedData> smashed(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    auto [bx, by] = draw_batch(world.clients[k], setup.batch, setup.seed, t);
    Rng drop_rng = derive_rng(setup.seed, stream::kDropout, static_cast<std::uint64_t>(k),
                              static_cast<std::uint64_t>(t));
    fwd[k] = client_forward(world.clients[k], bx, by, world.dropout, drop_rng);
    smashed[k] = fwd[k].smashed;
  }

  ServerRoundResult server_result = server_round(world.server, smashed, setup.eta);

  RoundMetrics metrics;
  metrics.round = t;
  metrics.train_loss =
      std::accumulate(server_result.client_loss.begin(), server_result.client_loss.end(), 0.0) /
      static_cast<double>(clients);

  for (std::size_t k = 0; k < clients; ++k) {
    Rng quant_rng = derive_rng(setup.seed, stream::kQuant, static_cast<std::uint64_t>(k),
                               static_cast<std::uint64_t>(t));
    ClientUpdateStats stats =
        client_update(world.clients[k], fwd[k], server_result.act_grads_kept[k], t,
                      world.schedule, world.qspec, world.dropout, setup.eta, quant_rng);
    if (world.recorder.enabled) {
      for (std::size_t l = 0; l < stats.grad_sq_norm.size(); ++l) {
        world.recorder.max_g_sq[l] = std::max(world.recorder.max_g_sq[l], stats.grad_sq_norm[l]);
        world.recorder.max_grad_range[l] =
            std::max(world.recorder.max_grad_range[l], stats.grad_range[l]);
      }
    }
  }

  // Byte accounting: smashed uplink + activation-grad downlink every round,
  // model upload/broadcast on aggregation rounds.
  const auto split_dim = static_cast<std::uint64_t>(setup.model.split_dim());
  metrics.uplink_bytes.resize(clients);
  metrics.downlink_bytes.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    const auto kept = static_cast<std::uint64_t>(smashed[k].kept_row_indices.size());
    metrics.uplink_bytes[k] = smashed[k].payload_bytes;
    metrics.downlink_bytes[k] = act_grads_payload_bytes(kept, split_dim);
  }

  const bool aggregation_round = t % setup.agg_interval == 0;
  if (aggregation_round) {
    std::vector<DenseLayer> mean = aggregate_clients(world.clients);
    const std::uint64_t model_bytes = model_message_bytes(mean);
    install_aggregate(world.clients, mean);
    for (std::size_t k = 0; k < clients; ++k) {
      metrics.uplink_bytes[k] += model_bytes;
      metrics.downlink_bytes[k] += model_bytes;
    }
  }

  metrics.uplink_latency_s.resize(clients);
  metrics.downlink_latency_s.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    metrics.uplink_latency_s[k] = latency_s(metrics.uplink_bytes[k], world.uplink_rate_bps[k]);
    metrics.downlink_latency_s[k] =
        latency_s(metrics.downlink_bytes[k], world.downlink_rate_bps[k]);
  }
  metrics.comm_latency_s = compose_latency(metrics.uplink_latency_s, setup.latency_comp) +
                           compose_latency(metrics.downlink_latency_s, setup.latency_comp);
  world.cumulative_latency_s += metrics.comm_latency_s;
  metrics.cumulative_latency_s = world.cumulative_latency_s;

  metrics.client_sparsity.resize(clients);
  double accuracy = 0.0;
  for (std::size_t k = 0; k < clients; ++k) {
    metrics.client_sparsity[k] = world.clients[k].mean_weight_sparsity();
    accuracy += evaluate_accuracy(join_model(world.clients[k].layers, world.server.layers),
                                  world.eval_set);
  }
  metrics.eval_accuracy = accuracy / static_cast<double>(clients);

  if (world.recorder.enabled) {
    for (std::size_t k = 0; k < clients; ++k) {
      const auto& layers = world.clients[k].layers;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const double w_sq = layers[l].weights.squaredNorm() + layers[l].bias.squaredNorm();
        world.recorder.max_w_sq[l] = std::max(world.recorder.max_w_sq[l], w_sq);
      }
    }
    const auto split = static_cast<std::size_t>(setup.model.split_layer);
    for (std::size_t l = 0; l < world.server.layers.size(); ++l) {
      const DenseLayer& layer = world.server.layers[l];
      const double w_sq = layer.weights.squaredNorm() + layer.bias.squaredNorm();
      world.recorder.max_w_sq[split + l] = std::max(world.recorder.max_w_sq[split + l], w_sq);
    }
    if (t % world.recorder.every == 0) {
      for (std::size_t k = 0; k < clients; ++k) {
        MessageHeader header;
        header.round = static_cast<std::uint32_t>(t);
        header.client_id = static_cast<std::uint16_t>(k);
        header.msg_type = static_cast<std::uint16_t>(MsgType::kModelUpload);
        ModelWire msg = model_to_wire(header, world.clients[k].layers);
        write_file(world.recorder.dir + "/" + snapshot_name(t, static_cast<int>(k)),
                   encode_model(msg));
      }
    }
  }
  return metrics;
}

RunResult run_experiment(const ExperimentSetup& setup) {
  World world = make_world(setup);
  RunResult result;
  result.rounds.reserve(static_cast<std::size_t>(setup.rounds));
  for (int t = 1; t <= setup.rounds; ++t) result.rounds.push_back(run_round(world, t));

  if (world.recorder.enabled) {
    nlohmann::json info;
    info["clients"] = setup.clients;
    info["rounds"] = setup.rounds;
    info["agg_interval"] = setup.agg_interval;
    info["eta"] = setup.eta;
    info["rho_f"] = setup.rho_f;
    info["quant_bits"] = setup.quant_bits;
    info["dropout_p"] = setup.dropout_p;
    info["split_layer"] = setup.model.split_layer;
    info["layer_dims"] = setup.model.layer_dims;
    info["seed"] = setup.seed;
    info["snapshot_every"] = world.recorder.every;
    info["max_g_sq"] = world.recorder.max_g_sq;
    info["max_w_sq"] = world.recorder.max_w_sq;
    info["max_grad_range"] = world.recorder.max_grad_range;
    std::ofstream out(world.recorder.dir + "/runinfo.json");
    if (!out) throw InputError("cannot write " + world.recorder.dir + "/runinfo.json");
    out << info.dump(2) << "\n";
  }
  return result;
}

std::vector<DenseLayer> join_model(const std::vector<DenseLayer>& client_layers,
                                   const std::vector<DenseLayer>& server_layers) {
  std::vector<DenseLayer> full = client_layers;
  full.insert(full.end(), server_layers.begin(), server_layers.end());
  return full;
}

double evaluate_accuracy(const std::vector<DenseLayer>& layers, const Dataset& data) {
  if (data.size() == 0) throw InputError("evaluate_accuracy: empty dataset");
  Matrix x = data.features;
  for (const DenseLayer& layer : layers) x = dense_forward(layer, x);
  Index correct = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    Index best;
    x.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "round,loss,accuracy,mean_sparsity,uplink_bytes,downlink_bytes,"
         "comm_latency_s,cumulative_latency_s\n";
  char line[512];
  for (const RoundMetrics& m : series) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%llu,%llu,%.10g,%.10g\n", m.round,
                  m.train_loss, m.eval_accuracy, m.mean_sparsity(),
                  static_cast<unsigned long long>(m.total_uplink_bytes()),
                  static_cast<unsigned long long>(m.total_downlink_bytes()), m.comm_latency_s,
                  m.cumulative_latency_s);
    out << line;
  }
}

}  // namespace fedsl
