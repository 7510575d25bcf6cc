#include "fedsl/analysis.hpp"

#include "fedsl/compression.hpp"
#include "fedsl/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace fedsl {

void BoundParams::validate() const {
  if (!(beta > 0.0)) throw InputError("beta: must be > 0");
  if (!(eta > 0.0) || eta > 1.0 / (2.0 * beta)) {
    throw InputError("eta: the step-size hypothesis requires 0 < eta <= 1/(2*beta)");
  }
  if (clients < 1) throw InputError("K: must be >= 1");
  if (agg_interval < 1) throw InputError("I: must be >= 1");
  if (rounds < 1) throw InputError("T: must be >= 1");
  if (rho_f < 0.0 || rho_f >= 1.0) throw InputError("rho_f: must be in [0, 1)");
  if (theta < 0.0) throw InputError("theta: must be >= 0");
  const Index layers = layer_count();
  if (layers < 1) throw InputError("sigma_sq: need at least one layer");
  if (static_cast<Index>(g_sq.size()) != layers || static_cast<Index>(w_sq.size()) != layers) {
    throw InputError("G_sq/W_sq: per-layer arrays must all have length L");
  }
  if (split_layer < 1 || static_cast<Index>(split_layer) >= layers) {
    throw InputError("L_c: must satisfy 1 <= L_c < L");
  }
  if (static_cast<Index>(j_sq.size()) != static_cast<Index>(split_layer)) {
    throw InputError("J_sq: need one entry per client-side layer (L_c entries)");
  }
  auto nonneg = [](const std::vector<double>& v, const char* name) {
    for (double x : v) {
      if (x < 0.0) throw InputError(std::string(name) + ": entries must be >= 0");
    }
  };
  nonneg(sigma_sq, "sigma_sq");
  nonneg(g_sq, "G_sq");
  nonneg(w_sq, "W_sq");
  nonneg(j_sq, "J_sq");
}

double theorem1_rhs(const BoundParams& p) {
  p.validate();
  const double beta = p.beta;
  const double eta = p.eta;
  const auto k = static_cast<double>(p.clients);
  const auto i_plus_1 = static_cast<double>(p.agg_interval) + 1.0;
  const double beta_sq_term = 4.0 * beta * beta + 1.0;

  double rhs = 2.0 * p.theta / (eta * static_cast<double>(p.rounds));

  for (Index l = 0; l < p.layer_count(); ++l) {
    const auto idx = static_cast<std::size_t>(l);
    rhs += (beta * eta / k) * p.sigma_sq[idx];
    rhs += p.g_sq[idx] / eta;
    rhs += 4.0 * beta_sq_term / eta * p.w_sq[idx];
  }

  for (Index l = 0; l < static_cast<Index>(p.split_layer); ++l) {
    const auto idx = static_cast<std::size_t>(l);
    rhs += (beta * eta / k) * p.sigma_sq[idx];
    rhs += beta_sq_term * (8.0 * eta * eta * i_plus_1 * i_plus_1 + 1.0) / eta * p.g_sq[idx];
    rhs += p.rho_f * (4.0 * k * beta * beta + k + beta) / (k * eta) * p.w_sq[idx];
    rhs += 4.0 / eta * p.j_sq[idx];
  }
  return rhs;
}

double quantizer_J(int q, double g_min, double g_max, Index dimension) {
  if (q < 1) throw InputError("quantizer_J: q must be >= 1");
  if (g_max < g_min) throw InputError("quantizer_J: g_max must be >= g_min");
  if (dimension < 1) throw InputError("quantizer_J: dimension must be >= 1");
  const double range = g_max - g_min;
  const double delta_sq = static_cast<double>(dimension) / 4.0 * range * range;
  const double levels = std::pow(2.0, q) - 1.0;
  return delta_sq / (levels * levels);
}

double sparsity_schedule_sum(double rho_f, int T) {
  if (T < 1) throw InputError("sparsity_schedule_sum: T must be >= 1");
  double sum = 0.0;
  for (int t = 1; t <= T; ++t) {
    const double x = static_cast<double>(t) / static_cast<double>(T) - 1.0;
    sum += rho_f + x * x * x * rho_f;
  }
  return sum;
}

bool lemma1_check(double rho_f, int T) {
  if (rho_f <= 0.0 || rho_f >= 1.0) throw InputError("lemma1_check: rho_f must be in (0, 1)");
  return sparsity_schedule_sum(rho_f, T) < static_cast<double>(T) * rho_f;
}

RunArtifacts load_run_artifacts(const std::string& dir) {
  const std::string info_path = dir + "/runinfo.json";
  std::ifstream in(info_path);
  if (!in) throw InputError("cannot read " + info_path);
  nlohmann::json info = nlohmann::json::parse(in);

  RunArtifacts art;
  art.clients = info.at("clients").get<int>();
  art.rounds = info.at("rounds").get<int>();
  art.agg_interval = info.at("agg_interval").get<int>();
  art.split_layer = info.at("split_layer").get<int>();
  art.eta = info.at("eta").get<double>();
  art.rho_f = info.at("rho_f").get<double>();
  art.snapshot_every = info.at("snapshot_every").get<int>();
  art.layer_dims = info.at("layer_dims").get<std::vector<Index>>();
  art.max_g_sq = info.at("max_g_sq").get<std::vector<double>>();
  art.max_w_sq = info.at("max_w_sq").get<std::vector<double>>();
  art.max_grad_range = info.at("max_grad_range").get<std::vector<double>>();

  const auto layer_count = static_cast<std::size_t>(art.split_layer);
  for (int t = art.snapshot_every; t <= art.rounds; t += art.snapshot_every) {
    std::vector<ModelWire> round_models;
    round_models.reserve(static_cast<std::size_t>(art.clients));
    for (int k = 0; k < art.clients; ++k) {
      char name[64];
      std::snprintf(name, sizeof(name), "/round_%05d_client_%03d.bin", t, k);
      const std::string path = dir + name;
      std::ifstream file(path, std::ios::binary);
      if (!file) throw InputError("missing snapshot " + path);
      ByteBuffer bytes((std::istreambuf_iterator<char>(file)),
                       std::istreambuf_iterator<char>());
      round_models.push_back(decode_model(bytes, layer_count));
    }
    art.snapshot_rounds.push_back(t);
    art.snapshots.push_back(std::move(round_models));
  }
  if (art.snapshots.empty()) throw InputError("no snapshots found in " + dir);
  return art;
}

Lemma2Report lemma2_empirical(const RunArtifacts& art, double constant_scale) {
  if (!(constant_scale > 0.0)) throw InputError("lemma2: constant scale must be > 0");
  if (art.snapshots.empty()) throw InputError("lemma2: no snapshots to check");

  const auto client_layers = static_cast<std::size_t>(art.split_layer);
  const std::size_t all_layers = art.max_w_sq.size();

  Lemma2Report report;
  report.constant_scale = constant_scale;

  // Premise: the (scaled) constants must still dominate the run's recorded
  // per-layer maxima. Halved constants fail here by construction.
  for (std::size_t l = 0; l < all_layers; ++l) {
    if (constant_scale * art.max_w_sq[l] < art.max_w_sq[l]) ++report.premise_violations;
  }
  for (std::size_t l = 0; l < client_layers; ++l) {
    if (constant_scale * art.max_g_sq[l] < art.max_g_sq[l]) ++report.premise_violations;
  }

  double g_client_sum = 0.0;
  for (std::size_t l = 0; l < client_layers; ++l) g_client_sum += art.max_g_sq[l];
  double w_all_sum = 0.0;
  for (std::size_t l = 0; l < all_layers; ++l) w_all_sum += art.max_w_sq[l];
  double w_client_sum = 0.0;
  for (std::size_t l = 0; l < client_layers; ++l) w_client_sum += art.max_w_sq[l];

  const double eta = art.eta;
  const auto i_plus_1 = static_cast<double>(art.agg_interval) + 1.0;
  const SparsitySchedule schedule{art.rho_f, art.rounds};

  for (std::size_t r = 0; r < art.snapshots.size(); ++r) {
    const int t = art.snapshot_rounds[r];
    const auto& models = art.snapshots[r];

    // Snapshot norms must also stay under the scaled W constants; tolerance
    // covers the f32 rounding of the dumps.
    for (std::size_t k = 0; k < models.size(); ++k) {
      for (std::size_t l = 0; l < client_layers; ++l) {
        const double w_sq = models[k].weights[l].cast<double>().squaredNorm() +
                            models[k].biases[l].cast<double>().squaredNorm();
        if (w_sq > constant_scale * art.max_w_sq[l] * (1.0 + 1e-5)) {
          ++report.premise_violations;
        }
      }
    }

    const double rho_t = target_sparsity(schedule, t);
    const double rhs = constant_scale * (8.0 * eta * eta * i_plus_1 * i_plus_1 * g_client_sum +
                                         4.0 * w_all_sum + 2.0 * rho_t * w_client_sum);

    Lemma2RoundCheck check;
    check.round = t;
    for (std::size_t k = 0; k < models.size(); ++k) {
      double lhs = 0.0;
      for (std::size_t l = 0; l < client_layers; ++l) {
        MatrixF w_mean = models[0].weights[l];
        VectorF b_mean = models[0].biases[l];
        for (std::size_t j = 1; j < models.size(); ++j) {
          w_mean += models[j].weights[l];
          b_mean += models[j].biases[l];
        }
        const float inv = 1.0f / static_cast<float>(models.size());
        w_mean *= inv;
        b_mean *= inv;
        lhs += (w_mean.cast<double>() - models[k].weights[l].cast<double>()).squaredNorm();
        lhs += (b_mean.cast<double>() - models[k].biases[l].cast<double>()).squaredNorm();
      }
      const double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? 1e30 : 0.0);
      if (lhs > rhs) ++check.bound_violations;
      if (ratio > check.max_ratio) check.max_ratio = ratio;
      if (ratio > report.max_ratio) {
        report.max_ratio = ratio;
        report.max_ratio_round = t;
        report.max_ratio_client = static_cast<int>(k);
      }
    }
    report.bound_violations += check.bound_violations;
    report.per_round.push_back(check);
  }
  return report;
}

void write_lemma2_report(const std::string& path, const Lemma2Report& report) {
  nlohmann::json out;
  out["constant_scale"] = report.constant_scale;
  out["max_ratio"] = report.max_ratio;
  out["max_ratio_round"] = report.max_ratio_round;
  out["max_ratio_client"] = report.max_ratio_client;
  out["bound_violations"] = report.bound_violations;
  out["premise_violations"] = report.premise_violations;
  out["total_violations"] = report.total_violations();
  nlohmann::json rounds = nlohmann::json::array();
  for (const Lemma2RoundCheck& check : report.per_round) {
    rounds.push_back({{"round", check.round},
                      {"max_ratio", check.max_ratio},
                      {"bound_violations", check.bound_violations}});
  }
  out["per_round"] = std::move(rounds);

  std::ofstream file(path, std::ios::trunc);
  if (!file) throw InputError("cannot open " + path + " for writing");
  file << out.dump(2) << "\n";
}

}  // namespace fedsl
