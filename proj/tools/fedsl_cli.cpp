// Experiment runner for the lightweight federated split learning simulator.

#include "fedsl/analysis.hpp"
#include "fedsl/config.hpp"
#include "fedsl/engine.hpp"
#include "fedsl/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using fedsl::ExperimentSetup;
using fedsl::RunResult;

struct RunOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

ExperimentSetup load_setup(const RunOptions& opts) {
  fedsl::ExperimentConfig config = fedsl::parse_config_file(opts.config_path);
  config.setup.seed = opts.seed;  // --seed is mandatory and wins over the file
  return config.setup;
}

void write_run_report(const std::string& path, const ExperimentSetup& setup,
                      const RunResult& result) {
  nlohmann::json report;
  report["clients"] = setup.clients;
  report["rounds"] = setup.rounds;
  report["agg_interval"] = setup.agg_interval;
  report["rho_f"] = setup.rho_f;
  report["quant_bits"] = setup.quant_bits;
  report["dropout_p"] = setup.dropout_p;
  report["eta"] = setup.eta;
  report["batch"] = setup.batch;
  report["seed"] = setup.seed;
  report["split_layer"] = setup.model.split_layer;
  report["layer_dims"] = setup.model.layer_dims;
  const fedsl::RoundMetrics& last = result.rounds.back();
  report["final_loss"] = last.train_loss;
  report["final_accuracy"] = last.eval_accuracy;
  report["final_mean_sparsity"] = last.mean_sparsity();
  report["cumulative_latency_s"] = last.cumulative_latency_s;
  std::uint64_t up = 0;
  std::uint64_t down = 0;
  for (const fedsl::RoundMetrics& m : result.rounds) {
    up += m.total_uplink_bytes();
    down += m.total_downlink_bytes();
  }
  report["total_uplink_bytes"] = up;
  report["total_downlink_bytes"] = down;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw fedsl::InputError("cannot open " + path + " for writing");
  out << report.dump(2) << "\n";
}

int run_single(const RunOptions& opts) {
  ExperimentSetup setup = load_setup(opts);
  std::filesystem::create_directories(opts.out_dir);
  RunResult result = fedsl::run_experiment(setup);
  fedsl::write_metrics_csv(opts.out_dir + "/metrics.csv", result.rounds);
  write_run_report(opts.out_dir + "/report.json", setup, result);
  std::cout << "wrote " << opts.out_dir << "/metrics.csv and report.json\n";
  return 0;
}

std::string sweep_tag(const std::string& name, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%g", name.c_str(), value);
  return buf;
}

// One CSV per setting: <out>/metrics_<name>_<value>.csv
int run_sweep(const RunOptions& opts, const std::string& name,
              const std::vector<double>& values,
              void (*apply)(ExperimentSetup&, double)) {
  ExperimentSetup base = load_setup(opts);
  std::filesystem::create_directories(opts.out_dir);
  for (double value : values) {
    ExperimentSetup setup = base;
    apply(setup, value);
    RunResult result = fedsl::run_experiment(setup);
    const std::string path = opts.out_dir + "/metrics_" + sweep_tag(name, value) + ".csv";
    fedsl::write_metrics_csv(path, result.rounds);
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

void add_run_options(CLI::App* cmd, RunOptions& opts, bool need_config = true) {
  auto* config = cmd->add_option("-c,--config", opts.config_path, "experiment config file");
  if (need_config) config->required();
  cmd->add_option("--seed", opts.seed, "global seed")->required();
  cmd->add_option("-o,--out", opts.out_dir, "output directory");
}

int cmd_bound(const std::string& params_path) {
  fedsl::BoundConfig config = fedsl::parse_bound_file(params_path);
  const fedsl::BoundParams& p = config.params;
  const double rhs = fedsl::theorem1_rhs(p);
  std::printf("theorem1_rhs = %.10g\n", rhs);

  // Forward differences in each knob; the bound should never improve with
  // more pruning, less frequent aggregation or a deeper split.
  std::printf("%-12s %-14s %-14s %s\n", "knob", "rhs", "rhs(next)", "direction");

  fedsl::BoundParams probe = p;
  probe.agg_interval = p.agg_interval + 1;
  double next = fedsl::theorem1_rhs(probe);
  std::printf("%-12s %-14.6g %-14.6g %s\n", "I", rhs, next, next >= rhs ? "+" : "-");

  probe = p;
  probe.rho_f = std::min(0.999, p.rho_f + 0.05);
  next = fedsl::theorem1_rhs(probe);
  std::printf("%-12s %-14.6g %-14.6g %s\n", "rho_f", rhs, next, next >= rhs ? "+" : "-");

  if (p.split_layer + 1 < static_cast<int>(p.layer_count())) {
    probe = p;
    probe.split_layer = p.split_layer + 1;
    probe.j_sq.push_back(probe.j_sq.empty() ? 0.0 : probe.j_sq.back());
    next = fedsl::theorem1_rhs(probe);
    std::printf("%-12s %-14.6g %-14.6g %s\n", "L_c", rhs, next, next >= rhs ? "+" : "-");
  }

  if (config.has_quantizer) {
    probe = p;
    for (std::size_t l = 0; l < probe.j_sq.size(); ++l) {
      probe.j_sq[l] =
          fedsl::quantizer_J(config.q + 1, config.g_min[l], config.g_max[l], config.dims[l]);
    }
    next = fedsl::theorem1_rhs(probe);
    std::printf("%-12s %-14.6g %-14.6g %s\n", "q", rhs, next, next <= rhs ? "-" : "+");
  }
  return 0;
}

int cmd_check_lemma2(const std::string& artifacts_dir, const std::string& out_path,
                     double scale) {
  fedsl::RunArtifacts artifacts = fedsl::load_run_artifacts(artifacts_dir);
  fedsl::Lemma2Report report = fedsl::lemma2_empirical(artifacts, scale);
  fedsl::write_lemma2_report(out_path, report);
  std::printf("max LHS/RHS ratio = %.6g (round %d, client %d)\n", report.max_ratio,
              report.max_ratio_round, report.max_ratio_client);
  std::printf("bound violations = %ld, premise violations = %ld\n", report.bound_violations,
              report.premise_violations);
  std::cout << "wrote " << out_path << "\n";
  return report.total_violations() == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight federated split learning simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "run one experiment; writes metrics.csv, report.json");
  add_run_options(run, run_opts);

  RunOptions prune_opts;
  auto* sweep_prune = app.add_subcommand("sweep-prune", "sweep final sparsity rho_f");
  add_run_options(sweep_prune, prune_opts);
  std::vector<double> prune_values{0.0, 0.35, 0.5, 0.7};
  sweep_prune->add_option("--values", prune_values, "rho_f values");

  RunOptions quant_opts;
  auto* sweep_quant = app.add_subcommand("sweep-quant", "sweep quantizer bits q");
  add_run_options(sweep_quant, quant_opts);
  std::vector<double> quant_values{0, 4, 8};
  sweep_quant->add_option("--values", quant_values, "q values (0 = off)");

  RunOptions agg_opts;
  auto* sweep_agg = app.add_subcommand("sweep-agg", "sweep aggregation interval I");
  add_run_options(sweep_agg, agg_opts);
  std::vector<double> agg_values{1, 5, 10};
  sweep_agg->add_option("--values", agg_values, "I values");

  RunOptions split_opts;
  auto* sweep_split = app.add_subcommand("sweep-split", "sweep split layer L_c");
  add_run_options(sweep_split, split_opts);
  std::vector<double> split_values;
  sweep_split->add_option("--values", split_values, "L_c values (default: all valid)");

  RunOptions client_opts;
  auto* sweep_clients = app.add_subcommand("sweep-clients", "sweep client count K");
  add_run_options(sweep_clients, client_opts);
  std::vector<double> client_values{2, 5, 10};
  sweep_clients->add_option("--values", client_values, "K values");

  RunOptions dropout_opts;
  auto* sweep_dropout = app.add_subcommand("sweep-dropout", "sweep dropout rate p");
  add_run_options(sweep_dropout, dropout_opts);
  std::vector<double> dropout_values{0.0, 0.3, 0.5, 0.7};
  sweep_dropout->add_option("--values", dropout_values, "p values");

  std::string bound_path;
  auto* bound = app.add_subcommand("bound", "evaluate the convergence bound for a params file");
  bound->add_option("params", bound_path, "bound params file")->required();

  std::string artifacts_dir;
  std::string report_path = "lemma2_report.json";
  double scale = 1.0;
  auto* check = app.add_subcommand("check-lemma2", "check the client-drift bound on a run");
  check->add_option("artifacts", artifacts_dir, "artifacts directory from a run")->required();
  check->add_option("-o,--out", report_path, "report path");
  check->add_option("--scale-constants", scale, "scale factor applied to the constants");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_single(run_opts);
    if (*sweep_prune) {
      return run_sweep(prune_opts, "rho_f", prune_values,
                       [](ExperimentSetup& s, double v) { s.rho_f = v; });
    }
    if (*sweep_quant) {
      return run_sweep(quant_opts, "q", quant_values,
                       [](ExperimentSetup& s, double v) { s.quant_bits = static_cast<int>(v); });
    }
    if (*sweep_agg) {
      return run_sweep(agg_opts, "I", agg_values,
                       [](ExperimentSetup& s, double v) { s.agg_interval = static_cast<int>(v); });
    }
    if (*sweep_split) {
      if (split_values.empty()) {
        ExperimentSetup base = load_setup(split_opts);
        for (int lc = 1; lc < static_cast<int>(base.model.layer_count()); ++lc) {
          split_values.push_back(lc);
        }
      }
      return run_sweep(split_opts, "L_c", split_values, [](ExperimentSetup& s, double v) {
        s.model.split_layer = static_cast<int>(v);
      });
    }
    if (*sweep_clients) {
      return run_sweep(client_opts, "K", client_values,
                       [](ExperimentSetup& s, double v) { s.clients = static_cast<int>(v); });
    }
    if (*sweep_dropout) {
      return run_sweep(dropout_opts, "p", dropout_values,
                       [](ExperimentSetup& s, double v) { s.dropout_p = v; });
    }
    if (*bound) return cmd_bound(bound_path);
    if (*check) return cmd_check_lemma2(artifacts_dir, report_path, scale);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
