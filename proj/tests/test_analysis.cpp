#include <doctest.h>

#include "fedsl/analysis.hpp"
#include "fedsl/compression.hpp"
#include "fedsl/engine.hpp"
#include "fedsl/errors.hpp"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>

using namespace fedsl;

namespace {

BoundParams base_params() {
  BoundParams p;
  p.beta = 2.0;
  p.eta = 0.1;  // <= 1/(2*beta) = 0.25
  p.clients = 4;
  p.agg_interval = 5;
  p.rounds = 100;
  p.split_layer = 2;
  p.rho_f = 0.35;
  p.theta = 3.0;
  p.sigma_sq = {0.1, 0.2, 0.3, 0.4};
  p.g_sq = {1.0, 1.5, 2.0, 2.5};
  p.w_sq = {4.0, 3.0, 2.0, 1.0};
  p.j_sq = {0.05, 0.07};
  return p;
}

}  // namespace

TEST_CASE("zero constants leave only the optimality-gap term") {
  BoundParams p = base_params();
  p.rho_f = 0.0;
  p.sigma_sq = {0.0, 0.0, 0.0, 0.0};
  p.g_sq = {0.0, 0.0, 0.0, 0.0};
  p.w_sq = {0.0, 0.0, 0.0, 0.0};
  p.j_sq = {0.0, 0.0};
  CHECK(theorem1_rhs(p) == 2.0 * p.theta / (p.eta * p.rounds));
}

TEST_CASE("bound grows with the aggregation interval") {
  BoundParams p = base_params();
  p.agg_interval = 1;
  double prev = theorem1_rhs(p);
  for (int interval : {2, 5, 10, 20}) {
    p.agg_interval = interval;
    const double rhs = theorem1_rhs(p);
    CHECK(rhs > prev);
    prev = rhs;
  }
}

TEST_CASE("bound grows with the pruning rate and split depth") {
  BoundParams p = base_params();
  const double at_035 = theorem1_rhs(p);
  p.rho_f = 0.7;
  CHECK(theorem1_rhs(p) > at_035);

  p = base_params();
  const double shallow = theorem1_rhs(p);
  p.split_layer = 3;
  p.j_sq = {0.05, 0.07, 0.02};
  CHECK(theorem1_rhs(p) > shallow);
}

TEST_CASE("bound shrinks as quantization gets finer") {
  BoundParams p = base_params();
  const double range = 2.0;
  const Index dim = 64;
  for (std::size_t l = 0; l < p.j_sq.size(); ++l) p.j_sq[l] = quantizer_J(4, 0.0, range, dim);
  const double coarse = theorem1_rhs(p);
  for (std::size_t l = 0; l < p.j_sq.size(); ++l) p.j_sq[l] = quantizer_J(8, 0.0, range, dim);
  CHECK(theorem1_rhs(p) < coarse);
}

TEST_CASE("step-size hypothesis is enforced by name") {
  BoundParams p = base_params();
  p.eta = 0.3;  // > 1/(2*beta)
  CHECK_THROWS_WITH_AS(theorem1_rhs(p), doctest::Contains("1/(2*beta)"), InputError);
}

TEST_CASE("quantizer_J direct evaluations") {
  CHECK(quantizer_J(3, 0.5, 0.5, 100) == 0.0);
  CHECK(quantizer_J(1, 0.0, 1.0, 4) == 1.0);  // Delta = 1, one interval
  CHECK_THROWS_AS(quantizer_J(0, 0.0, 1.0, 4), InputError);
}

TEST_CASE("measured quantizer MSE stays under the worst-case bound") {
  Rng data_rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const int q = 1 + static_cast<int>(data_rng.uniform_int(4));
    Matrix g = testutil::random_matrix(6, 6, data_rng, 2.0);
    double g_min = 1e300;
    double g_max = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      const double a = std::abs(g.data()[i]);
      g_min = std::min(g_min, a);
      g_max = std::max(g_max, a);
    }
    const double bound = quantizer_J(q, g_min, g_max, g.size());

    Rng rng(static_cast<std::uint64_t>(trial) + 1000);
    QuantizerSpec spec{q};
    double mse_sum = 0.0;
    const int draws = 1000;
    for (int d = 0; d < draws; ++d) mse_sum += (quantize(g, spec, rng) - g).squaredNorm();
    CHECK(mse_sum / draws <= bound * (1.0 + 1e-9));
  }
}

TEST_CASE("cubic schedule sum: strict bound fails only at T = 1") {
  CHECK_FALSE(lemma1_check(0.35, 1));  // single term equals rho_f exactly
  CHECK(lemma1_check(0.35, 2));
  CHECK(lemma1_check(0.35, 100));
  CHECK(sparsity_schedule_sum(0.35, 100) < 35.0);
  CHECK(sparsity_schedule_sum(0.35, 1) == target_sparsity(SparsitySchedule{0.35, 1}, 1));
}

TEST_CASE("schedule sum approaches the 3/4 Riemann limit") {
  const int big = 1000000;
  const double mean = sparsity_schedule_sum(0.4, big) / big;
  CHECK(std::abs(mean - 0.75 * 0.4) <= 1e-3);
}

TEST_CASE("lemma 1 holds on a randomized grid") {
  Rng rng(89);
  for (int trial = 0; trial < 100; ++trial) {
    const double rho_f = rng.uniform(0.01, 0.99);
    const int rounds = 2 + static_cast<int>(rng.uniform_int(500));
    CHECK(lemma1_check(rho_f, rounds));
  }
}

TEST_CASE("lemma 2 empirical check on a recorded run") {
  ExperimentSetup setup;
  setup.model.layer_dims = {6, 8, 8, 4};
  setup.model.split_layer = 2;
  setup.clients = 3;
  setup.rounds = 12;
  setup.agg_interval = 4;
  setup.rho_f = 0.35;
  setup.quant_bits = 8;
  setup.dropout_p = 0.3;
  setup.eta = 0.05;
  setup.batch = 8;
  setup.seed = 77;
  setup.classes = 3;
  setup.train_samples = 90;
  setup.eval_samples = 30;
  setup.distances_km = {0.1};
  setup.artifacts_dir = "lemma2_test_artifacts";

  std::filesystem::remove_all(setup.artifacts_dir);
  run_experiment(setup);

  RunArtifacts artifacts = load_run_artifacts(setup.artifacts_dir);
  CHECK(artifacts.snapshots.size() == 12);
  CHECK(artifacts.snapshots.front().size() == 3);

  Lemma2Report report = lemma2_empirical(artifacts);
  CHECK(report.max_ratio < 1.0);
  CHECK(report.bound_violations == 0);
  CHECK(report.premise_violations == 0);
  CHECK(report.per_round.size() == 12);

  // negative control: halved constants must be flagged
  Lemma2Report halved = lemma2_empirical(artifacts, 0.5);
  CHECK(halved.total_violations() > 0);

  write_lemma2_report(setup.artifacts_dir + "/report.json", report);
  CHECK(std::filesystem::exists(setup.artifacts_dir + "/report.json"));
  std::filesystem::remove_all(setup.artifacts_dir);
}

TEST_CASE("single client with frequent aggregation has zero drift") {
  ExperimentSetup setup;
  setup.model.layer_dims = {4, 6, 3};
  setup.model.split_layer = 1;
  setup.clients = 1;
  setup.rounds = 6;
  setup.agg_interval = 1;
  setup.rho_f = 0.0;
  setup.eta = 0.05;
  setup.batch = 4;
  setup.seed = 5;
  setup.train_samples = 20;
  setup.eval_samples = 10;
  setup.distances_km = {0.1};
  setup.artifacts_dir = "lemma2_single_client";

  std::filesystem::remove_all(setup.artifacts_dir);
  run_experiment(setup);
  Lemma2Report report = lemma2_empirical(load_run_artifacts(setup.artifacts_dir));
  std::filesystem::remove_all(setup.artifacts_dir);
  CHECK(report.max_ratio == 0.0);  // the mean of one client is the client
  CHECK(report.total_violations() == 0);
}

TEST_CASE("missing artifacts are an input error") {
  CHECK_THROWS_AS(load_run_artifacts("no_such_dir_anywhere"), InputError);
}
