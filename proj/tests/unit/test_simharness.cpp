#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tbal/errors.hpp"
#include "tbal/simharness.hpp"

using tbal::ScenarioConfig;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig cfg;
  cfg.name = "small";
  cfg.d = 2;
  cfg.n = 60;
  cfg.alpha = 0.9;
  cfg.pool = 10;
  cfg.reps = 8;
  cfg.base_seed = 99;
  return cfg;
}

double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("derive_substream_seed") {
  CHECK(tbal::derive_substream_seed(7, "fig1", 3) == tbal::derive_substream_seed(7, "fig1", 3));
  CHECK(tbal::derive_substream_seed(7, "fig1", 3) != tbal::derive_substream_seed(7, "fig2", 3));
  CHECK(tbal::derive_substream_seed(7, "fig1", 3) != tbal::derive_substream_seed(8, "fig1", 3));

  std::vector<std::uint64_t> seeds(1000000);
  for (std::size_t r = 0; r < seeds.size(); ++r) seeds[r] = tbal::derive_substream_seed(1, "scenario", r);
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("method names") {
  const auto all = tbal::all_methods();
  REQUIRE(all.size() == 6);
  std::vector<std::string> names;
  for (const auto& m : all) names.push_back(m.name());
  CHECK(names == std::vector<std::string>{"UE-CR", "UE-SB", "UE-TB", "WE-CR", "WE-SB", "WE-TB"});
  CHECK(tbal::Method::parse("WE-TB") == all[5]);
  CHECK_THROWS_AS(tbal::Method::parse("WE-XX"), tbal::InvalidArgument);
}

TEST_CASE("parse_scenario") {
  const auto cfg = tbal::parse_scenario(
      "# comment\n"
      "name = sweep.test\n"
      "model = nonlinear\n"
      "d = 4\n"
      "n = 200   # trailing comment\n"
      "delta = 0.5\n"
      "alpha = 0.95\n"
      "pool = 20\n"
      "clip_threshold = 40\n"
      "reps = 12\n"
      "base_seed = 18446744073709551615\n"
      "methods = WE-TB, UE-CR\n"
      "sweep_param = n\n"
      "sweep_values = 400, 200\n"
      "dataset = fixed\n");
  CHECK(cfg.name == "sweep.test");
  CHECK(cfg.model == tbal::OutcomeKind::nonlinear);
  CHECK(cfg.d == 4);
  CHECK(cfg.n == 200);
  CHECK(cfg.delta == 0.5);
  CHECK(cfg.alpha == 0.95);
  CHECK(cfg.pool == 20);
  CHECK(cfg.clip_threshold == 40.0);
  CHECK(cfg.reps == 12);
  CHECK(cfg.base_seed == 18446744073709551615ULL);
  CHECK(cfg.methods.size() == 2);
  CHECK(cfg.sweep_param == tbal::SweepParam::n);
  CHECK(cfg.sweep_points() == std::vector<double>{200, 400});
  CHECK(cfg.dataset == tbal::DatasetMode::fixed);
  CHECK(cfg.at(400).n == 400);
  CHECK(cfg.at(400).sweep_param == tbal::SweepParam::none);

  const auto defaults = tbal::parse_scenario("");
  CHECK(defaults.d == 10);
  CHECK(defaults.alpha == 0.99);
  CHECK(defaults.pool == 100);
  CHECK(defaults.reps == 500);
  CHECK(defaults.methods.size() == 6);
  CHECK_FALSE(defaults.clip_threshold.has_value());

  for (const char* bad : {"bogus = 1\n", "d = 3\nd = 4\n", "d = three\n", "n = 201\n", "methods = WE-XX\n",
                          "sweep_values = 1,2\n", "sweep_param = n\n", "sweep_param = n\nsweep_values = 3\n",
                          "reps = 0\n", "delta = nan\n", "no equals sign\n", "name = has space\n",
                          "clip_threshold = -1\n", "methods = WE-TB, WE-TB\n", "model = cubic\n"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(tbal::parse_scenario(bad), tbal::InvalidArgument);
  }
  CHECK_THROWS_AS(tbal::load_scenario("/nonexistent/x.scenario"), tbal::InvalidArgument);
}

TEST_CASE("replications are deterministic and share data across methods") {
  const auto cfg = small_config();
  const auto a = tbal::run_replication(cfg, 3);
  const auto b = tbal::run_replication(cfg, 3);
  CHECK(a == b);
  CHECK(a.size() == 6);
  CHECK(a != tbal::run_replication(cfg, 4));

  // Dropping methods does not change the others.
  auto sub = cfg;
  sub.methods = {tbal::Method::parse("WE-TB")};
  CHECK(tbal::run_replication(sub, 3).at("WE-TB") == a.at("WE-TB"));
  CHECK_THROWS_AS(tbal::run_replication(cfg, cfg.reps), tbal::InvalidArgument);
}

TEST_CASE("fixed dataset mode") {
  auto cfg = small_config();
  cfg.dataset = tbal::DatasetMode::fixed;
  const auto a = tbal::make_replication_data(cfg, 0);
  const auto b = tbal::make_replication_data(cfg, 5);
  CHECK(a.x == b.x);
  CHECK(a.outcomes.y1 == b.outcomes.y1);
  CHECK(tbal::run_replication(cfg, 0) != tbal::run_replication(cfg, 5));

  cfg.dataset = tbal::DatasetMode::redraw;
  CHECK(tbal::make_replication_data(cfg, 0).x != tbal::make_replication_data(cfg, 5).x);
}

TEST_CASE("clipping only changes the weights") {
  auto cfg = small_config();
  cfg.delta = 0.8;
  cfg.clip_threshold = 2.0;
  const auto data = tbal::make_replication_data(cfg, 0);
  CHECK(data.weights.maxCoeff() <= 2.0);
  CHECK(data.raw_weights.maxCoeff() > 2.0);
  CHECK(data.weights == data.raw_weights.cwiseMin(2.0));
}

TEST_CASE("aggregation") {
  auto cfg = small_config();
  cfg.reps = 1;
  for (const auto& row : tbal::run_sweep(cfg)) {
    CHECK(row.variance == 0.0);
    CHECK(row.mse == doctest::Approx(row.bias * row.bias).epsilon(1e-12));
  }

  cfg.reps = 6;
  cfg.sweep_param = tbal::SweepParam::delta;
  cfg.sweep_values = {0.5, 0.1};
  const auto rows = tbal::run_sweep(cfg);
  REQUIRE(rows.size() == 12);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].sweep_value == (i < 6 ? 0.1 : 0.5));
    CHECK(rows[i].method == tbal::all_methods()[i % 6].name());
    CHECK(rows[i].sweep_param == "delta");
    CHECK(rows[i].mse == doctest::Approx(rows[i].variance + rows[i].bias * rows[i].bias).epsilon(1e-9));
    CHECK(rows[i].bias == doctest::Approx(rows[i].mean_estimate - rows[i].true_ate).epsilon(1e-12));
  }
  CHECK(rows[0].true_ate == doctest::Approx(2.0 * 2 * 1.1));
}

TEST_CASE("output is independent of thread count") {
  auto cfg = small_config();
  cfg.reps = 10;
  cfg.sweep_param = tbal::SweepParam::n;
  cfg.sweep_values = {40, 80, 120};
  const std::string one = tbal::results_csv(tbal::run_sweep(cfg, 1));
  CHECK(one == tbal::results_csv(tbal::run_sweep(cfg, 3)));
  CHECK(one == tbal::results_csv(tbal::run_sweep(cfg, 8)));
  CHECK(one == tbal::results_csv(tbal::run_sweep(cfg, 0)));
}

TEST_CASE("results CSV format") {
  tbal::SweepResult r{"s", "none", 0.0, "WE-TB", 0.1, 2.0, 2.01, 5.1, 5.0, 3, 42};
  const std::string csv = tbal::results_csv({r});
  CHECK(csv ==
        "scenario_id,sweep_param,sweep_value,method,reps,base_seed,true_ate,mean_estimate,bias,variance,mse\n"
        "s,none,0,WE-TB,3,42,5,5.0999999999999996,0.10000000000000001,2,2.0099999999999998\n");
}

TEST_CASE("unweighted complete randomization without shift is unbiased") {
  ScenarioConfig cfg;
  cfg.name = "noshift";
  cfg.d = 3;
  cfg.n = 100;
  cfg.delta = 0.0;
  cfg.reps = 600;
  cfg.methods = {tbal::Method::parse("UE-CR")};
  const auto est = tbal::collect_estimates(cfg, 0);
  const auto rows = tbal::aggregate(cfg, est);
  CHECK(std::abs(rows[0].bias) <= 4.0 * std::sqrt(rows[0].variance / cfg.reps));
}

TEST_CASE("unweighted estimator carries the transport gap") {
  ScenarioConfig cfg;
  cfg.name = "gap";
  cfg.d = 1;
  cfg.n = 200;
  cfg.delta = 0.3;
  cfg.reps = 2000;
  cfg.methods = {tbal::Method::parse("UE-CR")};
  const auto row = tbal::run_sweep(cfg, 0).front();
  CHECK(std::abs(row.bias + 0.6) <= 4.0 * std::sqrt(row.variance / cfg.reps));
}

TEST_CASE("a pool equal to the candidate count reduces to complete randomization") {
  ScenarioConfig cfg;
  cfg.name = "degenerate";
  cfg.d = 2;
  cfg.n = 100;
  cfg.pool = 20;
  cfg.alpha = 1e-12;
  cfg.reps = 1500;
  cfg.methods = {tbal::Method::parse("WE-CR"), tbal::Method::parse("WE-SB"), tbal::Method::parse("WE-TB")};
  REQUIRE(tbal::quantile_candidate_count(cfg.alpha, cfg.pool) == cfg.pool);
  const auto est = tbal::collect_estimates(cfg, 0);
  std::vector<std::vector<double>> by_method(3);
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t r = 0; r < cfg.reps; ++r) by_method[m].push_back(est.at(0, m, r));
  }
  const double cr = sample_variance(by_method[0]);
  for (std::size_t m = 1; m < 3; ++m) {
    // Variance ratio of two samples of 1500 has a relative SE near 0.05.
    const double ratio = sample_variance(by_method[m]) / cr;
    CHECK(ratio > 0.8);
    CHECK(ratio < 1.25);
  }

  // The same setting with real truncation shows a clear reduction for TB.
  cfg.alpha = 0.9;
  const auto truncated = tbal::collect_estimates(cfg, 0);
  std::vector<double> tb, crv;
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    crv.push_back(truncated.at(0, 0, r));
    tb.push_back(truncated.at(0, 2, r));
  }
  CHECK(sample_variance(tb) < 0.8 * sample_variance(crv));
}
