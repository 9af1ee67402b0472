// tbal: design, simulate, theory and validate subcommands.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tbal/errors.hpp"
#include "tbal/estimators.hpp"
#include "tbal/io.hpp"
#include "tbal/population_model.hpp"
#include "tbal/randomization.hpp"
#include "tbal/simharness.hpp"
#include "tbal/theory.hpp"
#include "tbal/validation.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kUsage = 2, kData = 3, kNumerical = 4 };

std::string fmt(double v) { return tbal::format_number(v, 12); }

tbal::Vector parse_mean(const std::string& flag, const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
      throw tbal::InvalidArgument(flag + ": not a number: '" + item + "'");
    }
    vals.push_back(v);
  }
  if (vals.empty()) throw tbal::InvalidArgument(flag + " needs a comma-separated list");
  return Eigen::Map<tbal::Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

struct WeightFlags {
  bool column = false;
  bool unit = false;
  std::string source_mean;
  std::string target_mean;

  void add_to(CLI::App* cmd) {
    auto* col = cmd->add_flag("--weights-column", column, "Use the w column of the covariate file");
    auto* uni = cmd->add_flag("--unit-weights", unit, "Use w = 1 for every unit");
    auto* sm = cmd->add_option("--source-mean", source_mean, "Source mean, comma separated");
    auto* tm = cmd->add_option("--target-mean", target_mean, "Target mean, comma separated");
    sm->needs(tm);
    tm->needs(sm);
    col->excludes(uni)->excludes(sm)->excludes(tm);
    uni->excludes(sm)->excludes(tm);
  }

  // Raw importance weights for the table; defaults to the w column when present.
  tbal::Vector resolve(const tbal::CovariateTable& t) const {
    tbal::Vector w;
    if (!source_mean.empty()) {
      const tbal::GaussianPopulationPair pop(parse_mean("--source-mean", source_mean),
                                             parse_mean("--target-mean", target_mean));
      if (pop.d() != t.x.cols()) {
        throw tbal::InvalidArgument("population means have dimension " + std::to_string(pop.d()) +
                                    " but the covariates have " + std::to_string(t.x.cols()) + " columns");
      }
      return tbal::importance_weights(pop, t.x);
    }
    if (unit || (!column && !t.w)) return tbal::Vector::Ones(t.x.rows());
    if (!t.w) throw tbal::DataError("--weights-column given but the covariate file has no w column");
    w = *t.w;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
        throw tbal::DataError("weight in data row " + std::to_string(i + 1) + " is not positive");
      }
    }
    return w;
  }
};

struct DesignArgs {
  std::string covariates;
  WeightFlags weights;
  std::string balance = "tb";
  std::optional<double> alpha;
  std::optional<std::size_t> pool;
  std::optional<double> threshold;
  std::optional<double> clip;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t max_draws = 1'000'000;
  bool ridge = false;
};

int cmd_design(const DesignArgs& a) {
  const auto table = tbal::read_covariates_csv(a.covariates);
  const tbal::Vector raw = a.weights.resolve(table);
  const tbal::Vector clipped = tbal::clip_weights(raw, tbal::WeightPolicy{a.clip});
  const tbal::WeightedCovariates wc(table.x, clipped);
  const auto n = static_cast<std::size_t>(table.x.rows());
  if (n < 2 || n % 2 != 0) throw tbal::DataError("the design needs an even number of units, got " + std::to_string(n));

  tbal::BalanceCriterion criterion = tbal::BalanceCriterion::none;
  if (a.balance == "sb") criterion = tbal::BalanceCriterion::source;
  if (a.balance == "tb") criterion = tbal::BalanceCriterion::target;
  if (a.balance == "alt") criterion = tbal::BalanceCriterion::alternate;

  tbal::Rng rng(a.seed);
  std::optional<tbal::AssignmentVector> z;
  double m_stat = 0.0;
  double realized = std::numeric_limits<double>::infinity();
  std::size_t candidates = 1;
  double condition = 0.0;

  if (criterion == tbal::BalanceCriterion::none) {
    z = tbal::draw_balanced_assignment(n, rng);
    condition = tbal::BalanceEvaluator(wc, criterion).condition_number();
    // Report how balanced the draw is under the target criterion when that is defined.
    try {
      m_stat = tbal::BalanceEvaluator(wc, tbal::BalanceCriterion::target, a.ridge).value(*z);
    } catch (const tbal::SingularCovarianceError&) {
      m_stat = std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    const tbal::BalanceEvaluator eval(wc, criterion, a.ridge);
    condition = eval.condition_number();
    if (a.threshold) {
      auto res = tbal::rerandomize_threshold(eval, *a.threshold, a.max_draws, rng);
      m_stat = res.statistic;
      realized = *a.threshold;
      candidates = res.draws_used;
      z = std::move(res.z);
    } else {
      const tbal::QuantileRule rule{a.alpha.value_or(0.99), a.pool.value_or(100)};
      auto res = tbal::rerandomize_quantile(eval, rule, a.max_draws, rng);
      m_stat = res.statistic;
      realized = res.realized_threshold;
      candidates = res.candidates;
      z = std::move(res.z);
    }
  }

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw tbal::DataError("cannot write " + a.out);
  out << "unit,assignment,z,weight,clipped_weight\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out << i + 1 << ',' << z->treatment(i) << ',' << (*z)[i] << ',' << tbal::format_number(raw[ii], 17) << ','
        << tbal::format_number(clipped[ii], 17) << '\n';
  }
  out.close();
  if (!out) throw tbal::DataError("failed writing " + a.out);

  std::cout << "balance=" << a.balance << '\n'
            << "criterion=" << tbal::to_string(criterion) << '\n'
            << "n=" << n << '\n'
            << "d=" << table.x.cols() << '\n'
            << "m_statistic=" << fmt(m_stat) << '\n'
            << "realized_threshold=" << fmt(realized) << '\n'
            << "candidates=" << candidates << '\n'
            << "condition_number=" << fmt(condition) << '\n'
            << "treated=" << n / 2 << '\n'
            << "seed=" << a.seed << '\n'
            << "out=" << a.out << '\n';
  return kOk;
}

struct SimulateArgs {
  std::string scenario;
  std::string out;
  unsigned threads = 1;
  std::optional<std::size_t> reps;
};

int cmd_simulate(const SimulateArgs& a) {
  tbal::ScenarioConfig cfg = tbal::load_scenario(a.scenario);
  if (a.reps) {
    cfg.reps = *a.reps;
    cfg.validate();
  }
  const auto rows = tbal::run_sweep(cfg, a.threads);

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw tbal::DataError("cannot write " + a.out);
  tbal::write_results_csv(out, rows);
  out.close();
  if (!out) throw tbal::DataError("failed writing " + a.out);

  std::size_t i = 0;
  while (i < rows.size()) {
    const double value = rows[i].sweep_value;
    std::cout << "scenario=" << rows[i].scenario_id << " sweep_param=" << rows[i].sweep_param
              << " sweep_value=" << fmt(value) << " true_ate=" << fmt(rows[i].true_ate);
    for (; i < rows.size() && rows[i].sweep_value == value; ++i) {
      std::cout << ' ' << rows[i].method << ".bias=" << fmt(rows[i].bias) << ' ' << rows[i].method
                << ".variance=" << fmt(rows[i].variance) << ' ' << rows[i].method << ".mse=" << fmt(rows[i].mse);
    }
    std::cout << '\n';
  }
  return kOk;
}

struct TheoryArgs {
  std::vector<double> vda;
  std::vector<double> threshold;
  std::vector<std::string> r2;
  std::vector<double> predict;
  WeightFlags weights;
};

int to_dof(double d) {
  if (!(d >= 1.0) || d != std::floor(d) || d > 1e6) throw tbal::InvalidArgument("d must be a positive integer");
  return static_cast<int>(d);
}

int cmd_theory(const TheoryArgs& a) {
  if (!a.vda.empty()) {
    std::cout << "vda=" << fmt(tbal::variance_reduction_factor(to_dof(a.vda[0]), a.vda[1])) << '\n';
  } else if (!a.threshold.empty()) {
    std::cout << "threshold=" << fmt(tbal::threshold_for_alpha(to_dof(a.threshold[0]), a.threshold[1])) << '\n';
  } else if (!a.predict.empty()) {
    std::cout << "predicted_variance=" << fmt(tbal::predicted_conditional_variance(a.predict[0], a.predict[1], a.predict[2]))
              << '\n';
  } else {
    const auto table = tbal::read_covariates_csv(a.r2[0]);
    const auto po = tbal::read_outcomes_csv(a.r2[1]);
    if (po.y0.size() != table.x.rows()) throw tbal::DataError("covariate and outcome files have different row counts");
    const tbal::WeightedCovariates wc(table.x, a.weights.resolve(table));
    const tbal::Vector c = 0.5 * wc.w().cwiseProduct(po.y0 + po.y1);
    std::cout << "r2_weighted=" << fmt(tbal::squared_multiple_correlation(wc.xw(), c)) << '\n'
              << "r2_unweighted=" << fmt(tbal::squared_multiple_correlation(wc.x(), c)) << '\n';
  }
  return kOk;
}

struct ValidateArgs {
  std::string suite = "all";
  std::uint64_t seed = 1;
  std::string fault;
};

int cmd_validate(const ValidateArgs& a) {
  tbal::ValidationOptions opt;
  opt.seed = a.seed;
  if (a.fault == "sign-symmetry") opt.statistic = tbal::sign_asymmetric_statistic();

  std::vector<tbal::CheckResult> checks;
  if (a.suite == "enumeration" || a.suite == "all") {
    auto r = tbal::run_enumeration_suite(opt);
    checks.insert(checks.end(), r.begin(), r.end());
  }
  if (a.suite == "mc" || a.suite == "all") {
    auto r = tbal::run_mc_suite(opt);
    checks.insert(checks.end(), r.begin(), r.end());
  }
  std::size_t failed = 0;
  for (const auto& c : checks) {
    std::cout << tbal::format_check(c) << '\n';
    failed += c.passed ? 0 : 1;
  }
  std::cout << "suite=" << a.suite << " seed=" << a.seed << " passed=" << checks.size() - failed << " failed=" << failed
            << '\n';
  return failed == 0 ? kOk : kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transportable rerandomized experiment design"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tbal 0.1.0");

  DesignArgs design;
  auto* d = app.add_subcommand("design", "Draw a balanced assignment for a covariate file");
  d->add_option("--covariates", design.covariates, "Covariate CSV (x1,...,xd[,w])")->required();
  design.weights.add_to(d);
  d->add_option("--balance", design.balance, "Balance criterion")
      ->check(CLI::IsMember({"cr", "sb", "tb", "alt"}))
      ->capture_default_str();
  auto* alpha = d->add_option("--alpha", design.alpha, "Rejection share for the quantile rule")->check(CLI::Range(0.0, 1.0));
  auto* pool = d->add_option("--pool", design.pool, "Number of best candidates to choose from")->check(CLI::PositiveNumber);
  auto* thr = d->add_option("--threshold", design.threshold, "Accept the first draw with M below this value")
                  ->check(CLI::NonNegativeNumber);
  thr->excludes(alpha)->excludes(pool);
  d->add_option("--clip", design.clip, "Clip weights at this value")->check(CLI::PositiveNumber);
  d->add_option("--seed", design.seed, "Random seed")->capture_default_str();
  d->add_option("--out", design.out, "Assignment CSV to write")->required();
  d->add_option("--max-draws", design.max_draws, "Draw budget")->check(CLI::PositiveNumber)->capture_default_str();
  d->add_flag("--ridge", design.ridge, "Regularize an ill-conditioned covariance instead of failing");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run a scenario file and write the results CSV");
  s->add_option("--scenario", sim.scenario, "Scenario file")->required();
  s->add_option("--out", sim.out, "Results CSV to write")->required();
  s->add_option("--threads", sim.threads, "Worker threads (0 = all cores)")->capture_default_str();
  s->add_option("--reps", sim.reps, "Override the scenario's replication count")->check(CLI::PositiveNumber);

  TheoryArgs th;
  auto* t = app.add_subcommand("theory", "Closed-form calculators");
  auto* vda = t->add_option("--vda", th.vda, "v_{d,a} for degrees of freedom d and threshold a")->expected(2);
  auto* tha = t->add_option("--threshold", th.threshold, "Chi-square threshold for d and alpha")->expected(2);
  auto* r2 = t->add_option("--r2", th.r2, "R^2 from covariate and outcome (y0,y1) CSVs")->expected(2);
  auto* pre = t->add_option("--predict", th.predict, "Predicted variance from var r2 vda")->expected(3);
  th.weights.add_to(t);
  t->require_option(1);
  vda->excludes(tha)->excludes(r2)->excludes(pre);
  tha->excludes(r2)->excludes(pre);
  r2->excludes(pre);

  ValidateArgs val;
  auto* v = app.add_subcommand("validate", "Run the oracle suites");
  v->add_option("--suite", val.suite, "Which suite")->check(CLI::IsMember({"enumeration", "mc", "all"}))->capture_default_str();
  v->add_option("--seed", val.seed, "Random seed")->capture_default_str();
  v->add_option("--inject-fault", val.fault, "Break a component on purpose to check the suite notices")
      ->check(CLI::IsMember({"sign-symmetry"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*d) return cmd_design(design);
    if (*s) return cmd_simulate(sim);
    if (*t) return cmd_theory(th);
    return cmd_validate(val);
  } catch (const tbal::InvalidArgument& e) {
    std::cerr << "tbal: usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const tbal::DataError& e) {
    std::cerr << "tbal: data error: " << e.what() << '\n';
    return kData;
  } catch (const tbal::NumericalError& e) {
    std::cerr << "tbal: numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "tbal: error: " << e.what() << '\n';
    return kNumerical;
  }
}
