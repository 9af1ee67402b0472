#include "tbal/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "tbal/errors.hpp"
#include "tbal/io.hpp"
#include "tbal/randomization.hpp"

namespace tbal {

namespace {

// Stream tags for the independent pieces of one replication.
enum : std::uint64_t { kTagData = 1, kTagCr = 2, kTagSb = 3, kTagTb = 4 };
constexpr std::uint64_t kFixedDataRep = std::numeric_limits<std::uint64_t>::max();

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64_mix(seed ^ splitmix64_mix(tag));
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw InvalidArgument("scenario key '" + key + "': not a finite number: '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument("scenario key '" + key + "': not a nonnegative integer: '" + v + "'");
  }
  return out;
}

bool is_even_size(double v) { return v >= 2.0 && v == std::floor(v) && std::fmod(v, 2.0) == 0.0 && v < 1e9; }

}  // namespace

std::string Method::name() const { return std::string(to_string(estimator)) + "-" + to_string(balance); }

Method Method::parse(const std::string& s) {
  for (const auto& m : all_methods()) {
    if (m.name() == s) return m;
  }
  throw InvalidArgument("unknown method '" + s + "' (expected {UE,WE}-{CR,SB,TB})");
}

std::vector<Method> all_methods() {
  std::vector<Method> out;
  for (auto e : {EstimatorKind::unweighted, EstimatorKind::weighted}) {
    for (auto b : {BalanceMethod::cr, BalanceMethod::sb, BalanceMethod::tb}) out.push_back(Method{e, b});
  }
  return out;
}

const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::none: return "none";
    case SweepParam::n: return "n";
    case SweepParam::delta: return "delta";
    case SweepParam::clip_threshold: return "clip_threshold";
  }
  return "none";
}

void ScenarioConfig::validate() const {
  if (name.empty()) throw InvalidArgument("scenario name must not be empty");
  for (char ch : name) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) {
      throw InvalidArgument("scenario name may only contain letters, digits, '_', '-' and '.'");
    }
  }
  if (d < 1) throw InvalidArgument("d must be positive");
  if (!std::isfinite(delta)) throw InvalidArgument("delta must be finite");
  if (n < 2 || n % 2 != 0) throw InvalidArgument("n must be even and at least 2");
  quantile_candidate_count(alpha, pool);
  if (clip_threshold && !(*clip_threshold > 0.0)) throw InvalidArgument("clip_threshold must be positive");
  if (reps < 1) throw InvalidArgument("reps must be at least 1");
  if (methods.empty()) throw InvalidArgument("at least one method is required");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (!seen.insert(m.name()).second) throw InvalidArgument("duplicate method " + m.name());
  }
  if (sweep_param == SweepParam::none) {
    if (!sweep_values.empty()) throw InvalidArgument("sweep_values given without sweep_param");
    return;
  }
  if (sweep_values.empty()) throw InvalidArgument("sweep_param needs at least one sweep value");
  std::set<double> distinct(sweep_values.begin(), sweep_values.end());
  if (distinct.size() != sweep_values.size()) throw InvalidArgument("sweep values must be distinct");
  for (double v : sweep_values) {
    if (sweep_param == SweepParam::n && !is_even_size(v)) {
      throw InvalidArgument("sweep value for n must be an even integer >= 2");
    }
    if (sweep_param == SweepParam::clip_threshold && !(v > 0.0)) {
      throw InvalidArgument("sweep value for clip_threshold must be positive");
    }
    if (!std::isfinite(v)) throw InvalidArgument("sweep values must be finite");
  }
}

ScenarioConfig ScenarioConfig::at(double value) const {
  ScenarioConfig c = *this;
  switch (sweep_param) {
    case SweepParam::none: break;
    case SweepParam::n: c.n = static_cast<std::size_t>(value); break;
    case SweepParam::delta: c.delta = value; break;
    case SweepParam::clip_threshold: c.clip_threshold = value; break;
  }
  c.sweep_param = SweepParam::none;
  c.sweep_values.clear();
  return c;
}

std::vector<double> ScenarioConfig::sweep_points() const {
  if (sweep_param == SweepParam::none) return {0.0};
  std::vector<double> v = sweep_values;
  std::sort(v.begin(), v.end());
  return v;
}

ScenarioConfig parse_scenario(const std::string& text) {
  ScenarioConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("scenario line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw InvalidArgument("scenario key '" + key + "' given twice");

    if (key == "name") {
      c.name = val;
    } else if (key == "model") {
      if (val == "linear") {
        c.model = OutcomeKind::linear;
      } else if (val == "nonlinear") {
        c.model = OutcomeKind::nonlinear;
      } else {
        throw InvalidArgument("model must be linear or nonlinear");
      }
    } else if (key == "d") {
      const auto v = parse_uint(key, val);
      if (v < 1 || v > 1000) throw InvalidArgument("d must lie in [1, 1000]");
      c.d = static_cast<int>(v);
    } else if (key == "delta") {
      c.delta = parse_real(key, val);
    } else if (key == "n") {
      c.n = parse_uint(key, val);
    } else if (key == "alpha") {
      c.alpha = parse_real(key, val);
    } else if (key == "pool") {
      c.pool = parse_uint(key, val);
    } else if (key == "clip_threshold") {
      if (val == "none") {
        c.clip_threshold.reset();
      } else {
        c.clip_threshold = parse_real(key, val);
      }
    } else if (key == "reps") {
      c.reps = parse_uint(key, val);
    } else if (key == "base_seed") {
      c.base_seed = parse_uint(key, val);
    } else if (key == "methods") {
      c.methods.clear();
      if (val == "all") {
        c.methods = all_methods();
      } else {
        for (const auto& m : split_list(val)) c.methods.push_back(Method::parse(m));
        std::sort(c.methods.begin(), c.methods.end(),
                  [](const Method& a, const Method& b) { return a.name() < b.name(); });
      }
    } else if (key == "sweep_param") {
      if (val == "none") {
        c.sweep_param = SweepParam::none;
      } else if (val == "n") {
        c.sweep_param = SweepParam::n;
      } else if (val == "delta") {
        c.sweep_param = SweepParam::delta;
      } else if (val == "clip_threshold") {
        c.sweep_param = SweepParam::clip_threshold;
      } else {
        throw InvalidArgument("sweep_param must be none, n, delta or clip_threshold");
      }
    } else if (key == "sweep_values") {
      c.sweep_values.clear();
      for (const auto& v : split_list(val)) c.sweep_values.push_back(parse_real(key, v));
    } else if (key == "dataset") {
      if (val == "redraw") {
        c.dataset = DatasetMode::redraw;
      } else if (val == "fixed") {
        c.dataset = DatasetMode::fixed;
      } else {
        throw InvalidArgument("dataset must be redraw or fixed");
      }
    } else {
      throw InvalidArgument("unknown scenario key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open scenario file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::uint64_t derive_substream_seed(std::uint64_t base_seed, const std::string& scenario_id,
                                    std::uint64_t rep_index) {
  const std::uint64_t s = splitmix64_mix(base_seed ^ hash64(scenario_id));
  return splitmix64_mix(s ^ rep_index);
}

ReplicationData make_replication_data(const ScenarioConfig& cfg, std::size_t rep_index) {
  const std::uint64_t seed =
      cfg.dataset == DatasetMode::fixed
          ? child_seed(derive_substream_seed(cfg.base_seed, cfg.name, kFixedDataRep), kTagData)
          : child_seed(derive_substream_seed(cfg.base_seed, cfg.name, rep_index), kTagData);
  const auto pop = GaussianPopulationPair::isotropic(cfg.d, cfg.delta);
  Rng rng(seed);
  ReplicationData data;
  data.x = sample_covariates(pop, Population::source, cfg.n, rng);
  data.raw_weights = importance_weights(pop, data.x);
  data.weights = clip_weights(data.raw_weights, WeightPolicy{cfg.clip_threshold});
  data.outcomes = generate_outcomes(OutcomeModel{cfg.model, 1.0}, data.x, rng);
  return data;
}

std::map<std::string, double> run_replication(const ScenarioConfig& cfg, std::size_t rep_index) {
  if (cfg.sweep_param != SweepParam::none) throw InvalidArgument("run_replication needs a config without a sweep");
  if (rep_index >= cfg.reps) throw InvalidArgument("rep_index out of range");

  const std::uint64_t rep_seed = derive_substream_seed(cfg.base_seed, cfg.name, rep_index);
  const ReplicationData data = make_replication_data(cfg, rep_index);
  const Vector& w = data.weights;
  const PotentialOutcomes& po = data.outcomes;
  const WeightedCovariates wc(data.x, w);

  const auto uses = [&](BalanceMethod b) {
    return std::any_of(cfg.methods.begin(), cfg.methods.end(), [b](const Method& m) { return m.balance == b; });
  };
  const QuantileRule rule{cfg.alpha, cfg.pool};
  const std::size_t max_draws = quantile_candidate_count(cfg.alpha, cfg.pool);

  std::map<BalanceMethod, AssignmentVector> designs;
  if (uses(BalanceMethod::cr)) {
    Rng rng(child_seed(rep_seed, kTagCr));
    designs.emplace(BalanceMethod::cr, draw_balanced_assignment(cfg.n, rng));
  }
  if (uses(BalanceMethod::sb)) {
    Rng rng(child_seed(rep_seed, kTagSb));
    const BalanceEvaluator eval(wc, BalanceCriterion::source);
    designs.emplace(BalanceMethod::sb, rerandomize_quantile(eval, rule, max_draws, rng).z);
  }
  if (uses(BalanceMethod::tb)) {
    Rng rng(child_seed(rep_seed, kTagTb));
    const BalanceEvaluator eval(wc, BalanceCriterion::target);
    designs.emplace(BalanceMethod::tb, rerandomize_quantile(eval, rule, max_draws, rng).z);
  }

  std::map<std::string, double> out;
  for (const auto& m : cfg.methods) {
    const AssignmentVector& z = designs.at(m.balance);
    const Vector y = observed_outcomes(po, z.signs());
    out[m.name()] = m.estimator == EstimatorKind::weighted ? weighted_estimator(y, z, w) : unweighted_estimator(y, z);
  }
  return out;
}

SweepEstimates collect_estimates(const ScenarioConfig& cfg, unsigned threads) {
  cfg.validate();
  SweepEstimates est;
  est.sweep_values = cfg.sweep_points();
  est.methods = cfg.methods;
  std::sort(est.methods.begin(), est.methods.end(), [](const Method& a, const Method& b) { return a.name() < b.name(); });
  est.reps = cfg.reps;
  const std::size_t n_sweep = est.sweep_values.size();
  const std::size_t n_methods = est.methods.size();
  est.values.assign(n_sweep * n_methods * cfg.reps, 0.0);

  std::vector<ScenarioConfig> points;
  for (double v : est.sweep_values) {
    points.push_back(cfg.at(v));
    const auto pop = GaussianPopulationPair::isotropic(points.back().d, points.back().delta);
    est.true_ate.push_back(true_target_ate(OutcomeModel{cfg.model, 1.0}, pop));
  }

  const std::size_t tasks = n_sweep * cfg.reps;
  std::vector<std::exception_ptr> errors(tasks);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  const auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks || failed.load()) return;
      const std::size_t s = t / cfg.reps;
      const std::size_t r = t % cfg.reps;
      try {
        const auto res = run_replication(points[s], r);
        for (std::size_t m = 0; m < n_methods; ++m) {
          est.values[(s * n_methods + m) * cfg.reps + r] = res.at(est.methods[m].name());
        }
      } catch (...) {
        errors[t] = std::current_exception();
        failed = true;
      }
    }
  };

  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, tasks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return est;
}

std::vector<SweepResult> aggregate(const ScenarioConfig& cfg, const SweepEstimates& est) {
  std::vector<SweepResult> rows;
  const double reps = static_cast<double>(est.reps);
  for (std::size_t s = 0; s < est.sweep_values.size(); ++s) {
    const double tau = est.true_ate[s];
    for (std::size_t m = 0; m < est.methods.size(); ++m) {
      double sum = 0.0;
      for (std::size_t r = 0; r < est.reps; ++r) sum += est.at(s, m, r);
      const double mean = sum / reps;
      double ss = 0.0;
      double se = 0.0;
      for (std::size_t r = 0; r < est.reps; ++r) {
        const double v = est.at(s, m, r);
        ss += (v - mean) * (v - mean);
        se += (v - tau) * (v - tau);
      }
      rows.push_back(SweepResult{cfg.name, to_string(cfg.sweep_param), est.sweep_values[s], est.methods[m].name(),
                                 mean - tau, ss / reps, se / reps, mean, tau, est.reps, cfg.base_seed});
    }
  }
  return rows;
}

std::vector<SweepResult> run_sweep(const ScenarioConfig& cfg, unsigned threads) {
  return aggregate(cfg, collect_estimates(cfg, threads));
}

void write_results_csv(std::ostream& out, const std::vector<SweepResult>& rows) {
  out << "scenario_id,sweep_param,sweep_value,method,reps,base_seed,true_ate,mean_estimate,bias,variance,mse\n";
  for (const auto& r : rows) {
    out << r.scenario_id << ',' << r.sweep_param << ',' << format_number(r.sweep_value, 17) << ',' << r.method << ','
        << r.reps << ',' << r.base_seed << ',' << format_number(r.true_ate, 17) << ','
        << format_number(r.mean_estimate, 17) << ',' << format_number(r.bias, 17) << ','
        << format_number(r.variance, 17) << ',' << format_number(r.mse, 17) << '\n';
  }
}

std::string results_csv(const std::vector<SweepResult>& rows) {
  std::ostringstream ss;
  write_results_csv(ss, rows);
  return ss.str();
}

}  // namespace tbal
