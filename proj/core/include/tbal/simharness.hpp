#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tbal/estimators.hpp"
#include "tbal/population_model.hpp"

namespace tbal {

struct Method {
  EstimatorKind estimator;
  BalanceMethod balance;

  std::string name() const;  // e.g. "WE-TB"
  static Method parse(const std::string& s);
  bool operator==(const Method&) const = default;
};

// All six combinations in lexical name order.
std::vector<Method> all_methods();

enum class SweepParam { none, n, delta, clip_threshold };
enum class DatasetMode { redraw, fixed };

const char* to_string(SweepParam p);

struct ScenarioConfig {
  std::string name = "scenario";
  OutcomeKind model = OutcomeKind::linear;
  int d = 10;
  double delta = 0.3;
  std::size_t n = 1000;
  double alpha = 0.99;
  std::size_t pool = 100;
  std::optional<double> clip_threshold;
  std::size_t reps = 500;
  std::uint64_t base_seed = 1;
  std::vector<Method> methods = all_methods();
  SweepParam sweep_param = SweepParam::none;
  std::vector<double> sweep_values;
  // fixed: one (x, y) table shared by every replication; only assignments vary.
  DatasetMode dataset = DatasetMode::redraw;

  void validate() const;
  // Copy with the sweep parameter set to value.
  ScenarioConfig at(double value) const;
  // Sweep values in ascending order; a single placeholder when there is no sweep.
  std::vector<double> sweep_points() const;
};

ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

std::uint64_t derive_substream_seed(std::uint64_t base_seed, const std::string& scenario_id,
                                    std::uint64_t rep_index);

struct ReplicationData {
  Matrix x;
  Vector raw_weights;
  Vector weights;  // clipped
  PotentialOutcomes outcomes;
};

// Source sample, weights and outcome table of one replication. In fixed
// dataset mode every rep_index yields the same table.
ReplicationData make_replication_data(const ScenarioConfig& cfg, std::size_t rep_index);

// Estimates keyed by method name; cfg must not carry a sweep.
std::map<std::string, double> run_replication(const ScenarioConfig& cfg, std::size_t rep_index);

struct SweepEstimates {
  std::vector<double> sweep_values;  // ascending
  std::vector<Method> methods;       // lexical
  std::vector<double> true_ate;      // per sweep value
  std::size_t reps = 0;
  std::vector<double> values;        // [sweep][method][rep]

  double at(std::size_t sweep, std::size_t method, std::size_t rep) const {
    return values[(sweep * methods.size() + method) * reps + rep];
  }
};

// threads = 0 uses the hardware concurrency. Output does not depend on threads.
SweepEstimates collect_estimates(const ScenarioConfig& cfg, unsigned threads = 1);

struct SweepResult {
  std::string scenario_id;
  std::string sweep_param;
  double sweep_value;
  std::string method;
  double bias;
  double variance;
  double mse;
  double mean_estimate;
  double true_ate;
  std::size_t reps;
  std::uint64_t base_seed;
};

std::vector<SweepResult> aggregate(const ScenarioConfig& cfg, const SweepEstimates& est);
std::vector<SweepResult> run_sweep(const ScenarioConfig& cfg, unsigned threads = 1);

void write_results_csv(std::ostream& out, const std::vector<SweepResult>& rows);
std::string results_csv(const std::vector<SweepResult>& rows);

}  // namespace tbal
