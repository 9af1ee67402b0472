#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tbal/randomization.hpp"

namespace tbal {

struct CheckResult {
  std::string name;
  bool passed;
  double value;
  double tolerance;
};

// Replaces the balance statistic inside the suites. Used to confirm that the
// checks notice a broken statistic.
using StatisticHook = std::function<double(const BalanceEvaluator&, const Vector&)>;

struct ValidationOptions {
  std::uint64_t seed = 1;
  StatisticHook statistic;  // empty: the real statistic
};

// Exhaustive checks on small instances (n = 8).
std::vector<CheckResult> run_enumeration_suite(const ValidationOptions& opt);
// Seeded Monte Carlo checks.
std::vector<CheckResult> run_mc_suite(const ValidationOptions& opt);

// Statistic that breaks the z / -z symmetry by a relative 1e-9.
StatisticHook sign_asymmetric_statistic();

std::string format_check(const CheckResult& c);

}  // namespace tbal
