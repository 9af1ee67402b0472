#pragma once

#include <cmath>
#include <functional>

#include "tbal/population_model.hpp"
#include "tbal/randomization.hpp"

namespace testing {

struct Instance {
  tbal::Matrix x;
  tbal::Vector w;
  tbal::PotentialOutcomes po;
};

inline Instance make_instance(std::uint64_t seed, std::size_t n, int d, double delta = 0.3) {
  tbal::Rng rng(seed);
  const auto pop = tbal::GaussianPopulationPair::isotropic(d, delta);
  Instance inst;
  inst.x = tbal::sample_covariates(pop, tbal::Population::source, n, rng);
  inst.w = tbal::importance_weights(pop, inst.x);
  inst.po = tbal::generate_outcomes(tbal::OutcomeModel{}, inst.x, rng);
  return inst;
}

// Composite Simpson with interval halving until two estimates agree.
inline double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const auto simpson = [&](double a, double b) { return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b)); };
  const std::function<double(double, double, double, double, int)> rec = [&](double a, double b, double whole,
                                                                              double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double left = simpson(a, m);
    const double right = simpson(m, b);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
    return rec(a, m, left, eps / 2.0, depth - 1) + rec(m, b, right, eps / 2.0, depth - 1);
  };
  return rec(lo, hi, simpson(lo, hi), tol, 50);
}

}  // namespace testing
