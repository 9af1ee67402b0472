#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "tbal/rng.hpp"

namespace tbal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Balanced signed assignment z in {-1,+1}^n with n/2 of each sign.
class AssignmentVector {
 public:
  explicit AssignmentVector(Vector z);
  explicit AssignmentVector(const std::vector<int>& z);
  // From the 0/1 treatment indicator a, z_i = 2 a_i - 1.
  static AssignmentVector from_treatment(const std::vector<int>& a);

  std::size_t size() const { return static_cast<std::size_t>(z_.size()); }
  int operator[](std::size_t i) const { return z_[static_cast<Eigen::Index>(i)] > 0 ? 1 : -1; }
  int treatment(std::size_t i) const { return z_[static_cast<Eigen::Index>(i)] > 0 ? 1 : 0; }
  const Vector& signs() const { return z_; }
  std::vector<int> treatment() const;
  AssignmentVector negated() const { return AssignmentVector(Vector(-z_)); }

  bool operator==(const AssignmentVector& other) const { return z_ == other.z_; }

 private:
  Vector z_;
};

// Covariates x (rows = units) with positive weights w and the cached row-scaled x_w.
class WeightedCovariates {
 public:
  WeightedCovariates(Matrix x, Vector w);
  static WeightedCovariates unit(Matrix x);

  Eigen::Index n() const { return x_.rows(); }
  Eigen::Index d() const { return x_.cols(); }
  const Matrix& x() const { return x_; }
  const Vector& w() const { return w_; }
  const Matrix& xw() const { return xw_; }

 private:
  Matrix x_;
  Vector w_;
  Matrix xw_;
};

enum class BalanceCriterion { none, source, target, alternate };

const char* to_string(BalanceCriterion c);

struct ThresholdRule {
  double a;
};

struct QuantileRule {
  double alpha;
  std::size_t pool;
};

struct BalanceSpec {
  BalanceCriterion criterion = BalanceCriterion::target;
  std::variant<ThresholdRule, QuantileRule> rule = QuantileRule{0.99, 100};
  std::size_t max_draws = 1'000'000;
  // Adds 1e-10 * trace(C) / d to the diagonal instead of failing on ill-conditioned C.
  bool ridge = false;

  static BalanceSpec threshold(BalanceCriterion c, double a);
  static BalanceSpec quantile(BalanceCriterion c, double alpha, std::size_t pool);
  void validate() const;
};

struct BalanceStatistic {
  double value;
  BalanceCriterion criterion;
  double covariance_condition_number;
};

// K = ceil(pool / (1 - alpha)), robust to the rounding of 1 - alpha.
std::size_t quantile_candidate_count(double alpha, std::size_t pool);

AssignmentVector draw_balanced_assignment(std::size_t n, Rng& rng);

// Draws balanced assignments into a caller-owned buffer via a partial
// Fisher-Yates pass over a persistent index permutation.
class AssignmentSampler {
 public:
  explicit AssignmentSampler(std::size_t n);
  void draw(Rng& rng, Vector& z);
  std::size_t n() const { return perm_.size(); }

 private:
  std::vector<std::uint32_t> perm_;
};

Vector weighted_mean_difference(const WeightedCovariates& wc, const AssignmentVector& z);
Matrix weighted_mean_covariance(const WeightedCovariates& wc);
Matrix weighted_mean_covariance(const Matrix& xw);

// Balance statistic for one dataset. C is factorized once and reused, so each
// evaluation costs one GEMV and one triangular solve.
class BalanceEvaluator {
 public:
  BalanceEvaluator(const WeightedCovariates& wc, BalanceCriterion criterion, bool ridge = false);

  double operator()(const Vector& z) const;
  double value(const AssignmentVector& z) const { return (*this)(z.signs()); }
  BalanceStatistic statistic(const AssignmentVector& z) const;

  BalanceCriterion criterion() const { return criterion_; }
  double condition_number() const { return condition_; }
  std::size_t n() const { return static_cast<std::size_t>(data_.rows()); }

 private:
  BalanceCriterion criterion_;
  Matrix data_;  // x for source balance, x_w otherwise
  Eigen::LLT<Matrix> llt_;
  double condition_ = 1.0;
};

inline constexpr double kMaxConditionNumber = 1e12;

BalanceStatistic mahalanobis_statistic(const WeightedCovariates& wc, const AssignmentVector& z,
                                       BalanceCriterion criterion, bool ridge = false);

struct ThresholdResult {
  AssignmentVector z;
  std::size_t draws_used;
  double statistic;
};

struct QuantileResult {
  AssignmentVector z;
  double realized_threshold;
  double statistic;
  std::size_t candidates;
};

ThresholdResult rerandomize_threshold(const WeightedCovariates& wc, const BalanceSpec& spec, Rng& rng);
ThresholdResult rerandomize_threshold(const BalanceEvaluator& eval, double a, std::size_t max_draws,
                                      Rng& rng);

QuantileResult rerandomize_quantile(const WeightedCovariates& wc, const BalanceSpec& spec, Rng& rng);
QuantileResult rerandomize_quantile(const BalanceEvaluator& eval, const QuantileRule& rule,
                                    std::size_t max_draws, Rng& rng);

// Empirical (1 - alpha) quantile of M: the smallest sampled value whose
// empirical CDF reaches 1 - alpha.
double estimate_threshold(const WeightedCovariates& wc, BalanceCriterion criterion, double alpha,
                          std::size_t n_mc, Rng& rng, bool ridge = false);

// All C(n, n/2) balanced assignments, n even and at most 12.
std::vector<AssignmentVector> enumerate_balanced_assignments(std::size_t n);

}  // namespace tbal
