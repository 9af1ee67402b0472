#include "tbal/randomization.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>

#include "tbal/errors.hpp"

namespace tbal {

namespace {

void check_balanced(const Vector& z) {
  const auto n = z.size();
  if (n < 2 || n % 2 != 0) {
    throw InvalidArgument("assignment length must be even and at least 2, got " + std::to_string(n));
  }
  Eigen::Index plus = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z[i] == 1.0) {
      ++plus;
    } else if (z[i] != -1.0) {
      throw InvalidArgument("assignment entries must be +1 or -1");
    }
  }
  if (2 * plus != n) {
    throw InvalidArgument("assignment is not balanced: " + std::to_string(plus) + " of " +
                          std::to_string(n) + " units treated");
  }
}

double condition_number_of(const Matrix& c) {
  if (c.rows() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !std::isfinite(hi)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

AssignmentVector::AssignmentVector(Vector z) : z_(std::move(z)) { check_balanced(z_); }

AssignmentVector::AssignmentVector(const std::vector<int>& z) : z_(static_cast<Eigen::Index>(z.size())) {
  for (std::size_t i = 0; i < z.size(); ++i) z_[static_cast<Eigen::Index>(i)] = z[i];
  check_balanced(z_);
}

AssignmentVector AssignmentVector::from_treatment(const std::vector<int>& a) {
  std::vector<int> z(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != 0 && a[i] != 1) throw InvalidArgument("treatment indicators must be 0 or 1");
    z[i] = 2 * a[i] - 1;
  }
  return AssignmentVector(z);
}

std::vector<int> AssignmentVector::treatment() const {
  std::vector<int> a(size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = treatment(i);
  return a;
}

WeightedCovariates::WeightedCovariates(Matrix x, Vector w) : x_(std::move(x)), w_(std::move(w)) {
  if (x_.rows() != w_.size()) {
    throw InvalidArgument("covariates have " + std::to_string(x_.rows()) + " rows but " +
                          std::to_string(w_.size()) + " weights were given");
  }
  if (x_.cols() < 1) throw InvalidArgument("covariate matrix needs at least one column");
  if (!x_.allFinite()) throw InvalidArgument("covariates must be finite");
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    if (!(w_[i] > 0.0) || !std::isfinite(w_[i])) {
      throw InvalidArgument("weights must be positive and finite (row " + std::to_string(i) + ")");
    }
  }
  xw_ = w_.asDiagonal() * x_;
}

WeightedCovariates WeightedCovariates::unit(Matrix x) {
  Vector w = Vector::Ones(x.rows());
  return WeightedCovariates(std::move(x), std::move(w));
}

const char* to_string(BalanceCriterion c) {
  switch (c) {
    case BalanceCriterion::none: return "none";
    case BalanceCriterion::source: return "source";
    case BalanceCriterion::target: return "target";
    case BalanceCriterion::alternate: return "alternate";
  }
  return "unknown";
}

BalanceSpec BalanceSpec::threshold(BalanceCriterion c, double a) {
  BalanceSpec s;
  s.criterion = c;
  s.rule = ThresholdRule{a};
  return s;
}

BalanceSpec BalanceSpec::quantile(BalanceCriterion c, double alpha, std::size_t pool) {
  BalanceSpec s;
  s.criterion = c;
  s.rule = QuantileRule{alpha, pool};
  return s;
}

void BalanceSpec::validate() const {
  if (max_draws < 1) throw InvalidArgument("max_draws must be positive");
  if (const auto* t = std::get_if<ThresholdRule>(&rule)) {
    if (!(t->a >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
  } else {
    const auto& q = std::get<QuantileRule>(rule);
    if (!(q.alpha > 0.0 && q.alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    if (q.pool < 1) throw InvalidArgument("pool must be at least 1");
  }
}

std::size_t quantile_candidate_count(double alpha, std::size_t pool) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (pool < 1) throw InvalidArgument("pool must be at least 1");
  const double k = static_cast<double>(pool) / (1.0 - alpha);
  if (!(k < 1e18)) throw InvalidArgument("candidate count overflows");
  return static_cast<std::size_t>(std::ceil(k - 1e-9 * k));
}

AssignmentVector draw_balanced_assignment(std::size_t n, Rng& rng) {
  if (n < 2 || n % 2 != 0) {
    throw InvalidArgument("n must be even and at least 2, got " + std::to_string(n));
  }
  Vector z(static_cast<Eigen::Index>(n));
  const auto half = static_cast<Eigen::Index>(n / 2);
  z.head(half).setOnes();
  z.tail(half).setConstant(-1.0);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = rng.bounded(i + 1);
    std::swap(z[static_cast<Eigen::Index>(i)], z[static_cast<Eigen::Index>(j)]);
  }
  return AssignmentVector(std::move(z));
}

AssignmentSampler::AssignmentSampler(std::size_t n) : perm_(n) {
  if (n < 2 || n % 2 != 0) {
    throw InvalidArgument("n must be even and at least 2, got " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) perm_[i] = static_cast<std::uint32_t>(i);
}

void AssignmentSampler::draw(Rng& rng, Vector& z) {
  const std::size_t n = perm_.size();
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const auto j = k + rng.bounded(n - k);
    std::swap(perm_[k], perm_[j]);
  }
  z.setConstant(static_cast<Eigen::Index>(n), -1.0);
  for (std::size_t k = 0; k < half; ++k) z[perm_[k]] = 1.0;
}

Vector weighted_mean_difference(const WeightedCovariates& wc, const AssignmentVector& z) {
  if (static_cast<Eigen::Index>(z.size()) != wc.n()) {
    throw InvalidArgument("assignment length does not match the number of units");
  }
  const double scale = 2.0 / static_cast<double>(z.size());
  Vector u = wc.xw().transpose() * z.signs();
  return scale * u;
}

Matrix weighted_mean_covariance(const Matrix& xw) {
  const auto n = xw.rows();
  if (n < 2) throw InvalidArgument("covariance needs at least two units");
  const auto d = xw.cols();
  Matrix g = Matrix::Zero(d, d);
  g.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  g = g.selfadjointView<Eigen::Lower>();
  const Vector s = xw.colwise().sum().transpose();
  const double nn = static_cast<double>(n);
  return (nn * g - s * s.transpose()) / (nn - 1.0);
}

Matrix weighted_mean_covariance(const WeightedCovariates& wc) { return weighted_mean_covariance(wc.xw()); }

BalanceEvaluator::BalanceEvaluator(const WeightedCovariates& wc, BalanceCriterion criterion, bool ridge)
    : criterion_(criterion), data_(criterion == BalanceCriterion::source ? wc.x() : wc.xw()) {
  if (data_.rows() < 2) throw InvalidArgument("balance statistic needs at least two units");
  Matrix c = weighted_mean_covariance(data_);
  condition_ = condition_number_of(c);
  const bool needs_inverse = criterion == BalanceCriterion::source || criterion == BalanceCriterion::target;
  if (!needs_inverse) return;

  if (!(condition_ <= kMaxConditionNumber) && ridge) {
    const double eps = 1e-10 * c.trace() / static_cast<double>(c.rows());
    c.diagonal().array() += eps;
    condition_ = condition_number_of(c);
  }
  if (!(condition_ <= kMaxConditionNumber)) {
    std::ostringstream msg;
    msg << "singular covariance: condition number " << condition_ << " exceeds " << kMaxConditionNumber;
    throw SingularCovarianceError(msg.str(), condition_);
  }
  llt_.compute(c);
  if (llt_.info() != Eigen::Success) {
    throw SingularCovarianceError("singular covariance: Cholesky factorization failed", condition_);
  }
}

double BalanceEvaluator::operator()(const Vector& z) const {
  if (z.size() != data_.rows()) throw InvalidArgument("assignment length does not match the number of units");
  switch (criterion_) {
    case BalanceCriterion::none:
      return 0.0;
    case BalanceCriterion::alternate: {
      const double scale = 2.0 / static_cast<double>(z.size());
      Vector u = data_.transpose() * z;
      u *= scale;
      return u.squaredNorm();
    }
    case BalanceCriterion::source:
    case BalanceCriterion::target: {
      Vector u = data_.transpose() * z;
      llt_.matrixL().solveInPlace(u);
      return u.squaredNorm();
    }
  }
  return 0.0;
}

BalanceStatistic BalanceEvaluator::statistic(const AssignmentVector& z) const {
  return BalanceStatistic{value(z), criterion_, condition_};
}

BalanceStatistic mahalanobis_statistic(const WeightedCovariates& wc, const AssignmentVector& z,
                                       BalanceCriterion criterion, bool ridge) {
  return BalanceEvaluator(wc, criterion, ridge).statistic(z);
}

ThresholdResult rerandomize_threshold(const BalanceEvaluator& eval, double a, std::size_t max_draws,
                                      Rng& rng) {
  if (!(a >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
  if (max_draws < 1) throw InvalidArgument("max_draws must be positive");
  AssignmentSampler sampler(eval.n());
  Vector z;
  for (std::size_t draw = 1; draw <= max_draws; ++draw) {
    sampler.draw(rng, z);
    const double m = eval(z);
    if (m < a) return ThresholdResult{AssignmentVector(std::move(z)), draw, m};
  }
  throw AcceptanceFailure("no assignment satisfied M < " + std::to_string(a) + " in " +
                          std::to_string(max_draws) + " draws (empirical acceptance rate 0)");
}

ThresholdResult rerandomize_threshold(const WeightedCovariates& wc, const BalanceSpec& spec, Rng& rng) {
  spec.validate();
  const auto* rule = std::get_if<ThresholdRule>(&spec.rule);
  if (rule == nullptr) throw InvalidArgument("rerandomize_threshold needs a threshold rule");
  const BalanceEvaluator eval(wc, spec.criterion, spec.ridge);
  return rerandomize_threshold(eval, rule->a, spec.max_draws, rng);
}

QuantileResult rerandomize_quantile(const BalanceEvaluator& eval, const QuantileRule& rule,
                                    std::size_t max_draws, Rng& rng) {
  const std::size_t k = quantile_candidate_count(rule.alpha, rule.pool);
  if (k > max_draws) {
    throw InvalidArgument("quantile rule needs " + std::to_string(k) + " candidates, above max_draws " +
                          std::to_string(max_draws));
  }

  struct Entry {
    double m;
    std::size_t index;
    Vector z;
  };
  const auto before = [](const Entry& lhs, const Entry& rhs) {
    return lhs.m < rhs.m || (lhs.m == rhs.m && lhs.index < rhs.index);
  };

  // Max-heap holding the pool smallest (M, draw index) pairs seen so far.
  std::vector<Entry> heap;
  heap.reserve(rule.pool);
  AssignmentSampler sampler(eval.n());
  Vector z;
  for (std::size_t i = 0; i < k; ++i) {
    sampler.draw(rng, z);
    const double m = eval(z);
    if (heap.size() < rule.pool) {
      heap.push_back(Entry{m, i, z});
      std::push_heap(heap.begin(), heap.end(), before);
    } else if (m < heap.front().m) {
      std::pop_heap(heap.begin(), heap.end(), before);
      heap.back().m = m;
      heap.back().index = i;
      heap.back().z.swap(z);
      std::push_heap(heap.begin(), heap.end(), before);
    }
  }

  const double realized = heap.front().m;
  std::sort(heap.begin(), heap.end(), before);
  Entry& chosen = heap[rng.bounded(heap.size())];
  return QuantileResult{AssignmentVector(std::move(chosen.z)), realized, chosen.m, k};
}

QuantileResult rerandomize_quantile(const WeightedCovariates& wc, const BalanceSpec& spec, Rng& rng) {
  spec.validate();
  const auto* rule = std::get_if<QuantileRule>(&spec.rule);
  if (rule == nullptr) throw InvalidArgument("rerandomize_quantile needs a quantile rule");
  const BalanceEvaluator eval(wc, spec.criterion, spec.ridge);
  return rerandomize_quantile(eval, *rule, spec.max_draws, rng);
}

double estimate_threshold(const WeightedCovariates& wc, BalanceCriterion criterion, double alpha,
                          std::size_t n_mc, Rng& rng, bool ridge) {
  if (n_mc < 100) throw InvalidArgument("estimate_threshold needs n_mc >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const BalanceEvaluator eval(wc, criterion, ridge);
  AssignmentSampler sampler(eval.n());
  std::vector<double> m(n_mc);
  Vector z;
  for (auto& v : m) {
    sampler.draw(rng, z);
    v = eval(z);
  }
  std::sort(m.begin(), m.end());
  const double rank = std::ceil((1.0 - alpha) * static_cast<double>(n_mc));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(n_mc))) - 1;
  return m[idx];
}

std::vector<AssignmentVector> enumerate_balanced_assignments(std::size_t n) {
  if (n < 2 || n % 2 != 0 || n > 12) {
    throw InvalidArgument("enumeration needs an even n in [2, 12], got " + std::to_string(n));
  }
  std::vector<AssignmentVector> out;
  const auto half = static_cast<int>(n / 2);
  for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
    if (std::popcount(mask) != half) continue;
    Vector z(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) z[static_cast<Eigen::Index>(i)] = (mask >> i) & 1U ? 1.0 : -1.0;
    out.emplace_back(std::move(z));
  }
  return out;
}

}  // namespace tbal
