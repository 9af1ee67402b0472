#include "tbal/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/QR>

#include "tbal/errors.hpp"

namespace tbal {

namespace {

constexpr int kMaxTerms = 300;
constexpr double kStop = 1e-12;

// sum_{k>=0} x^k / ((s+1)...(s+k)), so that P(s, x) = e^{-x} x^s / Gamma(s+1) * sum.
double gamma_series_sum(double s, double x) {
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= kMaxTerms; ++k) {
    term *= x / (s + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kStop) break;
  }
  return sum;
}

double lower_gamma_series(double s, double x) {
  return gamma_series_sum(s, x) * std::exp(-x + s * std::log(x) - std::lgamma(s + 1.0));
}

// Q(s, x) by the modified Lentz continued fraction.
double upper_gamma_fraction(double s, double x) {
  const double tiny = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxTerms; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kStop) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

void check_dof(int d) {
  if (d < 1) throw InvalidArgument("degrees of freedom must be positive");
}

}  // namespace

double chi_square_cdf(int d, double a) {
  check_dof(d);
  if (!(a >= 0.0)) throw InvalidArgument("chi-square argument must be nonnegative");
  if (a == 0.0) return 0.0;
  if (std::isinf(a)) return 1.0;
  const double s = 0.5 * d;
  const double x = 0.5 * a;
  if (a < d + 1.0) return std::min(1.0, lower_gamma_series(s, x));
  return std::clamp(1.0 - upper_gamma_fraction(s, x), 0.0, 1.0);
}

double variance_reduction_factor(int d, double a) {
  check_dof(d);
  if (!(a > 0.0)) throw InvalidArgument("variance reduction factor needs a > 0");
  if (std::isinf(a)) return 1.0;
  if (a < d + 1.0) {
    // Ratio of the two series directly; both CDFs underflow for tiny a.
    const double s = 0.5 * d;
    const double x = 0.5 * a;
    return x / (s + 1.0) * gamma_series_sum(s + 1.0, x) / gamma_series_sum(s, x);
  }
  return chi_square_cdf(d + 2, a) / chi_square_cdf(d, a);
}

double threshold_for_alpha(int d, double alpha) {
  check_dof(d);
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const double target = 1.0 - alpha;
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(d));
  while (chi_square_cdf(d, hi) < target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi_square_cdf(d, mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Matrix projection_apply(const Matrix& s) {
  if (s.rows() < 1) throw InvalidArgument("projection needs at least one row");
  return s.rowwise() - s.colwise().mean();
}

double squared_multiple_correlation(const Matrix& s, const Vector& c_tilde) {
  if (s.rows() != c_tilde.size()) throw InvalidArgument("regressor and outcome lengths differ");
  if (s.rows() < 2) throw InvalidArgument("R^2 needs at least two units");
  const Vector qc = c_tilde.array() - c_tilde.mean();
  const double total = qc.squaredNorm();
  const double scale = c_tilde.cwiseAbs().maxCoeff();
  if (!(std::sqrt(total) > 1e-13 * scale * std::sqrt(static_cast<double>(c_tilde.size())))) {
    throw DegenerateOutcomeError("outcome vector is constant after centering; R^2 undefined");
  }
  const Matrix qs = projection_apply(s);
  const Vector beta = qs.completeOrthogonalDecomposition().solve(qc);
  const double resid = (qc - qs * beta).squaredNorm();
  return std::clamp((total - resid) / total, 0.0, 1.0);
}

double predicted_conditional_variance(double var_cr, double r2, double v) {
  if (!(var_cr >= 0.0)) throw InvalidArgument("variance must be nonnegative");
  if (!(r2 >= 0.0 && r2 <= 1.0)) throw InvalidArgument("r2 must lie in [0, 1]");
  if (!(v > 0.0 && v <= 1.0)) throw InvalidArgument("v must lie in (0, 1]");
  return var_cr * (1.0 - (1.0 - v) * r2);
}

VarianceDecomposition d1_variance_decomposition(double beta, double sigma_eps, const Vector& w,
                                                double second_moment) {
  if (w.size() < 2) throw InvalidArgument("need at least two weights");
  if (!(second_moment >= 0.0)) throw InvalidArgument("second moment must be nonnegative");
  const double n = static_cast<double>(w.size());
  const double linear = 4.0 / (n * n) * beta * beta * second_moment;
  const double noise = 4.0 / (n * n) * sigma_eps * sigma_eps * w.squaredNorm();
  return VarianceDecomposition{linear, noise, linear + noise};
}

Truncation1d truncation_oracle_1d(const std::vector<double>& values, double alpha) {
  const std::size_t m = values.size();
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
  if (m == 0) throw InvalidArgument("empty admissible set");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < m; ++i) {
    if (sorted[i] != -sorted[m - 1 - i]) throw InvalidArgument("values do not come in +/- pairs");
  }

  // A sign-symmetric set holds whole pairs, so round the required size up to even.
  const double share = (1.0 - alpha) * static_cast<double>(m);
  auto k = static_cast<std::size_t>(std::ceil(share - 1e-9 * share));
  k += k % 2;
  k = std::min(k, m);
  if (k == 0) throw InvalidArgument("empty admissible set");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = std::abs(values[a]);
    const double fb = std::abs(values[b]);
    return fa < fb || (fa == fb && values[a] < values[b]);
  });
  order.resize(k);

  double sum = 0.0;
  for (std::size_t idx : order) sum += values[idx] * values[idx];
  std::sort(order.begin(), order.end());
  return Truncation1d{sum / static_cast<double>(k), std::move(order)};
}

TraceTruncation trace_truncation_oracle(const Matrix& samples, double alpha, Rng& rng, std::size_t budget) {
  const auto m = static_cast<std::size_t>(samples.rows());
  if (m < 1000) throw InvalidArgument("trace oracle needs at least 1000 samples");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
  if (budget < 1) throw InvalidArgument("adversary budget must be positive");

  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) norms[i] = samples.row(static_cast<Eigen::Index>(i)).squaredNorm();

  const double share = (1.0 - alpha) * static_cast<double>(m);
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(share - 1e-9 * share)));
  std::vector<double> sorted = norms;
  std::sort(sorted.begin(), sorted.end());
  double tail = 0.0;
  for (std::size_t i = 0; i < k; ++i) tail += sorted[i];
  tail /= static_cast<double>(k);

  // Adversaries are random size-k subsets. Adding each member's reflection
  // makes a subset sign-symmetric with zero mean and leaves its trace unchanged.
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < budget; ++b) {
    std::vector<double> picked(k);
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(idx[j], idx[j + rng.bounded(m - j)]);
      picked[j] = norms[idx[j]];
    }
    std::sort(picked.begin(), picked.end());
    best = std::min(best, std::accumulate(picked.begin(), picked.end(), 0.0) / static_cast<double>(k));
  }
  return TraceTruncation{tail, best};
}

Matrix truncated_identity_covariance(int d, double a, std::size_t n_samples, Rng& rng) {
  check_dof(d);
  if (!(a > 0.0)) throw InvalidArgument("truncation radius must be positive");
  if (n_samples < 100000) throw InvalidArgument("truncated covariance needs at least 1e5 samples");
  Matrix acc = Matrix::Zero(d, d);
  Vector w(d);
  std::size_t accepted = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (int j = 0; j < d; ++j) w[j] = rng.normal();
    if (w.squaredNorm() < a) {
      acc.selfadjointView<Eigen::Lower>().rankUpdate(w);
      ++accepted;
    }
  }
  if (accepted < 1000) {
    throw InsufficientSamplesError("only " + std::to_string(accepted) + " of " + std::to_string(n_samples) +
                                   " draws fell inside the truncation region");
  }
  Matrix out = acc.selfadjointView<Eigen::Lower>();
  return out / static_cast<double>(accepted);
}

double expected_beta_trace_form(const Matrix& m, double l) {
  if (m.rows() != m.cols() || m.rows() < 1) throw InvalidArgument("matrix must be square");
  if (!(l > 0.0)) throw InvalidArgument("radius must be positive");
  return l * l / static_cast<double>(m.rows()) * m.trace();
}

}  // namespace tbal
