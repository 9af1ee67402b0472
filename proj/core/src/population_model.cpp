#include "tbal/population_model.hpp"

#include <cmath>
#include <string>

#include "tbal/errors.hpp"

namespace tbal {

GaussianPopulationPair::GaussianPopulationPair(Vector mu_source, Vector mu_target)
    : mu_source_(std::move(mu_source)), mu_target_(std::move(mu_target)) {
  if (mu_source_.size() != mu_target_.size() || mu_source_.size() < 1) {
    throw InvalidArgument("source and target means must have the same positive dimension");
  }
  if (!mu_source_.allFinite() || !mu_target_.allFinite()) {
    throw InvalidArgument("population means must be finite");
  }
}

GaussianPopulationPair GaussianPopulationPair::isotropic(Eigen::Index d, double delta) {
  if (d < 1) throw InvalidArgument("dimension must be positive");
  return GaussianPopulationPair(Vector::Ones(d), Vector::Constant(d, 1.0 + delta));
}

const char* to_string(OutcomeKind k) { return k == OutcomeKind::linear ? "linear" : "nonlinear"; }

double log_density_ratio(const GaussianPopulationPair& pop, const Vector& x) {
  if (x.size() != pop.d()) throw InvalidArgument("covariate dimension does not match population");
  const Vector delta = pop.delta();
  return delta.dot(x - pop.mu_source()) - 0.5 * delta.squaredNorm();
}

double importance_weight(const GaussianPopulationPair& pop, const Vector& x) {
  return std::exp(log_density_ratio(pop, x));
}

Vector importance_weights(const GaussianPopulationPair& pop, const Matrix& x) {
  if (x.cols() != pop.d()) throw InvalidArgument("covariate dimension does not match population");
  const Vector delta = pop.delta();
  const double half = 0.5 * delta.squaredNorm();
  Vector w(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    w[i] = std::exp(delta.dot(x.row(i).transpose() - pop.mu_source()) - half);
  }
  return w;
}

double nested_trial_weight(double p_select_given_x, double p_select) {
  const auto inside = [](double p) { return p > 0.0 && p < 1.0; };
  if (!inside(p_select_given_x) || !inside(p_select)) {
    throw InvalidArgument("selection probabilities must lie strictly inside (0, 1)");
  }
  return ((1.0 - p_select_given_x) / p_select_given_x) * (p_select / (1.0 - p_select));
}

Vector clip_weights(const Vector& w, const WeightPolicy& policy) {
  if (!policy.clip_threshold) return w;
  const double t = *policy.clip_threshold;
  if (!(t > 0.0)) throw InvalidArgument("clip threshold must be positive");
  return w.cwiseMin(t);
}

Matrix sample_covariates(const GaussianPopulationPair& pop, Population which, std::size_t n, Rng& rng) {
  if (n < 1) throw InvalidArgument("sample size must be positive");
  const Vector& mu = which == Population::source ? pop.mu_source() : pop.mu_target();
  Matrix x(static_cast<Eigen::Index>(n), pop.d());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = mu[j] + rng.normal();
  }
  return x;
}

PotentialOutcomes generate_outcomes(const OutcomeModel& model, const Matrix& x, Rng& rng) {
  if (!(model.noise_sd >= 0.0)) throw InvalidArgument("noise_sd must be nonnegative");
  PotentialOutcomes po{Vector(x.rows()), Vector(x.rows())};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    if (model.kind == OutcomeKind::linear) {
      const double s = x.row(i).sum();
      po.y0[i] = s + model.noise_sd * e0;
      po.y1[i] = 3.0 * s + model.noise_sd * e1;
    } else {
      const double q = x.row(i).squaredNorm();
      po.y0[i] = q + model.noise_sd * e0;
      po.y1[i] = 2.0 * q + model.noise_sd * e1;
    }
  }
  return po;
}

double true_target_ate(const OutcomeModel& model, const GaussianPopulationPair& pop) {
  const Vector& mu = pop.mu_target();
  if (model.kind == OutcomeKind::linear) return 2.0 * mu.sum();
  return (mu.array().square() + 1.0).sum();
}

Vector observed_outcomes(const PotentialOutcomes& po, const Vector& z) {
  if (po.y0.size() != z.size() || po.y1.size() != z.size()) {
    throw InvalidArgument("outcome and assignment lengths differ");
  }
  return (z.array() > 0.0).select(po.y1, po.y0);
}

}  // namespace tbal
