#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/Core>

#include "tbal/rng.hpp"

namespace tbal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Source and target normals N(mu_source, I) and N(mu_target, I).
class GaussianPopulationPair {
 public:
  GaussianPopulationPair(Vector mu_source, Vector mu_target);
  // Source mean 1, target mean 1 + delta in every coordinate.
  static GaussianPopulationPair isotropic(Eigen::Index d, double delta);

  Eigen::Index d() const { return mu_source_.size(); }
  const Vector& mu_source() const { return mu_source_; }
  const Vector& mu_target() const { return mu_target_; }
  Vector delta() const { return mu_target_ - mu_source_; }

 private:
  Vector mu_source_;
  Vector mu_target_;
};

enum class Population { source, target };

enum class OutcomeKind { linear, nonlinear };

const char* to_string(OutcomeKind k);

struct OutcomeModel {
  OutcomeKind kind = OutcomeKind::linear;
  double noise_sd = 1.0;
};

struct WeightPolicy {
  std::optional<double> clip_threshold;
};

struct PotentialOutcomes {
  Vector y0;
  Vector y1;
};

double log_density_ratio(const GaussianPopulationPair& pop, const Vector& x);
double importance_weight(const GaussianPopulationPair& pop, const Vector& x);
Vector importance_weights(const GaussianPopulationPair& pop, const Matrix& x);

double nested_trial_weight(double p_select_given_x, double p_select);

Vector clip_weights(const Vector& w, const WeightPolicy& policy);

Matrix sample_covariates(const GaussianPopulationPair& pop, Population which, std::size_t n, Rng& rng);

PotentialOutcomes generate_outcomes(const OutcomeModel& model, const Matrix& x, Rng& rng);

double true_target_ate(const OutcomeModel& model, const GaussianPopulationPair& pop);

// Observed outcome under z: y1 where treated, y0 elsewhere.
Vector observed_outcomes(const PotentialOutcomes& po, const Vector& z);

}  // namespace tbal
