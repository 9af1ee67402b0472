#include "tbal/estimators.hpp"

#include "tbal/errors.hpp"

namespace tbal {

const char* to_string(EstimatorKind k) { return k == EstimatorKind::weighted ? "WE" : "UE"; }

const char* to_string(BalanceMethod m) {
  switch (m) {
    case BalanceMethod::cr: return "CR";
    case BalanceMethod::sb: return "SB";
    case BalanceMethod::tb: return "TB";
  }
  return "?";
}

double weighted_estimator(const Vector& y_obs, const AssignmentVector& z, const Vector& w) {
  const auto n = static_cast<Eigen::Index>(z.size());
  if (y_obs.size() != n || w.size() != n) throw InvalidArgument("estimator inputs have mismatched lengths");
  double treated = 0.0;
  double control = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = w[i] * y_obs[i];
    if (z.signs()[i] > 0.0) {
      treated += v;
    } else {
      control += v;
    }
  }
  const double half = static_cast<double>(n / 2);
  return treated / half - control / half;
}

double unweighted_estimator(const Vector& y_obs, const AssignmentVector& z) {
  return weighted_estimator(y_obs, z, Vector::Ones(y_obs.size()));
}

HtCheck ht_decomposition_check(const Vector& y0, const Vector& y1, const Vector& w, const AssignmentVector& z) {
  const auto n = static_cast<Eigen::Index>(z.size());
  if (y0.size() != n || y1.size() != n || w.size() != n) {
    throw InvalidArgument("decomposition inputs have mismatched lengths");
  }
  const Vector y_obs = (z.signs().array() > 0.0).select(y1, y0);
  const double nn = static_cast<double>(n);
  const double sample_effect = w.dot(y1 - y0) / nn;
  const Vector c = 0.5 * w.cwiseProduct(y1 + y0);
  return HtCheck{weighted_estimator(y_obs, z, w) - sample_effect, 2.0 / nn * c.dot(z.signs())};
}

}  // namespace tbal
