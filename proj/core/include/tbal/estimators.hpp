#pragma once

#include <optional>

#include <Eigen/Core>

#include "tbal/randomization.hpp"

namespace tbal {

enum class EstimatorKind { weighted, unweighted };
enum class BalanceMethod { cr, sb, tb };

const char* to_string(EstimatorKind k);  // "WE" / "UE"
const char* to_string(BalanceMethod m);  // "CR" / "SB" / "TB"

struct EstimateRecord {
  double estimate;
  EstimatorKind method;
  BalanceMethod balance;
  std::size_t n;
  std::optional<double> clip_threshold;
};

// (1/n1) sum_{z=+1} w y - (1/n0) sum_{z=-1} w y
double weighted_estimator(const Vector& y_obs, const AssignmentVector& z, const Vector& w);
double unweighted_estimator(const Vector& y_obs, const AssignmentVector& z);

struct HtCheck {
  double lhs;
  double rhs;
};

// lhs: weighted estimate minus (1/n) sum w (y1 - y0); rhs: (2/n) c~'z with c~ = w (y1 + y0) / 2.
HtCheck ht_decomposition_check(const Vector& y0, const Vector& y1, const Vector& w, const AssignmentVector& z);

}  // namespace tbal
