#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

#include "tbal/population_model.hpp"

namespace tbal {

// Covariate CSV: header x1,...,xd with an optional trailing w column.
struct CovariateTable {
  Matrix x;
  std::optional<Vector> w;
};

CovariateTable read_covariates_csv(const std::string& path);
void write_covariates_csv(const std::string& path, const Matrix& x, const std::optional<Vector>& w = {});

// Potential-outcome CSV with header y0,y1.
PotentialOutcomes read_outcomes_csv(const std::string& path);
void write_outcomes_csv(const std::string& path, const PotentialOutcomes& po);

// printf %g rendering with the given number of significant digits.
std::string format_number(double v, int significant_digits);

}  // namespace tbal
