#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "tbal/rng.hpp"

namespace tbal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// P(chi^2_d <= a), i.e. the regularized lower incomplete gamma P(d/2, a/2).
double chi_square_cdf(int d, double a);

// v_{d,a} = P(chi^2_{d+2} <= a) / P(chi^2_d <= a).
double variance_reduction_factor(int d, double a);

// a with P(chi^2_d <= a) = 1 - alpha.
double threshold_for_alpha(int d, double alpha);

// Subtracts the column means (Q s with Q = I - 11'/n).
Matrix projection_apply(const Matrix& s);

// Share of ||Q c||^2 explained by a least-squares fit on Q s.
double squared_multiple_correlation(const Matrix& s, const Vector& c_tilde);

double predicted_conditional_variance(double var_cr, double r2, double v);

struct VarianceDecomposition {
  double linear_term;
  double noise_term;
  double total;
};

// Variance of the weighted estimator for d = 1 outcomes y = beta x + eps with
// independent noise of sd sigma_eps in each arm. second_moment is
// E[(sum_i w_i x_i Z_i)^2] under the design.
VarianceDecomposition d1_variance_decomposition(double beta, double sigma_eps, const Vector& w,
                                                double second_moment);

struct Truncation1d {
  double optimal_value;
  std::vector<std::size_t> optimal_set;
};

// Best sign-symmetric truncation of paired values: the smallest-|v| pairs
// covering at least a (1 - alpha) share.
Truncation1d truncation_oracle_1d(const std::vector<double>& values, double alpha);

struct TraceTruncation {
  double trace_tail;
  double trace_adversary_min;
};

TraceTruncation trace_truncation_oracle(const Matrix& samples, double alpha, Rng& rng, std::size_t budget = 200);

// Monte Carlo E[W W' | ||W||^2 < a] for W ~ N(0, I_d).
Matrix truncated_identity_covariance(int d, double a, std::size_t n_samples, Rng& rng);

// E[b' m b] for b uniform on the sphere of radius l.
double expected_beta_trace_form(const Matrix& m, double l);

}  // namespace tbal
