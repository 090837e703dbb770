#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace blink {

/// Weighted residual vector r(x); the solver minimises |r(x)|^2.
using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LeastSquaresOptions {
  int max_iterations = 200;
  /// Converged when both the relative step and the relative change of the
  /// cost drop below this value.
  double tolerance = 1e-10;
  double jacobian_step = 1e-6;
};

struct LeastSquaresResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  /// s^2 (J^T J)^{-1} with s^2 = cost / (m - n).
  Eigen::MatrixXd covariance;
  double cost = 0.0;  ///< sum of squared residuals
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) with forward-difference Jacobian
/// and box constraints enforced by projection. On iteration exhaustion the
/// best point found is returned with converged = false.
LeastSquaresResult least_squares(const ResidualFunction& residuals, const Eigen::VectorXd& guess,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const LeastSquaresOptions& options = {});

/// Forward-difference Jacobian (backward where the forward step would leave
/// the box), relative step `step`.
Eigen::MatrixXd numeric_jacobian(const ResidualFunction& residuals, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& r0, const Eigen::VectorXd& lower,
                                 const Eigen::VectorXd& upper, const Eigen::VectorXd& scale, double step);

}  // namespace blink
