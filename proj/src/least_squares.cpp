#include "blink/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blink/errors.hpp"

namespace blink {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

double sum_squares(const Eigen::VectorXd& r) {
  if (!r.allFinite()) return std::numeric_limits<double>::infinity();
  return r.squaredNorm();
}

}  // namespace

Eigen::MatrixXd numeric_jacobian(const ResidualFunction& residuals, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& r0, const Eigen::VectorXd& lower,
                                 const Eigen::VectorXd& upper, const Eigen::VectorXd& scale, double step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd J(r0.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double h = step * std::max(std::abs(x[j]), scale[j]);
    if (x[j] + h > upper[j]) h = -h;
    Eigen::VectorXd xp = x;
    xp[j] += h;
    if (xp[j] < lower[j]) {
      // box narrower than the step: take whatever room there is
      xp[j] = upper[j];
      h = xp[j] - x[j];
    }
    J.col(j) = (residuals(xp) - r0) / h;
  }
  return J;
}

LeastSquaresResult least_squares(const ResidualFunction& residuals, const Eigen::VectorXd& guess,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const LeastSquaresOptions& options) {
  const Eigen::Index n = guess.size();
  if (lower.size() != n || upper.size() != n) throw DomainError("least_squares: bounds size mismatch");
  if ((lower.array() > upper.array()).any()) throw DomainError("least_squares: lower bound above upper bound");

  // Typical magnitude per parameter, used for step sizes and relative tests.
  Eigen::VectorXd scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = std::abs(guess[j]);
    if (s == 0.0) s = std::max(std::abs(lower[j]), std::abs(upper[j]));
    if (!std::isfinite(s) || s == 0.0) s = 1.0;
    scale[j] = s;
  }
  // Work in scaled coordinates y = x / scale.
  const Eigen::VectorXd lo = lower.cwiseQuotient(scale);
  const Eigen::VectorXd hi = upper.cwiseQuotient(scale);
  auto to_x = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return y.cwiseProduct(scale); };
  const ResidualFunction scaled = [&](const Eigen::VectorXd& y) { return residuals(to_x(y)); };
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(n) * 1e-8;

  LeastSquaresResult out;
  Eigen::VectorXd y = project(guess.cwiseQuotient(scale), lo, hi);
  Eigen::VectorXd r = scaled(y);
  double cost = sum_squares(r);
  if (!std::isfinite(cost)) throw DomainError("least_squares: residuals not finite at the initial guess");
  const Eigen::Index m = r.size();

  double lambda = 0.0;
  Eigen::MatrixXd J = numeric_jacobian(scaled, y, r, lo, hi, unit, options.jacobian_step);
  int iter = 0;
  bool converged = false;
  std::string message = "iteration limit reached";
  while (iter < options.max_iterations) {
    ++iter;
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd diag = A.diagonal().cwiseMax(1e-12 * std::max(1.0, A.diagonal().maxCoeff()));

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = A;
      damped.diagonal() += lambda * diag;
      const Eigen::VectorXd step = damped.completeOrthogonalDecomposition().solve(-g);
      const Eigen::VectorXd y_new = project(y + step, lo, hi);
      const Eigen::VectorXd r_new = scaled(y_new);
      const double cost_new = sum_squares(r_new);
      if (cost_new <= cost) {
        const Eigen::VectorXd dy = y_new - y;
        double rel_step = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          rel_step = std::max(rel_step, std::abs(dy[j]) / std::max(std::abs(y_new[j]), 1e-8));
        }
        const double rel_cost = cost > 0.0 ? (cost - cost_new) / cost : 0.0;
        y = y_new;
        r = r_new;
        cost = cost_new;
        lambda = lambda < 1e-9 ? 0.0 : lambda / 10.0;
        accepted = true;
        if ((rel_step < options.tolerance && rel_cost < options.tolerance) || cost == 0.0) {
          converged = true;
          message = "converged";
        }
      } else {
        lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
        if (lambda > 1e16) {
          // no descent direction left at working precision
          converged = true;
          message = "converged (no further decrease)";
          break;
        }
      }
    }
    if (converged) break;
    J = numeric_jacobian(scaled, y, r, lo, hi, unit, options.jacobian_step);
  }

  out.x = to_x(y);
  out.residuals = r;
  out.cost = cost;
  out.iterations = iter;
  out.converged = converged;
  out.message = message;
  J = numeric_jacobian(scaled, y, r, lo, hi, unit, options.jacobian_step);
  out.jacobian = J * scale.asDiagonal().inverse();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = cost / dof;
  const Eigen::MatrixXd info = J.transpose() * J;
  const Eigen::MatrixXd inv_scaled = info.completeOrthogonalDecomposition().pseudoInverse();
  out.covariance = scale.asDiagonal() * (s2 * inv_scaled) * scale.asDiagonal();
  return out;
}

}  // namespace blink
