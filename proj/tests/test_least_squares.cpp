#include <doctest.h>

#include "blink/errors.hpp"
#include "blink/least_squares.hpp"

using namespace blink;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

}  // namespace

TEST_CASE("linear model is solved in a single step") {
  // y = 2 + 3 t - 0.5 t^2 sampled exactly
  const ResidualFunction r = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(12);
    for (int i = 0; i < 12; ++i) {
      const double t = 0.5 * i;
      out[i] = x[0] + x[1] * t + x[2] * t * t - (2.0 + 3.0 * t - 0.5 * t * t);
    }
    return out;
  };
  const auto res = least_squares(r, vec({1.0, 1.0, 1.0}), vec({-10, -10, -10}), vec({10, 10, 10}));
  CHECK(res.converged);
  CHECK(res.iterations <= 3);
  CHECK(res.x[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(res.x[1] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(res.x[2] == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("Rosenbrock valley") {
  const ResidualFunction r = [](const Eigen::VectorXd& x) { return vec({10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]}); };
  const auto res = least_squares(r, vec({-1.2, 1.0}), vec({-5, -5}), vec({5, 5}));
  CHECK(res.converged);
  CHECK(res.iterations <= 200);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("bounds are respected by projection") {
  // Unconstrained minimum at x = -3; the box stops at 0.
  const ResidualFunction r = [](const Eigen::VectorXd& x) { return vec({x[0] + 3.0, 0.1 * (x[1] - 1.0)}); };
  const auto res = least_squares(r, vec({0.0, 4.0}), vec({0.0, 0.0}), vec({10.0, 10.0}));
  CHECK(res.x[0] == 0.0);
  CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.converged);
}

TEST_CASE("iteration limit returns the best point") {
  const ResidualFunction r = [](const Eigen::VectorXd& x) { return vec({10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]}); };
  LeastSquaresOptions opt;
  opt.max_iterations = 2;
  const auto res = least_squares(r, vec({-1.2, 1.0}), vec({-5, -5}), vec({5, 5}), opt);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 2);
  CHECK(res.cost < r(vec({-1.2, 1.0})).squaredNorm());
}

TEST_CASE("covariance of a straight-line fit") {
  // Residual variance s^2 and (J^T J)^{-1} for y = a + b t with known noise.
  const std::vector<double> noise = {0.1, -0.2, 0.05, 0.15, -0.1, 0.0, 0.2, -0.05};
  const ResidualFunction r = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(8);
    for (int i = 0; i < 8; ++i) out[i] = x[0] + x[1] * i - (1.0 + 2.0 * i + noise[static_cast<std::size_t>(i)]);
    return out;
  };
  const auto res = least_squares(r, vec({0.0, 0.0}), vec({-10, -10}), vec({10, 10}));
  Eigen::MatrixXd J(8, 2);
  for (int i = 0; i < 8; ++i) J.row(i) << 1.0, i;
  const double s2 = res.cost / 6.0;
  const Eigen::MatrixXd ref = s2 * (J.transpose() * J).inverse();
  CHECK((res.covariance - ref).cwiseAbs().maxCoeff() < 1e-6 * ref.cwiseAbs().maxCoeff());
}

TEST_CASE("invalid bounds") {
  const ResidualFunction r = [](const Eigen::VectorXd& x) { return x; };
  CHECK_THROWS_AS(least_squares(r, vec({0.0}), vec({1.0}), vec({0.0})), DomainError);
}
