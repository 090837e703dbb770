#pragma once

// Shared helpers for the test suites: relative deviation, an independent
// random source, and a Runge-Kutta integrator for the driven two-level
// optical Bloch equations.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <random>

#include "blink/params.hpp"

namespace testing {

inline double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

class Random {
 public:
  explicit Random(unsigned long long seed) : eng_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double log_uniform(double lo, double hi) { return lo * std::pow(hi / lo, uniform()); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }

 private:
  std::mt19937_64 eng_;
};

/// Physical parameter set with a wide rate hierarchy.
inline blink::PhotoPhysicalParams random_params(Random& rng) {
  blink::PhotoPhysicalParams p;
  p.A31 = rng.log_uniform(1e7, 1e9);
  p.Omega31 = rng.log_uniform(1e7, 1e9);
  for (int i = 0; i < 2; ++i) {
    p.A32[i] = rng.log_uniform(1.0, 1e4);
    p.A21[i] = rng.log_uniform(1.0, 1e4);
  }
  p.I_sc = rng.log_uniform(1e5, 1e8);
  return p;
}

inline blink::TransitionRates random_rates(Random& rng) {
  blink::TransitionRates r;
  for (int i = 0; i < 2; ++i) {
    r.p_LD[i] = rng.log_uniform(1.0, 1e4);
    r.p_DL[i] = rng.log_uniform(1.0, 1e4);
  }
  return r;
}

/// Excited-state population of the driven two-level atom started in the
/// ground state, integrated with classical RK4 from the Lindblad equation
/// d rho/dt = -i[H, rho] + A (s rho s+ - {s+ s, rho}/2), s = |g><e|.
inline double excited_population(double A, double Omega, double t, int steps) {
  using M = Eigen::Matrix2cd;
  const std::complex<double> I(0.0, 1.0);
  M H;
  H << 0.0, 0.5 * Omega, 0.5 * Omega, 0.0;
  M s;
  s << 0.0, 1.0, 0.0, 0.0;  // |g><e| with g = index 0, e = index 1
  const M sd = s.adjoint();
  const M n = sd * s;
  auto f = [&](const M& r) -> M { return -I * (H * r - r * H) + A * (s * r * sd - 0.5 * (n * r + r * n)); };
  M rho = M::Zero();
  rho(0, 0) = 1.0;
  const double h = t / steps;
  for (int k = 0; k < steps; ++k) {
    const M k1 = f(rho);
    const M k2 = f(rho + 0.5 * h * k1);
    const M k3 = f(rho + 0.5 * h * k2);
    const M k4 = f(rho + h * k3);
    rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rho(1, 1).real();
}

}  // namespace testing
