#pragma once

// Four-level Bloch equations in Liouville space and first-order extraction of
// the light <-> dark transition rates.
//
// Basis order: |1> (ground), |2(1)>, |2(2)> (metastable), |3> (excited).
// Density matrices are vectorized by column stacking: vec(rho)[i + 4 j] = rho(i, j).
// hbar = 1 throughout.

#include <Eigen/Dense>

#include "blink/params.hpp"

namespace blink {

namespace level {
inline constexpr int kGround = 0;
inline constexpr int kDark1 = 1;
inline constexpr int kDark2 = 2;
inline constexpr int kExcited = 3;
}  // namespace level

using Matrix4c = Eigen::Matrix<std::complex<double>, 4, 4>;
using SuperOperator = Eigen::Matrix<std::complex<double>, 16, 16>;
using LiouvilleVector = Eigen::Matrix<std::complex<double>, 16, 1>;

struct DensityOperator {
  Matrix4c matrix = Matrix4c::Zero();

  /// Hermitian, unit trace, eigenvalues >= -1e-10. Throws DomainError otherwise.
  void check(double tol = 1e-12) const;
  double population(int level) const { return matrix(level, level).real(); }
};

LiouvilleVector vectorize(const Matrix4c& rho);
Matrix4c unvectorize(const LiouvilleVector& v);

/// Non-Hermitian no-jump generator. The |3><3| damping is the total decay
/// A31 + A32(1) + A32(2).
Matrix4c conditional_hamiltonian(const PhotoPhysicalParams& params);

/// Jump (reset) part of the master equation applied to rho.
Matrix4c apply_reset(const PhotoPhysicalParams& params, const Matrix4c& rho);
SuperOperator reset_operator(const PhotoPhysicalParams& params);

struct LiouvillianOperator {
  SuperOperator fast;  ///< L0: depends on A31 and Omega31 only
  SuperOperator slow;  ///< L1: depends on A32(i) and A21(i) only
  SuperOperator full;  ///< fast + slow

  Matrix4c apply(const Matrix4c& rho) const { return unvectorize(full * vectorize(rho)); }
};

LiouvillianOperator build_liouvillian(const PhotoPhysicalParams& params);

/// Stationary state of the driven {|1>, |3>} subsystem embedded in four levels.
DensityOperator steady_state_light(const PhotoPhysicalParams& params);

/// |2(i)><2(i)| for i = 0, 1.
DensityOperator dark_state(int which);

/// Spectral projector onto the null space of `op`, built from its numerically
/// computed right and left null vectors. `nullity` receives the dimension.
SuperOperator null_space_projector(const SuperOperator& op, int* nullity = nullptr);

enum class RateMethod {
  /// rho(t0 + dt) = rho(t0) + (-L0)^{-1} (1 - P_par) L1 rho(t0), reduced resolvent.
  ClosedResolvent,
  /// Propagate with exp(L dt) for dt = sqrt(tau_fast * tau_slow) and
  /// differentiate the target populations.
  FiniteStep,
};

/// First-order light <-> dark rates from the full Liouvillian. Throws
/// HierarchyError when 1 / max(slow rates) <= 10 / min(A31, Omega31).
TransitionRates perturbative_rates(const PhotoPhysicalParams& params, RateMethod method);

}  // namespace blink
