#include "blink/liouvillian.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>

#include "blink/errors.hpp"

namespace blink {

namespace {

using Cplx = std::complex<double>;
constexpr Cplx kI{0.0, 1.0};

SuperOperator superoperator_of(const std::function<Matrix4c(const Matrix4c&)>& map) {
  SuperOperator op;
  for (int l = 0; l < 4; ++l) {
    for (int k = 0; k < 4; ++k) {
      Matrix4c unit = Matrix4c::Zero();
      unit(k, l) = 1.0;
      op.col(k + 4 * l) = vectorize(map(unit));
    }
  }
  return op;
}

SuperOperator liouvillian_of(const PhotoPhysicalParams& p) {
  const Matrix4c H = conditional_hamiltonian(p);
  const Matrix4c Hdag = H.adjoint();
  return superoperator_of([&](const Matrix4c& rho) -> Matrix4c {
    return -kI * (H * rho - rho * Hdag) + apply_reset(p, rho);
  });
}

PhotoPhysicalParams fast_part(const PhotoPhysicalParams& p) {
  PhotoPhysicalParams q;
  q.A31 = p.A31;
  q.Omega31 = p.Omega31;
  return q;
}

PhotoPhysicalParams slow_part(const PhotoPhysicalParams& p) {
  PhotoPhysicalParams q;
  q.A32 = p.A32;
  q.A21 = p.A21;
  return q;
}

struct Timescales {
  double fast_rate;
  double slow_rate;
};

Timescales check_hierarchy(const PhotoPhysicalParams& p) {
  const double fast = std::min(p.A31, p.Omega31);
  const double slow = std::max({p.A32[0], p.A32[1], p.A21[0], p.A21[1]});
  if (slow > 0.0 && !(10.0 * slow < fast)) {
    throw HierarchyError("no time window between fast (min(A31, Omega31) = " + std::to_string(fast) +
                         ") and slow (max rate = " + std::to_string(slow) + ") dynamics");
  }
  return {fast, slow};
}

// Rates read off a state just after the fast transient has decayed.
double light_to_dark(const PhotoPhysicalParams& p, const Matrix4c& rho, int i) {
  const int dark = i == 0 ? level::kDark1 : level::kDark2;
  return p.A32[i] * rho(level::kExcited, level::kExcited).real() - p.A21[i] * rho(dark, dark).real();
}

double dark_to_light(const PhotoPhysicalParams& p, const Matrix4c& rho) {
  double r = 0.0;
  for (int a = 0; a < 2; ++a) {
    const int dark = a == 0 ? level::kDark1 : level::kDark2;
    r += p.A21[a] * rho(dark, dark).real() - p.A32[a] * rho(level::kExcited, level::kExcited).real();
  }
  return r;
}

TransitionRates closed_resolvent_rates(const PhotoPhysicalParams& p, const LiouvillianOperator& L) {
  const SuperOperator P = null_space_projector(L.fast);
  const SuperOperator complement = SuperOperator::Identity() - P;
  // On the range of (1 - P), (L0 + P) acts as L0 and is invertible.
  const Eigen::PartialPivLU<SuperOperator> shifted(L.fast + P);
  auto first_order = [&](const Matrix4c& rho0) {
    const LiouvilleVector v0 = vectorize(rho0);
    const LiouvilleVector y = complement * (L.slow * v0);
    return unvectorize(v0 - shifted.solve(y));
  };

  TransitionRates r;
  const Matrix4c from_light = first_order(steady_state_light(p).matrix);
  for (int i = 0; i < 2; ++i) {
    r.p_LD[i] = light_to_dark(p, from_light, i);
    r.p_DL[i] = dark_to_light(p, first_order(dark_state(i).matrix));
  }
  return r;
}

TransitionRates finite_step_rates(const PhotoPhysicalParams& p, const LiouvillianOperator& L,
                                  const Timescales& ts) {
  const double dt = std::sqrt((1.0 / ts.fast_rate) * (1.0 / ts.slow_rate));
  const Eigen::MatrixXcd generator = L.full;

  auto evolve = [&](const LiouvilleVector& v0, double t) -> Matrix4c {
    const Eigen::MatrixXcd step = (generator * t).exp();
    return unvectorize(step * v0);
  };
  // Central-difference slope of `target` at t, Richardson-combined over t and
  // t/2 to cancel the slow first-order drift of the populations.
  auto slope = [&](const Matrix4c& rho0, const std::function<double(const Matrix4c&)>& target) {
    const LiouvilleVector v0 = vectorize(rho0);
    auto at = [&](double t) {
      const double h = 0.05 * t;
      return (target(evolve(v0, t + h)) - target(evolve(v0, t - h))) / (2.0 * h);
    };
    return 2.0 * at(0.5 * dt) - at(dt);
  };

  TransitionRates r;
  const Matrix4c rho_light = steady_state_light(p).matrix;
  for (int i = 0; i < 2; ++i) {
    const int dark = i == 0 ? level::kDark1 : level::kDark2;
    if (p.A32[i] > 0.0) {
      r.p_LD[i] = slope(rho_light, [dark](const Matrix4c& rho) { return rho(dark, dark).real(); });
    }
    if (p.A21[i] > 0.0) {
      r.p_DL[i] = slope(dark_state(i).matrix, [](const Matrix4c& rho) {
        return rho(level::kGround, level::kGround).real() + rho(level::kExcited, level::kExcited).real();
      });
    }
  }
  return r;
}

}  // namespace

void DensityOperator::check(double tol) const {
  if ((matrix - matrix.adjoint()).cwiseAbs().maxCoeff() > tol) throw DomainError("density operator not Hermitian");
  if (std::abs(matrix.trace() - Cplx(1.0)) > tol) throw DomainError("density operator trace != 1");
  const Eigen::SelfAdjointEigenSolver<Matrix4c> es(matrix);
  if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("density operator not positive semidefinite");
}

LiouvilleVector vectorize(const Matrix4c& rho) { return Eigen::Map<const LiouvilleVector>(rho.data()); }

Matrix4c unvectorize(const LiouvilleVector& v) { return Eigen::Map<const Matrix4c>(v.data()); }

Matrix4c conditional_hamiltonian(const PhotoPhysicalParams& p) {
  Matrix4c H = Matrix4c::Zero();
  const Cplx damping = -0.5 * kI;  // 1 / (2i)
  H(level::kExcited, level::kExcited) = damping * (p.A31 + p.A32[0] + p.A32[1]);
  H(level::kDark1, level::kDark1) = damping * p.A21[0];
  H(level::kDark2, level::kDark2) = damping * p.A21[1];
  H(level::kGround, level::kExcited) = 0.5 * p.Omega31;
  H(level::kExcited, level::kGround) = 0.5 * p.Omega31;
  return H;
}

Matrix4c apply_reset(const PhotoPhysicalParams& p, const Matrix4c& rho) {
  const Cplx excited = rho(level::kExcited, level::kExcited);
  Matrix4c out = Matrix4c::Zero();
  out(level::kGround, level::kGround) =
      p.A31 * excited + p.A21[0] * rho(level::kDark1, level::kDark1) + p.A21[1] * rho(level::kDark2, level::kDark2);
  out(level::kDark1, level::kDark1) = p.A32[0] * excited;
  out(level::kDark2, level::kDark2) = p.A32[1] * excited;
  return out;
}

SuperOperator reset_operator(const PhotoPhysicalParams& p) {
  return superoperator_of([&](const Matrix4c& rho) { return apply_reset(p, rho); });
}

LiouvillianOperator build_liouvillian(const PhotoPhysicalParams& params) {
  params.validate();
  LiouvillianOperator L;
  L.fast = liouvillian_of(fast_part(params));
  L.slow = liouvillian_of(slow_part(params));
  L.full = L.fast + L.slow;
  return L;
}

DensityOperator steady_state_light(const PhotoPhysicalParams& p) {
  const double a2 = p.A31 * p.A31;
  const double o2 = p.Omega31 * p.Omega31;
  const double denom = a2 + 2.0 * o2;
  if (denom == 0.0) throw DegenerateError("steady_state_light: A31 = Omega31 = 0");
  DensityOperator rho;
  rho.matrix(level::kGround, level::kGround) = (a2 + o2) / denom;
  rho.matrix(level::kExcited, level::kExcited) = o2 / denom;
  const Cplx coherence = kI * (p.A31 * p.Omega31 / denom);
  rho.matrix(level::kGround, level::kExcited) = coherence;
  rho.matrix(level::kExcited, level::kGround) = -coherence;
  return rho;
}

DensityOperator dark_state(int which) {
  if (which != 0 && which != 1) throw DomainError("dark_state: index must be 0 or 1");
  DensityOperator rho;
  const int lvl = which == 0 ? level::kDark1 : level::kDark2;
  rho.matrix(lvl, lvl) = 1.0;
  return rho;
}

SuperOperator null_space_projector(const SuperOperator& op, int* nullity) {
  const Eigen::JacobiSVD<SuperOperator> svd(op, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-9 * sv[0];
  int k = 0;
  for (int i = 15; i >= 0 && sv[i] <= cutoff; --i) ++k;
  if (nullity) *nullity = k;
  if (k == 0) return SuperOperator::Zero();
  const Eigen::MatrixXcd right = svd.matrixV().rightCols(k);
  const Eigen::MatrixXcd left = svd.matrixU().rightCols(k);
  const Eigen::MatrixXcd overlap = left.adjoint() * right;
  return right * overlap.inverse() * left.adjoint();
}

TransitionRates perturbative_rates(const PhotoPhysicalParams& params, RateMethod method) {
  params.validate();
  const Timescales ts = check_hierarchy(params);
  if (ts.slow_rate == 0.0) return {};
  const LiouvillianOperator L = build_liouvillian(params);
  switch (method) {
    case RateMethod::ClosedResolvent:
      return closed_resolvent_rates(params, L);
    case RateMethod::FiniteStep:
      return finite_step_rates(params, L, ts);
  }
  return {};
}

}  // namespace blink
