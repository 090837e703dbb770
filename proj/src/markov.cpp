#include "blink/markov.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <fstream>
#include <vector>

#include "blink/errors.hpp"
#include "blink/kv_text.hpp"

namespace blink {

void PeriodChain::validate() const {
  const auto n = static_cast<Eigen::Index>(intensities.size());
  if (n == 0) throw DomainError("chain: at least one period required");
  if (rates.rows() != n || rates.cols() != n) throw DomainError("chain: rate matrix must be n x n");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(intensities[i]) || intensities[i] < 0.0) {
      throw DomainError("chain: intensities must be finite and >= 0");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (!std::isfinite(rates(i, j)) || rates(i, j) < 0.0) {
        throw DomainError("chain: transition rates must be finite and >= 0");
      }
    }
  }
}

PeriodChain PeriodChain::light_dark(const TransitionRates& r, double light_intensity) {
  PeriodChain c;
  c.intensities = {light_intensity, 0.0, 0.0};
  c.rates = Eigen::MatrixXd::Zero(3, 3);
  c.rates(0, 1) = r.p_LD[0];
  c.rates(0, 2) = r.p_LD[1];
  c.rates(1, 0) = r.p_DL[0];
  c.rates(2, 0) = r.p_DL[1];
  return c;
}

Eigen::MatrixXd build_rate_matrix(const PeriodChain& chain) {
  chain.validate();
  const auto n = static_cast<Eigen::Index>(chain.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double out = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      B(i, j) = chain.rates(i, j);
      out += chain.rates(i, j);
    }
    B(i, i) = -out;
  }
  return B;
}

Eigen::MatrixXd propagator_pade(const Eigen::MatrixXd& B, double tau) {
  if (!(tau >= 0.0)) throw DomainError("propagator: tau must be >= 0");
  const Eigen::MatrixXd scaled = B * tau;
  return scaled.exp();
}

Propagator propagator(const Eigen::MatrixXd& B, double tau) {
  if (!(tau >= 0.0)) throw DomainError("propagator: tau must be >= 0");
  const Eigen::Index n = B.rows();
  using Cplx = std::complex<double>;

  Eigen::EigenSolver<Eigen::MatrixXd> es(B, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) return {propagator_pade(B, tau), true};
  Eigen::VectorXcd mu = es.eigenvalues();

  double scale = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(mu[i]));

  // A generator (zero row sums) has an exact zero eigenvalue; pin it so that
  // exp(mu0 * tau) stays exactly 1 at very large tau.
  const double row_sum_max = B.rowwise().sum().cwiseAbs().maxCoeff();
  if (row_sum_max <= 1e-12 * std::max(scale, 1e-300)) {
    Eigen::Index zero = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(mu[i]) < std::abs(mu[zero])) zero = i;
    }
    mu[zero] = 0.0;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (std::abs(mu[i] - mu[j]) < 1e-8 * scale) return {propagator_pade(B, tau), true};
    }
  }

  // The covariant products cancel heavily when the stationary weight of a
  // state is small compared with the rates; extended precision keeps the
  // result accurate to double rounding.
  using CplxL = std::complex<long double>;
  using MatL = Eigen::Matrix<CplxL, Eigen::Dynamic, Eigen::Dynamic>;
  const MatL Bl = B.cast<long double>().cast<CplxL>();
  const MatL eye = MatL::Identity(n, n);
  // Newton polish of each eigenvalue on det(B - mu): the small covariants
  // are sensitive to the absolute error of the large eigenvalues.
  std::vector<CplxL> mul(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    CplxL m(mu[i].real(), mu[i].imag());
    if (mu[i] != Cplx(0.0, 0.0)) {
      for (int it = 0; it < 3; ++it) {
        const MatL shifted = Bl - m * eye;
        Eigen::PartialPivLU<MatL> lu(shifted);
        const CplxL tr = lu.inverse().trace();
        if (!std::isfinite(std::abs(tr)) || std::abs(tr) == 0.0L) break;
        const CplxL step = 1.0L / tr;
        m += step;
        if (std::abs(step) <= 1e-19L * std::abs(m)) break;
      }
    }
    mul[static_cast<std::size_t>(i)] = m;
  }
  MatL sum_l = MatL::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const CplxL mi = mul[static_cast<std::size_t>(i)];
    MatL term = eye;
    for (Eigen::Index a = 0; a < n; ++a) {
      if (a == i) continue;
      const CplxL ma = mul[static_cast<std::size_t>(a)];
      term = (term * (Bl - ma * eye)) / (mi - ma);
    }
    sum_l += std::exp(mi * static_cast<long double>(tau)) * term;
  }
  Eigen::MatrixXcd sum(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      sum(i, j) = Cplx(static_cast<double>(sum_l(i, j).real()), static_cast<double>(sum_l(i, j).imag()));
    }
  }
  const double imag = sum.imag().cwiseAbs().maxCoeff();
  if (imag > 1e-10) {
    throw NumericalError("propagator: imaginary residue " + format_double(imag) + " exceeds 1e-10");
  }
  return {sum.real(), false};
}

Eigen::VectorXd stationary(const Eigen::MatrixXd& B) {
  const Eigen::Index n = B.rows();
  if (n == 1) return Eigen::VectorXd::Ones(1);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(B.transpose());
  lu.setThreshold(1e-10);
  if (lu.rank() < n - 1) {
    throw ReducibleChainError("stationary: rate matrix has a degenerate null space (reducible chain)");
  }
  // Bordered system [B^T; 1^T] pi = [0; 1], consistent and of full column rank.
  Eigen::MatrixXd M(n + 1, n);
  M.topRows(n) = B.transpose();
  M.row(n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs[n] = 1.0;
  Eigen::VectorXd pi = M.colPivHouseholderQr().solve(rhs);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pi[i] < 0.0 && pi[i] > -1e-14) pi[i] = 0.0;
  }
  return pi;
}

double g_general(double tau, const PeriodChain& chain, const std::vector<PeriodCorrelation>& g) {
  const Eigen::MatrixXd B = build_rate_matrix(chain);
  const auto n = static_cast<Eigen::Index>(chain.size());
  if (static_cast<Eigen::Index>(g.size()) != n) {
    throw DomainError("g_general: one correlation function per period required");
  }
  const Eigen::VectorXd P = stationary(B);
  double mean = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) mean += P[a] * chain.intensities[a];
  if (mean == 0.0) throw DegenerateError("g_general: all intensities are zero");

  const Eigen::MatrixXd Ptau = propagator(B, tau).matrix;
  double num = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (chain.intensities[j] == 0.0) continue;
    double inflow = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) inflow += P[i] * chain.intensities[i] * Ptau(i, j);
    num += inflow * chain.intensities[j] * g[j](tau);
  }
  return num / (mean * mean);
}

PeriodChain read_chain(std::istream& in) {
  const KeyValueText kv = KeyValueText::parse(in);
  const long long n = kv.get_int("n");
  if (n < 1 || n > 64) throw ParseError("chain: n must lie in [1, 64]");
  PeriodChain c;
  c.intensities.resize(static_cast<std::size_t>(n));
  c.rates = Eigen::MatrixXd::Zero(n, n);
  std::size_t expected = 1;
  for (long long i = 0; i < n; ++i) {
    c.intensities[i] = kv.get_double("I_" + std::to_string(i));
    ++expected;
  }
  for (long long i = 0; i < n; ++i) {
    for (long long j = 0; j < n; ++j) {
      const std::string key = "p_" + std::to_string(i) + "_" + std::to_string(j);
      if (i == j) {
        if (kv.contains(key)) ++expected;
        continue;
      }
      c.rates(i, j) = kv.get_double(key);
      ++expected;
    }
  }
  if (kv.entries().size() != expected) throw ParseError("chain: unexpected extra keys");
  c.validate();
  return c;
}

PeriodChain read_chain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open chain file '" + path + "'");
  return read_chain(in);
}

std::string chain_to_text(const PeriodChain& c) {
  KeyValueText kv;
  const auto n = c.size();
  kv.set("n", std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) kv.set("I_" + std::to_string(i), c.intensities[i]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = i == j ? 0.0 : c.rates(i, j);
      kv.set("p_" + std::to_string(i) + "_" + std::to_string(j), v);
    }
  }
  return kv.to_string();
}

}  // namespace blink
