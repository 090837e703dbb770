#pragma once

// General n-period Markov description of blinking fluorescence: rate matrix,
// propagator P(tau) = exp(B tau), stationary occupation, and the generalized
// intensity correlation function built from per-period correlations.

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "blink/params.hpp"

namespace blink {

struct PeriodChain {
  std::vector<double> intensities;  ///< photon rate per period
  Eigen::MatrixXd rates;            ///< rates(i, j): period i -> j; diagonal ignored

  std::size_t size() const { return intensities.size(); }
  void validate() const;

  /// Three-period chain {L, D1, D2} with intensities (I_L, 0, 0).
  static PeriodChain light_dark(const TransitionRates& rates, double light_intensity);
};

/// B(i, j) = p_ij - delta_ij * sum_k p_ik. Rows sum to zero exactly.
Eigen::MatrixXd build_rate_matrix(const PeriodChain& chain);

struct Propagator {
  Eigen::MatrixXd matrix;
  bool used_fallback = false;  ///< near-degenerate spectrum, Pade exponential used
};

/// exp(B tau). The spectral (Lagrange-Sylvester) formula is used unless two
/// eigenvalues lie within 1e-8 * max|mu| of each other.
Propagator propagator(const Eigen::MatrixXd& B, double tau);

/// Same as propagator() but always through scaling-and-squaring.
Eigen::MatrixXd propagator_pade(const Eigen::MatrixXd& B, double tau);

/// Unique pi with pi B = 0 and sum(pi) = 1. Throws ReducibleChainError when the
/// left null space of B has dimension > 1.
Eigen::VectorXd stationary(const Eigen::MatrixXd& B);

using PeriodCorrelation = std::function<double(double)>;

/// Sum_ij P_i I_i I_j P_ij(tau) g_j(tau) / (Sum_a P_a I_a)^2.
double g_general(double tau, const PeriodChain& chain, const std::vector<PeriodCorrelation>& g);

/// Structured text: `n`, `I_0 .. I_{n-1}`, then `p_i_j` in row-major order.
PeriodChain read_chain(std::istream& in);
PeriodChain read_chain_file(const std::string& path);
std::string chain_to_text(const PeriodChain& chain);

}  // namespace blink
