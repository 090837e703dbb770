#pragma once

// Two-timescale fit of a measured g(tau): the slow blinking factor above a
// split delay, the antibunching curve below it, and a refit of the slow factor
// in terms of the intersystem-crossing rates.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blink/correlation.hpp"
#include "blink/least_squares.hpp"
#include "blink/params.hpp"

namespace blink {

struct ParamBounds {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameter names used for guesses, bounds and reports:
/// T_L, T_D1, T_D2, p1, A31, Omega31, I_sc, A32_1, A32_2, A21_1, A21_2,
/// amplitude, and I_sc_ratio (= I_sc / I_L, bounds only).
struct FitConfig {
  double split_tau = 1e-7;
  std::map<std::string, double> initial_guess;
  std::map<std::string, ParamBounds> bounds;  ///< overrides of the defaults
  int max_iterations = 200;
  double convergence_tol = 1e-10;
  int bootstrap_resamples = 200;
  std::uint64_t bootstrap_seed = 0;
  bool free_amplitude = false;
  /// Worker threads for bootstrap refits; 0 picks the hardware concurrency.
  int threads = 0;

  void validate() const;
  ParamBounds bound(const std::string& name) const;
  static const std::vector<std::string>& known_names();
};

FitConfig read_fit_config(std::istream& in);
FitConfig read_fit_config_file(const std::string& path);

struct StageDiagnostics {
  std::string stage;
  bool ok = false;
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;
  std::string error;  ///< empty when ok
};

/// Result of one fit stage. `values` and `sigma` follow `names`; sigma is the
/// Jacobian-covariance 1 sigma.
struct StageResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd covariance;
  StageDiagnostics diagnostics;

  double get(const std::string& name) const;
  double sigma_of(const std::string& name) const;
};

/// tau -> slow factor, used to carry the blinking plateau into the fast stage.
using SlowFactorFunction = std::function<double(double)>;

/// Fits amplitude * slow_factor(tau; T_L, T_D1, T_D2, p1) for tau > split_tau.
/// Canonical ordering T_D1 > T_D2.
StageResult fit_slow(const CorrelationSeries& series, const FitConfig& config);

/// Fits slow(tau) * g2_mod(tau; A31, Omega31, I_sc) for tau < split_tau. The
/// background enters through I_sc / I_L and is reported in absolute units.
StageResult fit_fast(const CorrelationSeries& series, const FitConfig& config, const SlowFactorFunction& slow);
StageResult fit_fast(const CorrelationSeries& series, const FitConfig& config, double plateau);

/// Refits the slow factor through the rates (A32_1, A32_2, A21_1, A21_2) with
/// A31 and Omega31 taken from `fast`. Canonical ordering A21_1 < A21_2.
StageResult fit_isc(const CorrelationSeries& series, const FitConfig& config, const PhotoPhysicalParams& fast);

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;           ///< reported 1 sigma (bootstrap when available)
  double jacobian_sigma = 0.0;  ///< covariance cross-check
};

struct FitResult {
  PhotoPhysicalParams params;
  PeriodStatistics stats;
  std::map<std::string, Estimate> estimates;
  double residual_norm = 0.0;
  std::vector<StageDiagnostics> stages;
  bool complete = false;       ///< every stage succeeded
  int bootstrap_used = 0;      ///< resamples that contributed to sigma
  double amplitude = 1.0;

  /// Stage-aware model curve at tau (slow stage above split, fast below).
  std::function<double(double)> curve;
};

/// slow -> fast -> isc, then residual bootstrap. Stage failures are recorded
/// in `stages` and leave the dependent quantities unset.
FitResult fit_full(const CorrelationSeries& series, const FitConfig& config);

/// Report lines `name = value ± sigma` in a fixed order.
std::string fit_report(const FitResult& result);

}  // namespace blink
