#pragma once

// Closed-form intensity correlation functions: the driven two-level g2, its
// background-diluted variant, the light-light conditional probability and the
// full blinking g(tau).

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blink/params.hpp"

namespace blink {

/// Sampled correlation values. taus strictly increasing and > 0; sigma, when
/// present, has one strictly positive entry per point.
struct CorrelationSeries {
  std::vector<double> taus;
  std::vector<double> values;
  std::optional<std::vector<double>> sigma;

  std::size_t size() const { return taus.size(); }
  void validate() const;
};

/// Everything g(tau) depends on: the fast two-level parameters, the scattered
/// intensity, and the period statistics.
struct CorrelationModel {
  double A31 = 0.0;
  double Omega31 = 0.0;
  double I_sc = 0.0;
  PeriodStatistics stats;

  static CorrelationModel from_params(const PhotoPhysicalParams& params);
};

/// Two-level correlation. For 16 Omega^2 < A^2 the trigonometric form is
/// continued to cosh/sinh; the critical point is taken as the limit.
double g2(double tau, double A31, double Omega31);

/// (I_L g2 + I_sc) / (I_L + I_sc).
double g2_mod(double tau, double A31, double Omega31, double I_sc);
double g2_mod(double tau, const PhotoPhysicalParams& params);

/// Probability of a light period at tau given one at 0. Falls back to the
/// matrix propagator when |mu1 - mu2| < 1e-9 |mu1|.
double p_ll(double tau, const PeriodStatistics& stats);

/// Braced factor of the explicit g(tau): P_LL(tau) / P_L expressed through
/// T_L, T_D and the branching ratio p1. Equals 1 when T_L is infinite.
double slow_factor(double tau, double T_L, const RatePair& T_D, double p1);
double slow_factor(double tau, const PeriodStatistics& stats);

/// g(tau) through the explicit duration/branching-ratio form.
double g_total(double tau, const CorrelationModel& model);
double g_total(double tau, const PhotoPhysicalParams& params);

/// g(tau) = P_LL(tau) g2_mod(tau) / P_L, the product form.
double g_total_product(double tau, const CorrelationModel& model);

/// Log-spaced grid from tau_min to tau_max inclusive with the given density.
std::vector<double> log_grid(double tau_min, double tau_max, double points_per_decade);

/// Default evaluation grid: 1e-10 s .. 1 s, 60 points per decade.
std::vector<double> default_grid();

CorrelationSeries eval_curve(const std::vector<double>& grid, const CorrelationModel& model);
CorrelationSeries eval_curve(const std::vector<double>& grid, const PhotoPhysicalParams& params);

/// CSV with header `tau_s,g` or `tau_s,g,sigma`.
CorrelationSeries read_series_csv(std::istream& in);
CorrelationSeries read_series_csv_file(const std::string& path);
std::string series_to_csv(const CorrelationSeries& series);

}  // namespace blink
