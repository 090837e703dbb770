#pragma once

// Molecular parameters of the four-level blinking scheme and the closed-form
// relations between Einstein coefficients, transition rates between
// intensity periods, and period statistics. Rates are in 1/s, times in s.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace blink {

/// Index pair for the two metastable (dark) sublevels.
using RatePair = std::array<double, 2>;

struct PhotoPhysicalParams {
  double A31 = 0.0;      ///< spontaneous decay |3> -> |1>
  double Omega31 = 0.0;  ///< Rabi frequency of the |1> <-> |3> drive
  RatePair A32{};        ///< intersystem crossing |3> -> |2(i)>
  RatePair A21{};        ///< depopulation |2(i)> -> |1>
  double I_sc = 0.0;     ///< scattered background photon rate

  /// Throws DomainError on negative or non-finite fields.
  void validate() const;

  /// Human-readable notes for every rate that breaks the fast/slow separation
  /// (slow rate >= 1e-2 * min(A31, Omega31)). Empty when the hierarchy holds.
  std::vector<std::string> hierarchy_warnings() const;

  /// Exchange the labels of the two dark sublevels.
  PhotoPhysicalParams swapped_dark_labels() const;
};

/// Light <-> dark transition rates between intensity periods.
struct TransitionRates {
  RatePair p_LD{};  ///< light -> dark(i)
  RatePair p_DL{};  ///< dark(i) -> light
};

struct PeriodStatistics {
  double T_L = 0.0;  ///< mean light-period duration (infinite when p_LD = 0)
  RatePair T_D{};    ///< mean dark-period durations
  double p1 = 0.5;   ///< branching ratio into dark(1) at the end of a light period
  double p2 = 0.5;
  double P_L = 1.0;  ///< stationary probability of a light period
  RatePair p_LD{};
  RatePair p_DL{};
  double mu1 = 0.0;  ///< slow relaxation eigenvalue (closer to zero)
  double mu2 = 0.0;  ///< fast relaxation eigenvalue
  double Gamma = 0.0;

  /// P_L evaluated through the explicit denominator, independent of mu1, mu2.
  double P_L_explicit() const;
};

/// Stationary intensity of the driven {|1>,|3>} subsystem.
double light_intensity(const PhotoPhysicalParams& params);
double light_intensity(double A31, double Omega31);

TransitionRates transition_rates(const PhotoPhysicalParams& params);

/// Derive durations, branching ratios, relaxation eigenvalues and P_L.
/// Requires both p_DL > 0. With p_LD = (0, 0) the light period never ends:
/// T_L is +inf and the branching ratios are reported as 1/2 each.
PeriodStatistics period_statistics(const TransitionRates& rates);

/// Inverse of period_statistics on (T_L, T_D, p1).
TransitionRates rates_from_statistics(double T_L, const RatePair& T_D, double p1);

/// Flat key/value serialization with keys A31, Omega31, A32_1, A32_2, A21_1,
/// A21_2, I_sc. Reading requires exactly these keys.
PhotoPhysicalParams read_params(std::istream& in);
PhotoPhysicalParams read_params_file(const std::string& path);
std::string params_to_text(const PhotoPhysicalParams& params);

}  // namespace blink
