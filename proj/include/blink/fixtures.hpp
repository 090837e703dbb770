#pragma once

// Reference parameter sets: fast two-level parameters and background, ISC
// rates, and the matching measured period statistics.

#include "blink/params.hpp"

namespace blink::fixtures {

inline constexpr double kA31 = 3.3e8;
inline constexpr double kOmega31 = 2.9e8;
inline constexpr double kIsc = 7.7e7;
inline constexpr double kT_L = 8.2e-3;
inline constexpr double kT_D1 = 2.3e-3;
inline constexpr double kT_D2 = 4.2e-4;
inline constexpr double kP1 = 0.12;

/// Fast parameters with the ISC rates A32 = (34, 249), A21 = (430, 2400) s^-1.
inline PhotoPhysicalParams rate_params() {
  PhotoPhysicalParams p;
  p.A31 = kA31;
  p.Omega31 = kOmega31;
  p.A32 = {34.0, 249.0};
  p.A21 = {430.0, 2400.0};
  p.I_sc = kIsc;
  return p;
}

/// Period statistics built from the measured durations and branching ratio.
inline PeriodStatistics measured_statistics() {
  return period_statistics(rates_from_statistics(kT_L, {kT_D1, kT_D2}, kP1));
}

/// Rate parameters whose closed-form period statistics reproduce the measured
/// durations exactly (A32 from inverting the saturation factor).
inline PhotoPhysicalParams statistics_params() {
  const TransitionRates r = rates_from_statistics(kT_L, {kT_D1, kT_D2}, kP1);
  const double saturation = kOmega31 * kOmega31 / (kA31 * kA31 + kOmega31 * kOmega31);
  PhotoPhysicalParams p;
  p.A31 = kA31;
  p.Omega31 = kOmega31;
  p.A32 = {r.p_LD[0] / saturation, r.p_LD[1] / saturation};
  p.A21 = r.p_DL;
  p.I_sc = kIsc;
  return p;
}

}  // namespace blink::fixtures
