#pragma once

// Stochastic photon streams for the blinking model: a three-state Markov jump
// process of intensity periods, quantum-jump emission from the driven two-level
// subsystem inside light periods, and a Poissonian scattered background.
// A correlation estimator turns arrival times back into g(tau).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "blink/correlation.hpp"
#include "blink/params.hpp"

namespace blink {

enum class Period : int { Light = 0, Dark1 = 1, Dark2 = 2 };

struct PeriodRecord {
  Period kind = Period::Light;
  double start = 0.0;
  double end = 0.0;
};

struct Trajectory {
  std::vector<double> arrival_times;  ///< sorted, inside [0, duration]
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::vector<PeriodRecord> period_log;

  void validate() const;
};

/// Deterministic per-stream generator: every (seed, stream) pair yields an
/// independent sequence, so blocks of work can be generated in any order.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream);
  std::uint64_t next();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double exponential(double rate);

 private:
  std::uint64_t state_[4];
};

/// Waiting-time law of the driven two-level atom restarted in |1> after each
/// emission: S(t) is the no-jump probability, w(t) = -S'(t) = A31 |c3(t)|^2.
class TwoLevelEmitter {
 public:
  TwoLevelEmitter(double A31, double Omega31);
  double survival(double t) const;
  double waiting_density(double t) const;
  /// Time at which the survival probability drops to `threshold` in (0, 1).
  double sample_wait(double threshold) const;

 private:
  void amplitudes(double t, double& ground, double& excited_abs) const;
  double A31_;
  double Omega31_;
  double w2_;  // ((4 Omega^2 - A^2) / 16), squared oscillation frequency
};

/// Alternating light/dark intervals tiling [0, duration]. The initial period is
/// drawn from the stationary distribution.
std::vector<PeriodRecord> simulate_periods(const PeriodStatistics& stats, double duration, std::uint64_t seed);

/// Where the scattered background is present. WholeTrace models an always-on
/// laser; LightOnly matches the light-period weighting used by g2_mod.
enum class Background { WholeTrace, LightOnly };

Trajectory simulate_photons(const std::vector<PeriodRecord>& period_log, const PhotoPhysicalParams& params,
                            std::uint64_t seed, Background background = Background::WholeTrace);

/// simulate_periods + simulate_photons with period statistics from params.
Trajectory simulate(const PhotoPhysicalParams& params, double duration, std::uint64_t seed,
                    Background background = Background::WholeTrace);

/// Fraction of [0, duration] covered by light periods.
double light_fraction(const std::vector<PeriodRecord>& period_log);

struct EstimatorOptions {
  /// Number of equal time blocks for the batch-means error estimate; <= 1
  /// keeps the pure counting error.
  std::size_t blocks = 20;
  /// Bins reaching beyond this fraction of the duration are dropped.
  double max_delay_fraction = 0.1;
};

/// Pair-delay histogram over logarithmic bins centred (geometrically) on the
/// grid points, normalised to a Poisson stream of the same mean rate.
CorrelationSeries estimate_g(const Trajectory& traj, const std::vector<double>& grid,
                             const EstimatorOptions& options = {});

/// 20 bins per decade between tau_min and tau_max.
std::vector<double> estimator_grid(double tau_min, double tau_max);

/// Bin edges used by estimate_g: geometric midpoints between grid points.
std::vector<double> bin_edges(const std::vector<double>& grid);

/// One arrival time per line, `# duration=... seed=...` header.
void write_trajectory(std::ostream& out, const Trajectory& traj);
std::string trajectory_to_text(const Trajectory& traj);
Trajectory read_trajectory(std::istream& in);
Trajectory read_trajectory_file(const std::string& path);

}  // namespace blink
