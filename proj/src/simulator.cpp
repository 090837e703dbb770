#include "blink/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "blink/errors.hpp"
#include "blink/kv_text.hpp"

namespace blink {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// Stream ids. Light period k uses kLightStreamBase + k.
constexpr std::uint64_t kPeriodStream = 1;
constexpr std::uint64_t kBackgroundStream = 2;
constexpr std::uint64_t kLightStreamBase = 1000;

// Integral over tau in [a, b) of the length of first-photon times t in
// [s, e) whose partner t + tau still lies before T.
double pair_exposure(double s, double e, double T, double a, double b) {
  auto antiderivative = [&](double tau) {
    // f(tau) = clamp(min(e, T - tau) - s, 0, e - s)
    const double knee = T - e;
    const double stop = T - s;
    double acc = 0.0;
    const double flat_end = std::min(tau, knee);
    if (flat_end > 0.0) acc += (e - s) * flat_end;
    const double lo = std::max(0.0, knee);
    const double hi = std::min(tau, stop);
    if (hi > lo) acc += (T - s) * (hi - lo) - 0.5 * (hi * hi - lo * lo);
    return acc;
  };
  return antiderivative(b) - antiderivative(a);
}

}  // namespace

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed;
  const std::uint64_t mixed_seed = splitmix64(x);
  x = stream ^ 0x6a09e667f3bcc909ULL;
  std::uint64_t s = mixed_seed ^ splitmix64(x);
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t StreamRng::next() {
  // xoshiro256**
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double StreamRng::uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

double StreamRng::exponential(double rate) { return -std::log(uniform()) / rate; }

void Trajectory::validate() const {
  if (!(duration > 0.0)) throw DomainError("trajectory: duration must be > 0");
  for (std::size_t i = 0; i < arrival_times.size(); ++i) {
    const double t = arrival_times[i];
    if (!(t >= 0.0 && t <= duration)) throw DomainError("trajectory: arrival time outside [0, duration]");
    if (i > 0 && t < arrival_times[i - 1]) throw DomainError("trajectory: arrival times not sorted");
  }
  double cursor = 0.0;
  for (const auto& rec : period_log) {
    if (rec.start != cursor || !(rec.end > rec.start)) throw DomainError("trajectory: period log does not tile");
    cursor = rec.end;
  }
  if (!period_log.empty() && cursor != duration) throw DomainError("trajectory: period log does not reach duration");
}

TwoLevelEmitter::TwoLevelEmitter(double A31, double Omega31)
    : A31_(A31), Omega31_(Omega31), w2_((4.0 * Omega31 * Omega31 - A31 * A31) / 16.0) {
  if (!(A31 > 0.0) || !(Omega31 > 0.0)) throw DomainError("TwoLevelEmitter: A31 and Omega31 must be > 0");
}

// c1(t) = e^{-At/4} (cos wt + (A / 4w) sin wt), |c3(t)| = (Omega / 2) e^{-At/4} |sin(wt) / w|.
void TwoLevelEmitter::amplitudes(double t, double& ground, double& excited_abs) const {
  const double quarter = 0.25 * A31_;
  double e_cos = 0.0;
  double e_sin = 0.0;  // e^{-At/4} sin(wt) / w, continued to sinh for w^2 < 0
  if (w2_ > 0.0) {
    const double w = std::sqrt(w2_);
    const double env = std::exp(-quarter * t);
    const double x = w * t;
    e_cos = env * std::cos(x);
    e_sin = env * (std::abs(x) < 1e-4 ? t * (1.0 - x * x / 6.0) : std::sin(x) / w);
  } else if (w2_ < 0.0) {
    const double k = std::sqrt(-w2_);
    const double fast = std::exp(-(quarter + k) * t);
    e_cos = 0.5 * (std::exp((k - quarter) * t) + fast);
    e_sin = fast * std::expm1(2.0 * k * t) / (2.0 * k);
  } else {
    const double env = std::exp(-quarter * t);
    e_cos = env;
    e_sin = env * t;
  }
  ground = e_cos + quarter * e_sin;
  excited_abs = 0.5 * Omega31_ * std::abs(e_sin);
}

double TwoLevelEmitter::survival(double t) const {
  double c1 = 0.0;
  double c3 = 0.0;
  amplitudes(t, c1, c3);
  return c1 * c1 + c3 * c3;
}

double TwoLevelEmitter::waiting_density(double t) const {
  double c1 = 0.0;
  double c3 = 0.0;
  amplitudes(t, c1, c3);
  return A31_ * c3 * c3;
}

double TwoLevelEmitter::sample_wait(double threshold) const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("sample_wait: threshold must lie in (0, 1)");
  const double target = std::log(threshold);
  // Bracket: log S decreases without bound.
  const double I_L = light_intensity(A31_, Omega31_);
  double lo = 0.0;
  double hi = std::max(-target / I_L, 1e-3 / A31_);
  while (std::log(survival(hi)) > target) {
    lo = hi;
    hi *= 2.0;
  }
  // Newton on log S(t) = target with bisection fallback.
  double t = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    double c1 = 0.0;
    double c3 = 0.0;
    amplitudes(t, c1, c3);
    const double S = c1 * c1 + c3 * c3;
    const double f = std::log(S) - target;
    if (f > 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    const double slope = -A31_ * c3 * c3 / S;
    double next = slope < 0.0 ? t - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-14 * t || hi - lo <= 1e-15 * hi) return next;
    t = next;
  }
  return t;
}

std::vector<PeriodRecord> simulate_periods(const PeriodStatistics& stats, double duration, std::uint64_t seed) {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw DomainError("simulate_periods: duration must be > 0");
  StreamRng rng(seed, kPeriodStream);

  const double P_D1 = stats.P_L * stats.p_LD[0] / stats.p_DL[0];
  const double P_D2 = stats.P_L * stats.p_LD[1] / stats.p_DL[1];
  Period current = Period::Light;
  const double u0 = rng.uniform();
  if (u0 < P_D1) {
    current = Period::Dark1;
  } else if (u0 < P_D1 + P_D2) {
    current = Period::Dark2;
  }

  std::vector<PeriodRecord> log;
  double t = 0.0;
  while (t < duration) {
    double dwell = std::numeric_limits<double>::infinity();
    switch (current) {
      case Period::Light:
        if (std::isfinite(stats.T_L)) dwell = stats.T_L * -std::log(rng.uniform());
        break;
      case Period::Dark1:
        dwell = stats.T_D[0] * -std::log(rng.uniform());
        break;
      case Period::Dark2:
        dwell = stats.T_D[1] * -std::log(rng.uniform());
        break;
    }
    const double end = std::min(t + dwell, duration);
    if (end > t) log.push_back({current, t, end});
    t = end;
    if (current == Period::Light) {
      current = rng.uniform() < stats.p1 ? Period::Dark1 : Period::Dark2;
    } else {
      current = Period::Light;
    }
  }
  return log;
}

Trajectory simulate_photons(const std::vector<PeriodRecord>& period_log, const PhotoPhysicalParams& params,
                            std::uint64_t seed, Background background_mode) {
  params.validate();
  Trajectory traj;
  traj.seed = seed;
  traj.period_log = period_log;
  traj.duration = period_log.empty() ? 0.0 : period_log.back().end;
  traj.validate();

  std::vector<double> emitted;
  if (params.Omega31 > 0.0 && params.A31 > 0.0) {
    const TwoLevelEmitter emitter(params.A31, params.Omega31);
    for (std::size_t k = 0; k < period_log.size(); ++k) {
      const auto& rec = period_log[k];
      if (rec.kind != Period::Light) continue;
      StreamRng rng(seed, kLightStreamBase + k);
      double t = rec.start;
      while (true) {
        t += emitter.sample_wait(rng.uniform());
        if (t >= rec.end) break;
        emitted.push_back(t);
      }
    }
  }

  std::vector<double> background;
  if (params.I_sc > 0.0) {
    StreamRng rng(seed, kBackgroundStream);
    double t = 0.0;
    while (true) {
      t += rng.exponential(params.I_sc);
      if (t >= traj.duration) break;
      background.push_back(t);
    }
    if (background_mode == Background::LightOnly) {
      // Same stream, restricted to light periods.
      std::size_t k = 0, kept = 0;
      for (double b : background) {
        while (period_log[k].end <= b && k + 1 < period_log.size()) ++k;
        if (period_log[k].kind == Period::Light) background[kept++] = b;
      }
      background.resize(kept);
    }
  }

  traj.arrival_times.resize(emitted.size() + background.size());
  std::merge(emitted.begin(), emitted.end(), background.begin(), background.end(), traj.arrival_times.begin());
  return traj;
}

Trajectory simulate(const PhotoPhysicalParams& params, double duration, std::uint64_t seed, Background background_mode) {
  const PeriodStatistics stats = period_statistics(transition_rates(params));
  return simulate_photons(simulate_periods(stats, duration, seed), params, seed, background_mode);
}

double light_fraction(const std::vector<PeriodRecord>& period_log) {
  if (period_log.empty()) return 0.0;
  double light = 0.0;
  for (const auto& rec : period_log) {
    if (rec.kind == Period::Light) light += rec.end - rec.start;
  }
  return light / period_log.back().end;
}

std::vector<double> estimator_grid(double tau_min, double tau_max) { return log_grid(tau_min, tau_max, 20.0); }

std::vector<double> bin_edges(const std::vector<double>& grid) {
  std::vector<double> edges;
  if (grid.empty()) return edges;
  edges.reserve(grid.size() + 1);
  if (grid.size() == 1) {
    const double half = std::pow(10.0, 1.0 / 40.0);
    return {grid[0] / half, grid[0] * half};
  }
  edges.push_back(grid[0] / std::sqrt(grid[1] / grid[0]));
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) edges.push_back(std::sqrt(grid[i] * grid[i + 1]));
  const std::size_t n = grid.size();
  edges.push_back(grid[n - 1] * std::sqrt(grid[n - 1] / grid[n - 2]));
  return edges;
}

CorrelationSeries estimate_g(const Trajectory& traj, const std::vector<double>& grid, const EstimatorOptions& options) {
  const auto& t = traj.arrival_times;
  const std::size_t n = t.size();
  if (n < 1000) throw InsufficientDataError("estimate_g: at least 1000 photons required");
  if (!(traj.duration > 0.0)) throw DomainError("estimate_g: duration must be > 0");
  {
    CorrelationSeries check;
    check.taus = grid;
    check.values.assign(grid.size(), 0.0);
    check.validate();
  }

  const double T = traj.duration;
  std::vector<double> edges = bin_edges(grid);
  std::size_t bins = grid.size();
  while (bins > 0 && edges[bins] > options.max_delay_fraction * T) --bins;
  edges.resize(bins + 1);
  CorrelationSeries out;
  if (bins == 0) return out;

  const std::size_t blocks = std::max<std::size_t>(1, options.blocks);
  // block k holds first photons with t in [k T / blocks, (k + 1) T / blocks)
  std::vector<std::size_t> block_start(blocks + 1, n);
  for (std::size_t k = 0; k < blocks; ++k) {
    const double s = T * static_cast<double>(k) / static_cast<double>(blocks);
    block_start[k] = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), s) - t.begin());
  }
  block_start[blocks] = n;

  // cumulative[e][k]: pairs i < j with t_j - t_i < edges[e] and i in block k
  std::vector<std::vector<std::int64_t>> cumulative(edges.size(), std::vector<std::int64_t>(blocks, 0));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double width = edges[e];
    std::size_t j = 0;
    for (std::size_t k = 0; k < blocks; ++k) {
      std::int64_t acc = 0;
      for (std::size_t i = block_start[k]; i < block_start[k + 1]; ++i) {
        if (j <= i) j = i + 1;
        while (j < n && t[j] - t[i] < width) ++j;
        acc += static_cast<std::int64_t>(j - i - 1);
      }
      cumulative[e][k] = acc;
    }
  }

  const double nd = static_cast<double>(n);
  const double rate2 = nd * (nd - 1.0) / (T * T);
  out.taus.assign(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(bins));
  out.values.resize(bins);
  out.sigma.emplace(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = edges[b];
    const double hi = edges[b + 1];
    std::int64_t count = 0;
    for (std::size_t k = 0; k < blocks; ++k) count += cumulative[b + 1][k] - cumulative[b][k];
    const double exposure = (hi - lo) * T - 0.5 * (hi * hi - lo * lo);
    const double norm = rate2 * exposure;
    out.values[b] = static_cast<double>(count) / norm;
    double sigma = std::sqrt(std::max<double>(static_cast<double>(count), 1.0)) / norm;

    if (blocks > 1) {
      double sum = 0.0;
      double sum2 = 0.0;
      std::size_t used = 0;
      for (std::size_t k = 0; k < blocks; ++k) {
        const double s = T * static_cast<double>(k) / static_cast<double>(blocks);
        const double e = T * static_cast<double>(k + 1) / static_cast<double>(blocks);
        const double nk = static_cast<double>(block_start[k + 1] - block_start[k]);
        const double exp_k = pair_exposure(s, e, T, lo, hi);
        if (nk < 2.0 || exp_k <= 0.0) continue;
        const double rate_k = nk / (e - s);
        const double gk = static_cast<double>(cumulative[b + 1][k] - cumulative[b][k]) / (rate_k * rate_k * exp_k);
        sum += gk;
        sum2 += gk * gk;
        ++used;
      }
      if (used > 1) {
        const double mean = sum / static_cast<double>(used);
        const double var = std::max(0.0, (sum2 - static_cast<double>(used) * mean * mean) / static_cast<double>(used - 1));
        sigma = std::max(sigma, std::sqrt(var / static_cast<double>(used)));
      }
    }
    out.sigma->at(b) = sigma;
  }
  return out;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", traj.duration);
  out << "# duration=" << buf << " seed=" << traj.seed << '\n';
  for (double t : traj.arrival_times) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", t);
    out << buf;
  }
}

std::string trajectory_to_text(const Trajectory& traj) {
  std::ostringstream os;
  write_trajectory(os, traj);
  return os.str();
}

Trajectory read_trajectory(std::istream& in) {
  Trajectory traj;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ParseError("trajectory: missing header");
  std::istringstream header(line.substr(2));
  std::string field;
  bool have_duration = false;
  bool have_seed = false;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ParseError("trajectory: malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "duration") {
      traj.duration = parse_double(value, "duration");
      have_duration = true;
    } else if (key == "seed") {
      try {
        traj.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw ParseError("trajectory: bad seed '" + value + "'");
      }
      have_seed = true;
    }
  }
  if (!have_duration || !have_seed) throw ParseError("trajectory: header needs duration and seed");
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    traj.arrival_times.push_back(parse_double(line, "arrival time"));
  }
  traj.validate();
  return traj;
}

Trajectory read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trajectory '" + path + "'");
  return read_trajectory(in);
}

}  // namespace blink
