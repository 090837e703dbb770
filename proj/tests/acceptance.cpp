// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only
//
// Exit status is 0 when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "blink/correlation.hpp"
#include "blink/fitting.hpp"
#include "blink/fixtures.hpp"
#include "blink/liouvillian.hpp"
#include "blink/markov.hpp"
#include "blink/params.hpp"
#include "blink/simulator.hpp"

using namespace blink;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel(double value, double reference) {
  if (value == reference) return 0.0;
  return std::abs(value - reference) / std::abs(reference);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. Perturbative Liouvillian rates against the closed forms.
Outcome rate_oracle() {
  const auto t0 = Clock::now();
  const PhotoPhysicalParams p = fixtures::rate_params();
  const TransitionRates closed = transition_rates(p);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [method, label] : {std::pair{RateMethod::ClosedResolvent, "resolvent"},
                                      std::pair{RateMethod::FiniteStep, "finite-step"}}) {
    const TransitionRates pert = perturbative_rates(p, method);
    for (int i = 0; i < 2; ++i) {
      const double d_ld = rel(pert.p_LD[i], closed.p_LD[i]);
      const double d_dl = rel(pert.p_DL[i], closed.p_DL[i]);
      if (d_ld > worst) {
        worst = d_ld;
        worst_name = std::string(label) + " p_LD" + std::to_string(i + 1);
      }
      if (d_dl > worst) {
        worst = d_dl;
        worst_name = std::string(label) + " p_DL" + std::to_string(i + 1);
      }
    }
  }
  const double runtime = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-3 && runtime < 1.0;
  o.detail = "max rel dev " + fmt("%.3e", worst) + " (" + worst_name + ", tol 1e-3), runtime " +
             fmt("%.2f", runtime) + " s (limit 1 s)";
  return o;
}

// 2. Closed-form P_LL against the matrix exponential.
Outcome propagator_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 eng(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, u(eng)); };
  std::vector<double> taus;
  for (int i = 0; i < 200; ++i) taus.push_back(1e-6 * std::pow(1e6, i / 199.0));
  double worst = 0.0;
  for (int set = 0; set < 1000; ++set) {
    TransitionRates r;
    for (int i = 0; i < 2; ++i) {
      r.p_LD[i] = log_uniform(1.0, 1e4);
      r.p_DL[i] = log_uniform(1.0, 1e4);
    }
    const PeriodStatistics st = period_statistics(r);
    const Eigen::MatrixXd B = build_rate_matrix(PeriodChain::light_dark(r, 1.0));
    for (double tau : taus) worst = std::max(worst, rel(p_ll(tau, st), propagator(B, tau).matrix(0, 0)));
  }
  const double runtime = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-9 && runtime < 10.0;
  o.detail = "max rel dev " + fmt("%.3e", worst) + " over 1000 rate sets x " + std::to_string(taus.size()) +
             " delays (tol 1e-9), runtime " + fmt("%.2f", runtime) + " s (limit 10 s)";
  return o;
}

// 3. Three-period chain correlation against the closed form without background.
Outcome chain_reduction() {
  PhotoPhysicalParams p = fixtures::rate_params();
  p.I_sc = 0.0;
  const CorrelationModel model = CorrelationModel::from_params(p);
  const PeriodChain chain = PeriodChain::light_dark(transition_rates(p), light_intensity(p));
  const std::vector<PeriodCorrelation> g{[&](double tau) { return g2(tau, p.A31, p.Omega31); },
                                         [](double) { return 1.0; }, [](double) { return 1.0; }};
  double worst = 0.0;
  const auto grid = default_grid();
  for (double tau : grid) worst = std::max(worst, rel(g_general(tau, chain, g), g_total(tau, model)));
  Outcome o;
  o.pass = worst <= 1e-10;
  o.detail = "max rel dev " + fmt("%.3e", worst) + " over " + std::to_string(grid.size()) + " delays (tol 1e-10)";
  return o;
}

// 4. Hump height at 1 us.
Outcome hump_height() {
  CorrelationModel m;
  m.A31 = fixtures::kA31;
  m.Omega31 = fixtures::kOmega31;
  m.I_sc = fixtures::kIsc;
  m.stats = fixtures::measured_statistics();
  const double plateau = g_total(1e-6, m);
  const double expected = 1.0 / m.stats.P_L;
  Outcome o;
  o.pass = std::abs(plateau - 1.079) <= 0.001 && std::abs(plateau - expected) <= 0.001;
  o.detail = "g(1e-6 s) = " + fmt("%.5f", plateau) + ", 1/P_L = " + fmt("%.5f", expected) + " (target 1.079 +- 0.001)";
  return o;
}

// 5. Rates of the second table imply the durations of the first.
Outcome table_consistency() {
  const PeriodStatistics st = period_statistics(transition_rates(fixtures::rate_params()));
  struct Row {
    const char* name;
    double implied, quoted, bar;
  };
  const std::vector<Row> rows{{"T_L", st.T_L * 1e3, 8.2, 0.3},
                              {"T_D1", st.T_D[0] * 1e3, 2.3, 0.2},
                              {"T_D2", st.T_D[1] * 1e3, 0.42, 0.03},
                              {"p1", st.p1, 0.12, 0.02}};
  Outcome o;
  o.pass = true;
  std::ostringstream d;
  for (const auto& r : rows) {
    const bool ok = std::abs(r.implied - r.quoted) <= r.bar;
    o.pass = o.pass && ok;
    d << r.name << ' ' << fmt("%.4g", r.implied) << " vs " << r.quoted << "+-" << r.bar << (ok ? "" : " OUT") << "; ";
  }
  o.detail = d.str() + "(times in ms)";
  return o;
}

// 6. Simulated trajectory against the closed-form curve and P_L.
Outcome simulation_vs_theory() {
  const auto t0 = Clock::now();
  // Fast rates and background scaled by 1e-3: about 1.7e7 photons in 100 s.
  // The hierarchy (1/A31 ~ 3 us against ms blinking) is preserved.
  PhotoPhysicalParams p = fixtures::rate_params();
  p.A31 *= 1e-3;
  p.Omega31 *= 1e-3;
  p.I_sc *= 1e-3;
  const double duration = 100.0;
  const std::uint64_t seed = 6;
  const Trajectory traj = simulate(p, duration, seed);
  const CorrelationSeries est = estimate_g(traj, estimator_grid(1e-9, 1e-1));
  const CorrelationModel model = CorrelationModel::from_params(p);

  const auto edges = bin_edges(est.taus);
  std::size_t within = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    std::vector<double> sub;
    for (int k = 0; k < 16; ++k) sub.push_back(edges[i] + (edges[i + 1] - edges[i]) * (k + 0.5) / 16.0);
    const CorrelationSeries curve = eval_curve(sub, model);
    double expected = 0.0;
    for (double v : curve.values) expected += v;
    expected /= 16.0;
    if (std::abs(est.values[i] - expected) <= 3.0 * est.sigma->at(i)) ++within;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(est.size());

  // Light-time fraction; variance of a time average from the P_LL decay.
  const PeriodStatistics st = model.stats;
  const double light = light_fraction(traj.period_log);
  double integral = 0.0;
  const auto grid = log_grid(1e-7, 10.0, 200.0);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    integral += 0.5 * (grid[i + 1] - grid[i]) * (p_ll(grid[i], st) + p_ll(grid[i + 1], st) - 2.0 * st.P_L);
  }
  const double light_sigma = std::sqrt(2.0 * st.P_L * integral / duration);
  const bool light_ok = std::abs(light - st.P_L) <= 3.0 * light_sigma;

  const double runtime = seconds_since(t0);
  Outcome o;
  o.pass = frac >= 0.95 && light_ok && runtime < 300.0;
  o.detail = std::to_string(within) + "/" + std::to_string(est.size()) + " bins within 3 sigma (" +
             fmt("%.1f", 100.0 * frac) + "%, need 95%), light fraction " + fmt("%.5f", light) + " vs P_L " +
             fmt("%.5f", st.P_L) + " (3 sigma = " + fmt("%.1e", 3.0 * light_sigma) + "), " +
             std::to_string(traj.arrival_times.size()) + " photons, runtime " + fmt("%.0f", runtime) + " s";
  return o;
}

// 7. Synthetic fit recovery at 1% noise, medians over 20 seeds.
Outcome fit_recovery() {
  const auto t0 = Clock::now();
  const PhotoPhysicalParams p = fixtures::rate_params();
  const PeriodStatistics st = period_statistics(transition_rates(p));
  const std::map<std::string, double> truth{
      {"A31", p.A31},       {"Omega31", p.Omega31}, {"I_sc", p.I_sc},     {"T_L", st.T_L},
      {"T_D1", st.T_D[0]},  {"T_D2", st.T_D[1]},    {"p1", st.p1},        {"A32_1", p.A32[0]},
      {"A32_2", p.A32[1]},  {"A21_1", p.A21[0]},    {"A21_2", p.A21[1]}};

  std::vector<double> taus;
  for (int i = 0; i < 300; ++i) taus.push_back(1e-9 * std::pow(1e9, i / 299.0));
  const CorrelationSeries clean = eval_curve(taus, p);

  FitConfig config;
  config.bootstrap_resamples = 0;  // point estimates only
  std::map<std::string, std::vector<double>> values;
  int incomplete = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 eng(7000 + seed);
    std::normal_distribution<double> noise(0.0, 0.01);
    CorrelationSeries s = clean;
    s.sigma.emplace();
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.values[i] = clean.values[i] * (1.0 + noise(eng));
      s.sigma->push_back(0.01 * clean.values[i]);
    }
    const FitResult r = fit_full(s, config);
    if (!r.complete) {
      ++incomplete;
      continue;
    }
    for (const auto& [name, e] : r.estimates) values[name].push_back(e.value);
  }

  Outcome o;
  o.pass = incomplete == 0;
  std::ostringstream d;
  double worst = 0.0;
  for (const auto& [name, v] : truth) {
    if (values[name].empty()) {
      o.pass = false;
      continue;
    }
    const double dev = rel(median(values[name]), v);
    worst = std::max(worst, dev);
    if (dev > 0.05) {
      o.pass = false;
      d << name << ' ' << fmt("%.1f", 100.0 * dev) << "% ";
    }
  }
  const double runtime = seconds_since(t0);
  o.pass = o.pass && runtime < 120.0;
  o.detail = "worst median rel dev " + fmt("%.3f", worst) + " (tol 0.05)" +
             (d.str().empty() ? std::string() : "; over: " + d.str()) + "; " + std::to_string(incomplete) +
             " incomplete fits, runtime " + fmt("%.1f", runtime) + " s (limit 120 s)";
  return o;
}

// 8. Every module's property suite, timed together.
Outcome property_suites() {
  const auto t0 = Clock::now();
  std::vector<std::string> exes;
  std::stringstream list(UNIT_TEST_EXECUTABLES);
  std::string item;
  while (std::getline(list, item, '|')) {
    if (!item.empty()) exes.push_back(item);
  }
  std::vector<std::string> failed;
  for (const auto& exe : exes) {
    const std::string cmd = "\"" + exe + "\" --minimal > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0)) failed.push_back(exe.substr(exe.find_last_of('/') + 1));
  }
  const double runtime = seconds_since(t0);
  Outcome o;
  o.pass = failed.empty() && runtime < 300.0 && !exes.empty();
  std::string names;
  for (const auto& f : failed) names += " " + f;
  o.detail = std::to_string(exes.size() - failed.size()) + "/" + std::to_string(exes.size()) + " suites passed" +
             (failed.empty() ? std::string() : " (failed:" + names + ")") + ", runtime " + fmt("%.0f", runtime) +
             " s (limit 300 s)";
  return o;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {1, "rate oracle equivalence", rate_oracle},
      {2, "closed-form P_LL vs matrix exponential", propagator_oracle},
      {3, "three-period chain reduces to the closed form", chain_reduction},
      {4, "hump height 1/P_L", hump_height},
      {5, "rate table implies the duration table", table_consistency},
      {6, "simulation vs theory", simulation_vs_theory},
      {7, "fit recovery at 1% noise", fit_recovery},
      {8, "property suites", property_suites},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria().size())) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  bool all = true;
  for (const auto& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s - %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
