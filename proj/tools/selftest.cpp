#include "selftest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "blink/correlation.hpp"
#include "blink/fixtures.hpp"
#include "blink/liouvillian.hpp"
#include "blink/markov.hpp"
#include "blink/simulator.hpp"

namespace blinkcorr {

namespace {

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

double log_uniform(blink::StreamRng& rng, double lo, double hi) {
  return lo * std::pow(hi / lo, rng.uniform());
}

// Random rates spanning the blinking range of the fixture and beyond.
blink::TransitionRates random_rates(blink::StreamRng& rng) {
  blink::TransitionRates r;
  for (int i = 0; i < 2; ++i) {
    r.p_LD[i] = log_uniform(rng, 1.0, 1e4);
    r.p_DL[i] = log_uniform(rng, 1.0, 1e4);
  }
  return r;
}

blink::PhotoPhysicalParams random_params(blink::StreamRng& rng) {
  blink::PhotoPhysicalParams p;
  p.A31 = log_uniform(rng, 1e7, 1e9);
  p.Omega31 = log_uniform(rng, 1e7, 1e9);
  for (int i = 0; i < 2; ++i) {
    p.A32[i] = log_uniform(rng, 1.0, 1e4);
    p.A21[i] = log_uniform(rng, 1.0, 1e4);
  }
  p.I_sc = log_uniform(rng, 1e5, 1e8);
  return p;
}

}  // namespace

std::vector<SelftestRow> run_selftest(double scale) {
  using namespace blink;
  std::vector<SelftestRow> rows;
  const PhotoPhysicalParams fixture = fixtures::rate_params();
  const std::vector<double> slow_grid = log_grid(1e-6, 1.0, 200.0 / 6.0);
  const std::vector<double> full_grid = default_grid();

  // Closed-form P_LL against the matrix propagator.
  {
    double worst = 0.0;
    StreamRng rng(20231, 1);
    for (int k = 0; k <= 200; ++k) {
      const TransitionRates r = k == 0 ? rates_from_statistics(fixtures::kT_L, {fixtures::kT_D1, fixtures::kT_D2},
                                                               fixtures::kP1)
                                       : random_rates(rng);
      const PeriodStatistics st = period_statistics(r);
      const Eigen::MatrixXd B = build_rate_matrix(PeriodChain::light_dark(r, 1.0));
      for (double tau : slow_grid) worst = std::max(worst, rel(p_ll(tau, st), propagator(B, tau).matrix(0, 0)));
    }
    rows.push_back({"P_LL closed form vs propagator", worst, 1e-9 * scale});
  }

  // Spectral propagator against scaling-and-squaring.
  {
    double worst = 0.0;
    const Eigen::MatrixXd B = build_rate_matrix(PeriodChain::light_dark(transition_rates(fixture), 1.0));
    for (double tau : slow_grid) {
      worst = std::max(worst, (propagator(B, tau).matrix - propagator_pade(B, tau)).cwiseAbs().maxCoeff());
    }
    rows.push_back({"spectral vs Pade propagator", worst, 1e-9 * scale});
  }

  // Stationary vector against the closed-form light probability.
  {
    const TransitionRates r = transition_rates(fixture);
    const Eigen::VectorXd pi = stationary(build_rate_matrix(PeriodChain::light_dark(r, 1.0)));
    rows.push_back({"stationary P_L vs closed form", rel(pi[0], period_statistics(r).P_L), 1e-12 * scale});
  }

  // Product form against the explicit duration form.
  {
    double worst = 0.0;
    StreamRng rng(20231, 2);
    for (int k = 0; k <= 50; ++k) {
      const PhotoPhysicalParams p = k == 0 ? fixture : random_params(rng);
      const CorrelationModel m = CorrelationModel::from_params(p);
      for (double tau : full_grid) worst = std::max(worst, rel(g_total(tau, m), g_total_product(tau, m)));
    }
    rows.push_back({"g product vs explicit form", worst, 1e-10 * scale});
  }

  // General n-period formula reduced to three periods, no background.
  {
    PhotoPhysicalParams p = fixture;
    p.I_sc = 0.0;
    const PeriodChain chain = PeriodChain::light_dark(transition_rates(p), light_intensity(p));
    const std::vector<PeriodCorrelation> g = {[&](double t) { return g2(t, p.A31, p.Omega31); },
                                              [](double) { return 1.0; }, [](double) { return 1.0; }};
    double worst = 0.0;
    for (double tau : full_grid) worst = std::max(worst, rel(g_general(tau, chain, g), g_total(tau, p)));
    rows.push_back({"n-period g vs three-period g", worst, 1e-10 * scale});
  }

  // Closed-form rates against first-order Liouvillian perturbation theory.
  {
    const TransitionRates closed = transition_rates(fixture);
    for (auto [method, label] : {std::pair{RateMethod::ClosedResolvent, "resolvent"},
                                 std::pair{RateMethod::FiniteStep, "finite step"}}) {
      const TransitionRates pert = perturbative_rates(fixture, method);
      for (int i = 0; i < 2; ++i) {
        rows.push_back({fmt::format("p_LD{} closed form vs {}", i + 1, label), rel(closed.p_LD[i], pert.p_LD[i]),
                        1e-3 * scale});
        rows.push_back({fmt::format("p_DL{} closed form vs {}", i + 1, label), rel(closed.p_DL[i], pert.p_DL[i]),
                        1e-3 * scale});
      }
    }
  }
  return rows;
}

std::string format_selftest(const std::vector<SelftestRow>& rows) {
  std::string out = fmt::format("{:<36} {:>12} {:>12}  {}\n", "check", "deviation", "tolerance", "result");
  int failed = 0;
  for (const auto& r : rows) {
    out += fmt::format("{:<36} {:>12.3e} {:>12.3e}  {}\n", r.check, r.deviation, r.tolerance, r.pass() ? "PASS" : "FAIL");
    if (!r.pass()) ++failed;
  }
  out += fmt::format("{} of {} checks passed\n", rows.size() - failed, rows.size());
  return out;
}

}  // namespace blinkcorr
