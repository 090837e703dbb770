#include "blink/correlation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blink/errors.hpp"
#include "blink/kv_text.hpp"
#include "blink/markov.hpp"

namespace blink {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

// e^{-3A tau/4} (cos(gamma tau) + (3A / 4 gamma) sin(gamma tau)), continued
// analytically through gamma^2 = (16 Omega^2 - A^2) / 16.
double two_level_envelope(double tau, double A31, double Omega31) {
  const double damping = 0.75 * A31;
  const double disc = 16.0 * Omega31 * Omega31 - A31 * A31;
  if (disc >= 0.0) {
    const double gamma = 0.25 * std::sqrt(disc);
    return std::exp(-damping * tau) * (std::cos(gamma * tau) + damping * tau * sinc(gamma * tau));
  }
  const double kappa = 0.25 * std::sqrt(-disc);
  const double slow = std::exp((kappa - damping) * tau);
  const double fast = std::exp(-(kappa + damping) * tau);
  // sinh(kappa tau) / kappa times the envelope, without cancellation at small kappa.
  double sinh_term = tau * fast;
  if (2.0 * kappa * tau > 1.0) {
    sinh_term = (slow - fast) / (2.0 * kappa);
  } else if (kappa > 0.0) {
    sinh_term = fast * std::expm1(2.0 * kappa * tau) / (2.0 * kappa);
  }
  return 0.5 * (slow + fast) + damping * sinh_term;
}

void check_tau(double tau) {
  if (!(tau >= 0.0)) throw DomainError("tau must be >= 0");
}

}  // namespace

void CorrelationSeries::validate() const {
  if (values.size() != taus.size()) throw DomainError("series: taus and values differ in length");
  if (sigma && sigma->size() != taus.size()) throw DomainError("series: sigma length mismatch");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0) || !std::isfinite(taus[i])) throw DomainError("series: taus must be finite and > 0");
    if (i > 0 && !(taus[i] > taus[i - 1])) throw DomainError("series: taus must be strictly increasing");
    if (!std::isfinite(values[i])) throw DomainError("series: values must be finite");
    if (sigma && !((*sigma)[i] > 0.0 && std::isfinite((*sigma)[i]))) {
      throw DomainError("series: sigma must be finite and > 0");
    }
  }
}

CorrelationModel CorrelationModel::from_params(const PhotoPhysicalParams& params) {
  params.validate();
  CorrelationModel m;
  m.A31 = params.A31;
  m.Omega31 = params.Omega31;
  m.I_sc = params.I_sc;
  m.stats = period_statistics(transition_rates(params));
  return m;
}

double g2(double tau, double A31, double Omega31) {
  check_tau(tau);
  if (!(A31 > 0.0)) throw DomainError("g2: A31 must be > 0");
  return 1.0 - two_level_envelope(tau, A31, Omega31);
}

double g2_mod(double tau, double A31, double Omega31, double I_sc) {
  const double I_L = light_intensity(A31, Omega31);
  if (I_sc < 0.0) throw DomainError("g2_mod: I_sc must be >= 0");
  if (I_L + I_sc == 0.0) throw DegenerateError("g2_mod: I_L + I_sc = 0");
  if (std::isinf(I_sc)) return 1.0;
  if (I_sc == 0.0) return g2(tau, A31, Omega31);
  return (I_L * g2(tau, A31, Omega31) + I_sc) / (I_L + I_sc);
}

double g2_mod(double tau, const PhotoPhysicalParams& params) {
  return g2_mod(tau, params.A31, params.Omega31, params.I_sc);
}

double p_ll(double tau, const PeriodStatistics& s) {
  check_tau(tau);
  const double mu1 = s.mu1;
  const double mu2 = s.mu2;
  if (std::abs(mu1 - mu2) < 1e-9 * std::abs(mu1)) {
    const TransitionRates r{s.p_LD, s.p_DL};
    const Eigen::MatrixXd B = build_rate_matrix(PeriodChain::light_dark(r, 1.0));
    return propagator(B, tau).matrix(0, 0);
  }
  const auto& ld = s.p_LD;
  const auto& dl = s.p_DL;
  auto weight = [&](double mu) { return ld[0] * (dl[1] + mu) + ld[1] * (dl[0] + mu); };
  const double gap = mu1 - mu2;
  return s.P_L - std::exp(mu1 * tau) * weight(mu1) / (mu1 * gap) +
         std::exp(mu2 * tau) * weight(mu2) / (mu2 * gap);
}

double slow_factor(double tau, double T_L, const RatePair& T_D, double p1) {
  check_tau(tau);
  if (std::isinf(T_L)) return 1.0;
  const double p2 = 1.0 - p1;
  const double inv_L = 1.0 / T_L;
  const double inv_D1 = 1.0 / T_D[0];
  const double inv_D2 = 1.0 / T_D[1];
  const double total = inv_L + inv_D1 + inv_D2;
  const double skew = inv_D1 - inv_D2 + (1.0 - 2.0 * p2) * inv_L;
  const double Gamma = 0.5 * std::sqrt(skew * skew + 4.0 * p1 * p2 * inv_L * inv_L);

  // exponents -total/2 -+ Gamma; the small one from the product of both roots
  const double product = p1 * inv_L * inv_D2 + p2 * inv_L * inv_D1 + inv_D1 * inv_D2;
  const double fast = -0.5 * total - Gamma;
  const double slow = product / fast;
  const double gap = slow - fast;

  const double e_fast = std::exp(fast * tau);
  const double e_slow = std::exp(slow * tau);
  const double cosh_term = 0.5 * (e_slow + e_fast);
  double sinh_term = 0.5 * tau * e_fast;
  if (gap * tau > 1.0) {
    sinh_term = (e_slow - e_fast) / (2.0 * gap);
  } else if (gap > 0.0) {
    sinh_term = e_fast * std::expm1(gap * tau) / (2.0 * gap);
  }

  const double a = p1 * T_D[0] + p2 * T_D[1];
  const double b = p1 * (T_D[0] / T_D[1] - T_D[0] * inv_L) + p2 * (T_D[1] / T_D[0] - T_D[1] * inv_L) - 1.0;
  return 1.0 + inv_L * (a * cosh_term + b * sinh_term);
}

double slow_factor(double tau, const PeriodStatistics& s) { return slow_factor(tau, s.T_L, s.T_D, s.p1); }

double g_total(double tau, const CorrelationModel& m) {
  return g2_mod(tau, m.A31, m.Omega31, m.I_sc) * slow_factor(tau, m.stats);
}

double g_total(double tau, const PhotoPhysicalParams& params) {
  return g_total(tau, CorrelationModel::from_params(params));
}

double g_total_product(double tau, const CorrelationModel& m) {
  return p_ll(tau, m.stats) * g2_mod(tau, m.A31, m.Omega31, m.I_sc) / m.stats.P_L;
}

std::vector<double> log_grid(double tau_min, double tau_max, double points_per_decade) {
  if (!(tau_min > 0.0) || !(tau_max >= tau_min) || !(points_per_decade > 0.0)) {
    throw DomainError("log_grid: need 0 < tau_min <= tau_max and points_per_decade > 0");
  }
  const double decades = std::log10(tau_max / tau_min);
  const auto steps = static_cast<std::size_t>(std::llround(decades * points_per_decade));
  std::vector<double> grid;
  grid.reserve(steps + 1);
  if (steps == 0) {
    grid.push_back(tau_min);
    return grid;
  }
  const double lmin = std::log10(tau_min);
  for (std::size_t k = 0; k <= steps; ++k) {
    grid.push_back(std::pow(10.0, lmin + decades * static_cast<double>(k) / static_cast<double>(steps)));
  }
  grid.front() = tau_min;
  grid.back() = tau_max;
  return grid;
}

std::vector<double> default_grid() { return log_grid(1e-10, 1.0, 60.0); }

CorrelationSeries eval_curve(const std::vector<double>& grid, const CorrelationModel& model) {
  CorrelationSeries out;
  out.taus = grid;
  out.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] = g_total(grid[i], model);
  out.validate();
  return out;
}

CorrelationSeries eval_curve(const std::vector<double>& grid, const PhotoPhysicalParams& params) {
  return eval_curve(grid, CorrelationModel::from_params(params));
}

CorrelationSeries read_series_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("csv: empty input");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  bool with_sigma = false;
  if (header == "tau_s,g,sigma") {
    with_sigma = true;
  } else if (header != "tau_s,g") {
    throw ParseError("csv: header must be 'tau_s,g' or 'tau_s,g,sigma'");
  }
  CorrelationSeries s;
  if (with_sigma) s.sigma.emplace();
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::size_t want = with_sigma ? 3 : 2;
    if (cells.size() != want) throw ParseError("csv line " + std::to_string(lineno) + ": wrong column count");
    s.taus.push_back(parse_double(cells[0], "tau_s"));
    s.values.push_back(parse_double(cells[1], "g"));
    if (with_sigma) s.sigma->push_back(parse_double(cells[2], "sigma"));
  }
  s.validate();
  return s;
}

CorrelationSeries read_series_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_series_csv(in);
}

std::string series_to_csv(const CorrelationSeries& s) {
  std::string out = s.sigma ? "tau_s,g,sigma\n" : "tau_s,g\n";
  char buf[96];
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.sigma) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", s.taus[i], s.values[i], (*s.sigma)[i]);
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s.taus[i], s.values[i]);
    }
    out += buf;
  }
  return out;
}

}  // namespace blink
