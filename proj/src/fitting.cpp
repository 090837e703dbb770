#include "blink/fitting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "blink/errors.hpp"
#include "blink/kv_text.hpp"
#include "blink/simulator.hpp"

namespace blink {

namespace {

const std::map<std::string, ParamBounds>& default_bounds() {
  static const std::map<std::string, ParamBounds> table = {
      {"T_L", {1e-9, 1e3}},      {"T_D1", {1e-9, 1e3}},    {"T_D2", {1e-9, 1e3}},  {"p1", {0.0, 1.0}},
      {"A31", {1.0, 1e13}},      {"Omega31", {1.0, 1e13}}, {"I_sc", {0.0, 1e13}},  {"I_sc_ratio", {0.0, 1e6}},
      {"A32_1", {0.0, 1e8}},     {"A32_2", {0.0, 1e8}},    {"A21_1", {1e-3, 1e8}}, {"A21_2", {1e-3, 1e8}},
      {"amplitude", {0.1, 10.0}},
  };
  return table;
}

struct Subset {
  std::vector<double> tau;
  std::vector<double> y;
  std::vector<double> sqrt_w;
  std::size_t size() const { return tau.size(); }
};

Subset select(const CorrelationSeries& s, bool above, double split) {
  Subset out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool keep = above ? s.taus[i] > split : s.taus[i] < split;
    if (!keep) continue;
    out.tau.push_back(s.taus[i]);
    out.y.push_back(s.values[i]);
    out.sqrt_w.push_back(s.sigma ? 1.0 / (*s.sigma)[i] : 1.0);
  }
  return out;
}

using PointModel = std::function<double(const Eigen::VectorXd&, double)>;

ResidualFunction residual_function(const Subset& data, const PointModel& model) {
  return [&data, model](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(data.size()));
    try {
      for (std::size_t i = 0; i < data.size(); ++i) {
        r[static_cast<Eigen::Index>(i)] = (model(x, data.tau[i]) - data.y[i]) * data.sqrt_w[i];
      }
    } catch (const Error&) {
      r.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    return r;
  };
}

struct Problem {
  std::vector<std::string> names;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

Problem make_problem(const std::vector<std::string>& names, const FitConfig& config) {
  Problem p;
  p.names = names;
  p.lower.resize(static_cast<Eigen::Index>(names.size()));
  p.upper.resize(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const ParamBounds b = config.bound(names[i]);
    p.lower[static_cast<Eigen::Index>(i)] = b.lo;
    p.upper[static_cast<Eigen::Index>(i)] = b.hi;
  }
  return p;
}

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Problem& p) { return x.cwiseMax(p.lower).cwiseMin(p.upper); }

LeastSquaresOptions options_from(const FitConfig& config) {
  LeastSquaresOptions o;
  o.max_iterations = config.max_iterations;
  o.tolerance = config.convergence_tol;
  return o;
}

StageResult to_stage(const std::string& stage, const std::vector<std::string>& names, const LeastSquaresResult& r) {
  StageResult s;
  s.names = names;
  s.values = r.x;
  s.covariance = r.covariance;
  s.sigma = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.diagnostics.stage = stage;
  s.diagnostics.ok = true;
  s.diagnostics.converged = r.converged;
  s.diagnostics.iterations = r.iterations;
  s.diagnostics.residual_norm = std::sqrt(r.cost);
  return s;
}

[[noreturn]] void throw_unconverged(const std::string& stage, const std::vector<std::string>& names,
                                    const LeastSquaresResult& r) {
  std::ostringstream msg;
  msg << stage << " stage: no convergence after " << r.iterations << " iterations; best residual norm "
      << std::sqrt(r.cost) << " at";
  for (std::size_t i = 0; i < names.size(); ++i) msg << ' ' << names[i] << '=' << r.x[static_cast<Eigen::Index>(i)];
  throw ConvergenceError(msg.str());
}

bool has_all(const FitConfig& config, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (!config.initial_guess.count(n)) return false;
  }
  return true;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Swap two parameters (rows and columns of the covariance too).
void swap_entries(StageResult& s, Eigen::Index a, Eigen::Index b) {
  std::swap(s.values[a], s.values[b]);
  s.covariance.row(a).swap(s.covariance.row(b));
  s.covariance.col(a).swap(s.covariance.col(b));
  std::swap(s.sigma[a], s.sigma[b]);
}

double slow_model(const Eigen::VectorXd& x, double tau, bool amp) {
  const double f = slow_factor(tau, x[0], {x[1], x[2]}, x[3]);
  return amp ? x[4] * f : f;
}

double fast_model(const Eigen::VectorXd& x, double tau, const SlowFactorFunction& slow, bool amp) {
  const double g = 1.0 - (1.0 - g2(tau, x[0], x[1])) / (1.0 + x[2]);
  const double v = slow(tau) * g;
  return amp ? x[3] * v : v;
}

double isc_model(const Eigen::VectorXd& x, double tau, double A31, double Omega31, bool amp) {
  PhotoPhysicalParams p;
  p.A31 = A31;
  p.Omega31 = Omega31;
  p.A32 = {x[0], x[1]};
  p.A21 = {x[2], x[3]};
  const double f = slow_factor(tau, period_statistics(transition_rates(p)));
  return amp ? x[4] * f : f;
}

std::vector<std::string> with_amplitude(std::vector<std::string> names, const FitConfig& config) {
  if (config.free_amplitude) names.push_back("amplitude");
  return names;
}

}  // namespace

// ---------------------------------------------------------------- config

const std::vector<std::string>& FitConfig::known_names() {
  static const std::vector<std::string> names = {"T_L",   "T_D1",  "T_D2",  "p1",    "A31",       "Omega31",   "I_sc",
                                                 "A32_1", "A32_2", "A21_1", "A21_2", "amplitude", "I_sc_ratio"};
  return names;
}

ParamBounds FitConfig::bound(const std::string& name) const {
  if (auto it = bounds.find(name); it != bounds.end()) return it->second;
  auto d = default_bounds().find(name);
  if (d == default_bounds().end()) throw DomainError("no bounds for parameter '" + name + "'");
  return d->second;
}

void FitConfig::validate() const {
  if (!(split_tau > 0.0) || !std::isfinite(split_tau)) throw DomainError("fit config: split_tau must be > 0");
  if (max_iterations < 1) throw DomainError("fit config: max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) throw DomainError("fit config: convergence_tol must be > 0");
  if (bootstrap_resamples < 0) throw DomainError("fit config: bootstrap_resamples must be >= 0");
  if (threads < 0) throw DomainError("fit config: threads must be >= 0");
  const auto& known = known_names();
  auto is_known = [&](const std::string& n) { return std::find(known.begin(), known.end(), n) != known.end(); };
  for (const auto& [name, b] : bounds) {
    if (!is_known(name)) throw DomainError("fit config: unknown parameter '" + name + "' in bounds");
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo < 0.0 || !(b.lo < b.hi)) {
      throw DomainError("fit config: bounds for '" + name + "' must be finite with 0 <= lo < hi");
    }
  }
  for (const auto& [name, v] : initial_guess) {
    if (!is_known(name) || name == "I_sc_ratio") {
      throw DomainError("fit config: unknown parameter '" + name + "' in initial guess");
    }
    if (!std::isfinite(v) || v < 0.0) throw DomainError("fit config: guess for '" + name + "' must be finite and >= 0");
  }
}

FitConfig read_fit_config(std::istream& in) {
  const KeyValueText kv = KeyValueText::parse(in);
  FitConfig c;
  std::map<std::string, double> lower, upper;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "split_tau") {
      c.split_tau = parse_double(value, key);
    } else if (key == "max_iterations") {
      c.max_iterations = static_cast<int>(kv.get_int(key));
    } else if (key == "convergence_tol") {
      c.convergence_tol = parse_double(value, key);
    } else if (key == "bootstrap_resamples") {
      c.bootstrap_resamples = static_cast<int>(kv.get_int(key));
    } else if (key == "bootstrap_seed") {
      const long long s = kv.get_int(key);
      if (s < 0) throw ParseError("bootstrap_seed must be >= 0");
      c.bootstrap_seed = static_cast<std::uint64_t>(s);
    } else if (key == "threads") {
      c.threads = static_cast<int>(kv.get_int(key));
    } else if (key == "free_amplitude") {
      if (value == "true" || value == "1") {
        c.free_amplitude = true;
      } else if (value == "false" || value == "0") {
        c.free_amplitude = false;
      } else {
        throw ParseError("free_amplitude must be true/false");
      }
    } else if (key.rfind("guess.", 0) == 0) {
      c.initial_guess[key.substr(6)] = parse_double(value, key);
    } else if (key.rfind("lower.", 0) == 0) {
      lower[key.substr(6)] = parse_double(value, key);
    } else if (key.rfind("upper.", 0) == 0) {
      upper[key.substr(6)] = parse_double(value, key);
    } else {
      throw ParseError("unknown fit config key '" + key + "'");
    }
  }
  for (const auto& [name, lo] : lower) {
    if (!default_bounds().count(name)) throw ParseError("unknown parameter '" + name + "' in lower bound");
    ParamBounds b = c.bound(name);
    b.lo = lo;
    c.bounds[name] = b;
  }
  for (const auto& [name, hi] : upper) {
    if (!default_bounds().count(name)) throw ParseError("unknown parameter '" + name + "' in upper bound");
    ParamBounds b = c.bound(name);
    b.hi = hi;
    c.bounds[name] = b;
  }
  c.validate();
  return c;
}

FitConfig read_fit_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open fit config '" + path + "'");
  return read_fit_config(in);
}

double StageResult::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[static_cast<Eigen::Index>(i)];
  }
  throw DomainError("stage result has no parameter '" + name + "'");
}

double StageResult::sigma_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return sigma[static_cast<Eigen::Index>(i)];
  }
  throw DomainError("stage result has no parameter '" + name + "'");
}

// ---------------------------------------------------------------- slow stage

StageResult fit_slow(const CorrelationSeries& series, const FitConfig& config) {
  series.validate();
  config.validate();
  const Subset data = select(series, true, config.split_tau);
  if (data.size() < 10) throw InsufficientDataError("slow stage: fewer than 10 points above split_tau");
  const bool amp = config.free_amplitude;
  const std::vector<std::string> names = with_amplitude({"T_L", "T_D1", "T_D2", "p1"}, config);
  const Problem prob = make_problem(names, config);
  const PointModel model = [amp](const Eigen::VectorXd& x, double tau) { return slow_model(x, tau, amp); };
  const ResidualFunction res = residual_function(data, model);

  std::vector<Eigen::VectorXd> starts;
  const auto& g = config.initial_guess;
  const double amp0 = g.count("amplitude") ? g.at("amplitude")
                      : amp ? median(std::vector<double>(data.y.end() - std::min<std::size_t>(5, data.size()),
                                                         data.y.end()))
                            : 1.0;
  if (has_all(config, {"T_L", "T_D1", "T_D2", "p1"})) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(names.size()));
    x << g.at("T_L"), g.at("T_D1"), g.at("T_D2"), g.at("p1");
    if (amp) x[4] = amp0;
    starts.push_back(clamp(x, prob));
  } else {
    // Hump height and its half-decay delay set the scales of the starts.
    const double head = (data.y[0] + data.y[1] + data.y[2]) / 3.0 / amp0;
    const double contrast = head - 1.0;
    if (!(contrast > 0.0)) throw ConvergenceError("slow stage: no blinking contrast in the data");
    double tau_half = data.tau.back() / 3.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.y[i] / amp0 - 1.0 < 0.5 * contrast) {
        tau_half = data.tau[i];
        break;
      }
    }
    const double tc = tau_half / std::log(2.0);
    for (double f1 : {1.0, 3.0}) {
      for (double f2 : {0.1, 0.3}) {
        for (double p : {0.2, 0.6}) {
          const double td1 = tc * f1, td2 = tc * f2;
          Eigen::VectorXd x(static_cast<Eigen::Index>(names.size()));
          x << (p * td1 + (1.0 - p) * td2) / contrast, td1, td2, p;
          if (amp) x[4] = amp0;
          starts.push_back(clamp(x, prob));
        }
      }
    }
  }

  std::optional<LeastSquaresResult> best;
  for (const auto& x0 : starts) {
    LeastSquaresResult r;
    try {
      r = least_squares(res, x0, prob.lower, prob.upper, options_from(config));
    } catch (const DomainError&) {
      continue;  // model undefined at this start
    }
    const bool better = !best || (r.converged && !best->converged) ||
                        (r.converged == best->converged && r.cost < best->cost);
    if (better) best = r;
  }
  if (!best) throw ConvergenceError("slow stage: model not evaluable at any starting point");
  if (!best->converged) throw_unconverged("slow", names, *best);

  StageResult s = to_stage("slow", names, *best);
  if (s.values[1] < s.values[2]) {
    swap_entries(s, 1, 2);
    s.values[3] = 1.0 - s.values[3];
    s.covariance.row(3) *= -1.0;
    s.covariance.col(3) *= -1.0;
  }
  const PeriodStatistics st = period_statistics(rates_from_statistics(s.values[0], {s.values[1], s.values[2]}, s.values[3]));
  if (1.0 / st.P_L - 1.0 < 1e-6) throw ConvergenceError("slow stage: fitted blinking contrast vanishes; T_D unidentifiable");
  return s;
}

// ---------------------------------------------------------------- fast stage

StageResult fit_fast(const CorrelationSeries& series, const FitConfig& config, double plateau) {
  if (!(plateau > 0.0) || !std::isfinite(plateau)) throw DomainError("fast stage: plateau must be > 0");
  return fit_fast(series, config, [plateau](double) { return plateau; });
}

StageResult fit_fast(const CorrelationSeries& series, const FitConfig& config, const SlowFactorFunction& slow) {
  series.validate();
  config.validate();
  const Subset data = select(series, false, config.split_tau);
  if (data.size() < 10) throw InsufficientDataError("fast stage: fewer than 10 points below split_tau");
  const bool amp = config.free_amplitude;
  const std::vector<std::string> names = with_amplitude({"A31", "Omega31", "I_sc_ratio"}, config);
  const Problem prob = make_problem(names, config);
  const PointModel model = [amp, &slow](const Eigen::VectorXd& x, double tau) { return fast_model(x, tau, slow, amp); };
  const ResidualFunction res = residual_function(data, model);
  const auto& g = config.initial_guess;
  const double amp0 = g.count("amplitude") ? g.at("amplitude") : 1.0;

  // Starts: the configured guess, if any, and the best point of a coarse log
  // grid. A guess on the overdamped side can settle in the Omega31 -> 0 valley.
  std::vector<Eigen::VectorXd> starts;
  if (has_all(config, {"A31", "Omega31", "I_sc"})) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(names.size()));
    if (amp) x[3] = amp0;
    x[0] = g.at("A31");
    x[1] = g.at("Omega31");
    x[2] = g.at("I_sc") / light_intensity(x[0], x[1]);
    starts.push_back(clamp(x, prob));
  }
  {
    // Background ratio from the antibunching dip, then the two rates on the grid.
    Eigen::VectorXd trial(static_cast<Eigen::Index>(names.size()));
    if (amp) trial[3] = amp0;
    const double y0 = data.y[0] / (slow(data.tau[0]) * amp0);
    const double ratio = y0 < 0.999 ? std::max(y0, 0.0) / (1.0 - y0) : 1e3;
    const double lo = std::log10(std::max(prob.lower[0], 0.1 / config.split_tau));
    const double hi = std::log10(std::min(prob.upper[0], 10.0 / data.tau[0]));
    trial[2] = std::clamp(ratio, prob.lower[2], prob.upper[2]);
    Eigen::VectorXd best_start = clamp(trial, prob);
    double best_cost = std::numeric_limits<double>::infinity();
    const int steps = std::max(2, static_cast<int>(std::ceil((hi - lo) * 4.0)));
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps; ++j) {
        trial[0] = std::pow(10.0, lo + (hi - lo) * i / steps);
        trial[1] = std::pow(10.0, lo + (hi - lo) * j / steps);
        const double c = res(clamp(trial, prob)).squaredNorm();
        if (c < best_cost) {
          best_cost = c;
          best_start = clamp(trial, prob);
        }
      }
    }
    starts.push_back(best_start);
  }
  std::optional<LeastSquaresResult> best;
  for (const auto& x0 : starts) {
    const LeastSquaresResult r = least_squares(res, x0, prob.lower, prob.upper, options_from(config));
    const bool better = !best || (r.converged && !best->converged) ||
                        (r.converged == best->converged && r.cost < best->cost);
    if (better) best = r;
  }
  const LeastSquaresResult& r = *best;
  if (!r.converged) throw_unconverged("fast", names, r);
  StageResult s = to_stage("fast", names, r);

  // Report the background in photons per second: I_sc = ratio * I_L(A31, Omega31).
  const double A = s.values[0], W = s.values[1], ratio = s.values[2];
  const double IL = light_intensity(A, W);
  const double den = A * A + 2.0 * W * W;
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(s.values.size(), s.values.size());
  T(2, 0) = ratio * W * W * (2.0 * W * W - A * A) / (den * den);
  T(2, 1) = ratio * 2.0 * A * A * A * W / (den * den);
  T(2, 2) = IL;
  s.values[2] = ratio * IL;
  s.covariance = T * s.covariance * T.transpose();
  s.sigma = s.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.names[2] = "I_sc";
  return s;
}

// ---------------------------------------------------------------- isc stage

StageResult fit_isc(const CorrelationSeries& series, const FitConfig& config, const PhotoPhysicalParams& fast) {
  series.validate();
  config.validate();
  if (!(fast.A31 > 0.0) || !(fast.Omega31 > 0.0)) throw DomainError("isc stage: A31 and Omega31 must be > 0");
  const Subset data = select(series, true, config.split_tau);
  if (data.size() < 10) throw InsufficientDataError("isc stage: fewer than 10 points above split_tau");
  const bool amp = config.free_amplitude;
  const std::vector<std::string> names = with_amplitude({"A32_1", "A32_2", "A21_1", "A21_2"}, config);
  const Problem prob = make_problem(names, config);
  const double A31 = fast.A31, W = fast.Omega31;
  const PointModel model = [=](const Eigen::VectorXd& x, double tau) { return isc_model(x, tau, A31, W, amp); };
  const ResidualFunction res = residual_function(data, model);
  const auto& g = config.initial_guess;

  Eigen::VectorXd x0(static_cast<Eigen::Index>(names.size()));
  if (has_all(config, {"A32_1", "A32_2", "A21_1", "A21_2"})) {
    x0 << g.at("A32_1"), g.at("A32_2"), g.at("A21_1"), g.at("A21_2");
    if (amp) x0[4] = g.count("amplitude") ? g.at("amplitude") : 1.0;
  } else {
    // Invert the slow-stage durations and branching ratio into rates.
    const StageResult slow = fit_slow(series, config);
    const TransitionRates tr =
        rates_from_statistics(slow.get("T_L"), {slow.get("T_D1"), slow.get("T_D2")}, slow.get("p1"));
    const double saturation = W * W / (A31 * A31 + W * W);
    x0 << tr.p_LD[0] / saturation, tr.p_LD[1] / saturation, tr.p_DL[0], tr.p_DL[1];
    if (amp) x0[4] = slow.get("amplitude");
  }
  const LeastSquaresResult r = least_squares(res, clamp(x0, prob), prob.lower, prob.upper, options_from(config));
  if (!r.converged) throw_unconverged("isc", names, r);
  StageResult s = to_stage("isc", names, r);
  if (s.values[2] > s.values[3]) {
    swap_entries(s, 0, 1);
    swap_entries(s, 2, 3);
  }
  return s;
}

// ---------------------------------------------------------------- full fit

namespace {

struct Stages {
  std::optional<StageResult> slow, fast, isc;
  std::vector<StageDiagnostics> diagnostics;
};

StageDiagnostics failed(const std::string& stage, const std::string& why) {
  StageDiagnostics d;
  d.stage = stage;
  d.error = why;
  return d;
}

SlowFactorFunction slow_function(const StageResult& slow) {
  const Eigen::VectorXd x = slow.values;
  return [x](double tau) { return slow_model(x, tau, false); };
}

// Runs the three stages, recording failures instead of throwing.
Stages run_stages(const CorrelationSeries& series, const FitConfig& config) {
  Stages st;
  try {
    st.slow = fit_slow(series, config);
    st.diagnostics.push_back(st.slow->diagnostics);
  } catch (const Error& e) {
    st.diagnostics.push_back(failed("slow", e.what()));
  }
  if (st.slow) {
    try {
      // The fast stage multiplies by the shape of the slow factor; a free
      // amplitude is refitted there.
      FitConfig fc = config;
      if (config.free_amplitude && !fc.initial_guess.count("amplitude")) {
        fc.initial_guess["amplitude"] = st.slow->get("amplitude");
      }
      st.fast = fit_fast(series, fc, slow_function(*st.slow));
      st.diagnostics.push_back(st.fast->diagnostics);
    } catch (const Error& e) {
      st.diagnostics.push_back(failed("fast", e.what()));
    }
  } else {
    st.diagnostics.push_back(failed("fast", "skipped: slow stage failed"));
  }
  if (st.fast && st.slow) {
    try {
      FitConfig ic = config;
      PhotoPhysicalParams fp;
      fp.A31 = st.fast->get("A31");
      fp.Omega31 = st.fast->get("Omega31");
      if (!has_all(ic, {"A32_1", "A32_2", "A21_1", "A21_2"})) {
        const StageResult& s = *st.slow;
        const TransitionRates tr = rates_from_statistics(s.get("T_L"), {s.get("T_D1"), s.get("T_D2")}, s.get("p1"));
        const double sat = fp.Omega31 * fp.Omega31 / (fp.A31 * fp.A31 + fp.Omega31 * fp.Omega31);
        ic.initial_guess["A32_1"] = tr.p_LD[0] / sat;
        ic.initial_guess["A32_2"] = tr.p_LD[1] / sat;
        ic.initial_guess["A21_1"] = tr.p_DL[0];
        ic.initial_guess["A21_2"] = tr.p_DL[1];
        if (config.free_amplitude) ic.initial_guess["amplitude"] = s.get("amplitude");
      }
      st.isc = fit_isc(series, ic, fp);
      st.diagnostics.push_back(st.isc->diagnostics);
    } catch (const Error& e) {
      st.diagnostics.push_back(failed("isc", e.what()));
    }
  } else {
    st.diagnostics.push_back(failed("isc", "skipped: fast stage failed"));
  }
  return st;
}

// Stage-wise fitted curve: slow model above the split, fast model below.
std::function<double(double)> stage_curve(const Stages& st, const FitConfig& config) {
  const bool amp = config.free_amplitude;
  std::optional<Eigen::VectorXd> slow, fast;
  if (st.slow) slow = st.slow->values;
  if (st.fast) {
    Eigen::VectorXd x = st.fast->values;
    x[2] = x[2] / light_intensity(x[0], x[1]);  // back to the ratio
    fast = x;
  }
  const double split = config.split_tau;
  return [slow, fast, amp, split](double tau) {
    if (!slow) return std::numeric_limits<double>::quiet_NaN();
    if (tau < split) {
      if (!fast) return std::numeric_limits<double>::quiet_NaN();
      const Eigen::VectorXd xs = *slow;
      return fast_model(*fast, tau, [&xs](double t) { return slow_model(xs, t, false); }, amp);
    }
    return slow_model(*slow, tau, amp);
  };
}

// Collects every reported quantity of a complete run.
std::map<std::string, double> collect(const Stages& st) {
  std::map<std::string, double> out;
  for (const auto* s : {&st.slow, &st.fast, &st.isc}) {
    if (!*s) continue;
    for (std::size_t i = 0; i < (*s)->names.size(); ++i) {
      const std::string& n = (*s)->names[i];
      if (n == "amplitude" && out.count(n)) continue;  // keep the slow-stage amplitude
      out[n] = (*s)->values[static_cast<Eigen::Index>(i)];
    }
  }
  return out;
}

std::map<std::string, double> collect_sigma(const Stages& st) {
  std::map<std::string, double> out;
  for (const auto* s : {&st.slow, &st.fast, &st.isc}) {
    if (!*s) continue;
    for (std::size_t i = 0; i < (*s)->names.size(); ++i) {
      const std::string& n = (*s)->names[i];
      if (n == "amplitude" && out.count(n)) continue;
      out[n] = (*s)->sigma[static_cast<Eigen::Index>(i)];
    }
  }
  return out;
}

std::size_t draw_index(StreamRng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

}  // namespace

FitResult fit_full(const CorrelationSeries& series, const FitConfig& config) {
  series.validate();
  config.validate();
  const Stages st = run_stages(series, config);

  FitResult out;
  out.stages = st.diagnostics;
  out.complete = st.slow && st.fast && st.isc;
  out.curve = stage_curve(st, config);

  const auto values = collect(st);
  const auto jac = collect_sigma(st);
  for (const auto& [name, v] : values) {
    Estimate e;
    e.value = v;
    e.jacobian_sigma = jac.at(name);
    e.sigma = e.jacobian_sigma;
    out.estimates[name] = e;
  }
  if (st.slow) {
    const StageResult& s = *st.slow;
    out.stats = period_statistics(rates_from_statistics(s.get("T_L"), {s.get("T_D1"), s.get("T_D2")}, s.get("p1")));
    if (config.free_amplitude) out.amplitude = s.get("amplitude");
  }
  if (st.fast) {
    out.params.A31 = st.fast->get("A31");
    out.params.Omega31 = st.fast->get("Omega31");
    out.params.I_sc = st.fast->get("I_sc");
  }
  if (st.isc) {
    out.params.A32 = {st.isc->get("A32_1"), st.isc->get("A32_2")};
    out.params.A21 = {st.isc->get("A21_1"), st.isc->get("A21_2")};
  }

  // Fitted values and standardized residuals on the points the stages used.
  std::vector<double> fitted(series.size()), scaled(series.size());
  std::vector<std::size_t> fast_idx, slow_idx;
  double ss = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double tau = series.taus[i];
    const double w = series.sigma ? 1.0 / (*series.sigma)[i] : 1.0;
    fitted[i] = out.curve(tau);
    scaled[i] = (series.values[i] - fitted[i]) * w;
    if (tau < config.split_tau) fast_idx.push_back(i);
    if (tau > config.split_tau) slow_idx.push_back(i);
    if (std::isfinite(scaled[i])) ss += scaled[i] * scaled[i];
  }
  out.residual_norm = std::sqrt(ss);

  if (!out.complete || config.bootstrap_resamples == 0) return out;

  // Residual bootstrap: resample standardized residuals within each regime,
  // refit starting from the point estimate.
  FitConfig rc = config;
  for (const auto& [name, v] : values) rc.initial_guess[name] = v;
  const int nres = config.bootstrap_resamples;
  std::vector<std::optional<std::map<std::string, double>>> draws(static_cast<std::size_t>(nres));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int k = next++; k < nres; k = next++) {
      StreamRng rng(config.bootstrap_seed, static_cast<std::uint64_t>(k));
      CorrelationSeries boot = series;
      for (const auto* idx : {&fast_idx, &slow_idx}) {
        for (std::size_t i : *idx) {
          const std::size_t j = (*idx)[draw_index(rng, idx->size())];
          const double w = series.sigma ? 1.0 / (*series.sigma)[i] : 1.0;
          boot.values[i] = fitted[i] + scaled[j] / w;
        }
      }
      const Stages bs = run_stages(boot, rc);
      if (bs.slow && bs.fast && bs.isc) draws[static_cast<std::size_t>(k)] = collect(bs);
    }
  };
  int nthreads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::clamp(nthreads, 1, nres);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int used = 0;
  std::map<std::string, std::pair<double, double>> acc;  // sum, sum of squares
  for (const auto& d : draws) {
    if (!d) continue;
    ++used;
    for (const auto& [name, v] : *d) {
      auto& a = acc[name];
      a.first += v;
      a.second += v * v;
    }
  }
  out.bootstrap_used = used;
  if (used >= 2) {
    for (auto& [name, e] : out.estimates) {
      const auto& a = acc[name];
      const double mean = a.first / used;
      const double var = std::max(0.0, (a.second - used * mean * mean) / (used - 1));
      e.sigma = std::sqrt(var);
    }
  }
  return out;
}

std::string fit_report(const FitResult& result) {
  static const std::vector<std::string> order = {"T_L",   "T_D1",  "T_D2",  "p1",    "A31",      "Omega31",
                                                 "I_sc",  "A32_1", "A32_2", "A21_1", "A21_2", "amplitude"};
  std::string out;
  char line[256];
  for (const auto& name : order) {
    auto it = result.estimates.find(name);
    if (it == result.estimates.end()) continue;
    std::snprintf(line, sizeof line, "%s = %.6g ± %.2g\n", name.c_str(), it->second.value, it->second.sigma);
    out += line;
  }
  return out;
}

}  // namespace blink
