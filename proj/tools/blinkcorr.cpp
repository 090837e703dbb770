// blinkcorr: evaluate, simulate, estimate and fit blinking intensity
// correlation functions.
//
// Exit codes: 0 success, 1 numerical failure, 2 input or usage error.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "blink/correlation.hpp"
#include "blink/errors.hpp"
#include "blink/fitting.hpp"
#include "blink/kv_text.hpp"
#include "blink/liouvillian.hpp"
#include "blink/markov.hpp"
#include "blink/params.hpp"
#include "blink/simulator.hpp"
#include "manifest.hpp"
#include "selftest.hpp"

namespace {

using blinkcorr::RunManifest;

struct GridSpec {
  double tau_min = 0.0;
  double tau_max = 0.0;
  double per_decade = 0.0;
};

GridSpec parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(blink::parse_double(item, "--grid"));
  if (parts.size() != 3) throw blink::ParseError("--grid expects min,max,points_per_decade");
  return {parts[0], parts[1], parts[2]};
}

std::vector<double> make_grid(const GridSpec& g) { return blink::log_grid(g.tau_min, g.tau_max, g.per_decade); }

void snapshot_params(RunManifest& m, const blink::PhotoPhysicalParams& p) {
  std::istringstream in(blink::params_to_text(p));
  const blink::KeyValueText kv = blink::KeyValueText::parse(in);
  for (const auto& [k, v] : kv.entries()) m.parameters[k] = v;
}

RunManifest start_manifest(const std::string& sub, int argc, char** argv) {
  RunManifest m;
  m.subcommand = sub;
  for (int i = 0; i < argc; ++i) m.argv.emplace_back(argv[i]);
  return m;
}

void warn_hierarchy(const blink::PhotoPhysicalParams& p) {
  for (const auto& w : p.hierarchy_warnings()) fmt::print(stderr, "warning: {}\n", w);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string params, chain, out, grid = "1e-10,1,60";
};

int cmd_eval(const EvalArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("eval", argc, argv);
  const GridSpec gs = parse_grid(a.grid);
  const std::vector<double> grid = make_grid(gs);
  m.parameters["grid"] = a.grid;
  blink::CorrelationSeries series;
  if (!a.chain.empty()) {
    const blink::PeriodChain chain = blink::read_chain_file(a.chain);
    m.inputs["chain"] = a.chain;
    std::vector<blink::PeriodCorrelation> g(chain.size(), [](double) { return 1.0; });
    if (!a.params.empty()) {
      // Bright periods share the two-level correlation of the parameter set.
      const blink::PhotoPhysicalParams p = blink::read_params_file(a.params);
      m.inputs["params"] = a.params;
      snapshot_params(m, p);
      for (std::size_t i = 0; i < chain.size(); ++i) {
        if (chain.intensities[i] > 0.0) g[i] = [p](double t) { return blink::g2_mod(t, p); };
      }
    }
    series.taus = grid;
    for (double tau : grid) series.values.push_back(blink::g_general(tau, chain, g));
  } else {
    if (a.params.empty()) throw blink::ParseError("eval needs --params or --chain");
    const blink::PhotoPhysicalParams p = blink::read_params_file(a.params);
    m.inputs["params"] = a.params;
    snapshot_params(m, p);
    warn_hierarchy(p);
    series = blink::eval_curve(grid, p);
  }
  blink::write_file_atomic(a.out, blink::series_to_csv(series));
  m.outputs["curve"] = a.out;
  m.write_all();
  return 0;
}

// ---------------------------------------------------------------- rates

struct RatesArgs {
  std::string params, out, format = "text";
};

int cmd_rates(const RatesArgs& a, int argc, char** argv) {
  const blink::PhotoPhysicalParams p = blink::read_params_file(a.params);
  warn_hierarchy(p);
  const blink::TransitionRates closed = blink::transition_rates(p);
  const blink::TransitionRates resolvent = blink::perturbative_rates(p, blink::RateMethod::ClosedResolvent);
  const blink::TransitionRates finite = blink::perturbative_rates(p, blink::RateMethod::FiniteStep);

  auto rel = [](double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
  };
  struct Row {
    std::string name;
    double closed, resolvent, finite;
  };
  const std::vector<Row> rows = {
      {"p_LD_1", closed.p_LD[0], resolvent.p_LD[0], finite.p_LD[0]},
      {"p_LD_2", closed.p_LD[1], resolvent.p_LD[1], finite.p_LD[1]},
      {"p_DL_1", closed.p_DL[0], resolvent.p_DL[0], finite.p_DL[0]},
      {"p_DL_2", closed.p_DL[1], resolvent.p_DL[1], finite.p_DL[1]},
  };
  std::string report;
  double worst = 0.0;
  if (a.format == "kv") {
    blink::KeyValueText kv;
    for (const auto& r : rows) {
      const double dev = std::max(rel(r.closed, r.resolvent), rel(r.closed, r.finite));
      worst = std::max(worst, dev);
      kv.set(r.name + ".closed_form", r.closed);
      kv.set(r.name + ".resolvent", r.resolvent);
      kv.set(r.name + ".finite_step", r.finite);
      kv.set(r.name + ".max_rel_dev", dev);
    }
    kv.set("max_rel_dev", worst);
    report = kv.to_string();
  } else {
    report = fmt::format("{:<8} {:>14} {:>14} {:>14} {:>12} {:>12}\n", "rate", "closed form", "resolvent",
                         "finite step", "rel dev res", "rel dev fin");
    for (const auto& r : rows) {
      const double d1 = rel(r.closed, r.resolvent), d2 = rel(r.closed, r.finite);
      worst = std::max({worst, d1, d2});
      report += fmt::format("{:<8} {:>14.6e} {:>14.6e} {:>14.6e} {:>12.3e} {:>12.3e}\n", r.name, r.closed,
                            r.resolvent, r.finite, d1, d2);
    }
    report += fmt::format("max relative deviation {:.3e}\n", worst);
  }
  std::cout << report;
  if (!a.out.empty()) {
    RunManifest m = start_manifest("rates", argc, argv);
    m.inputs["params"] = a.params;
    snapshot_params(m, p);
    m.parameters["format"] = a.format;
    blink::write_file_atomic(a.out, report);
    m.outputs["report"] = a.out;
    m.write_all();
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string params, out, g_out, grid, background = "whole";
  double duration = 0.0;
  std::uint64_t seed = 0;
};

std::vector<double> estimator_grid_for(const std::string& spec, double duration) {
  if (!spec.empty()) return make_grid(parse_grid(spec));
  return blink::estimator_grid(1e-9, duration * 0.1);
}

int cmd_simulate(const SimulateArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("simulate", argc, argv);
  const blink::PhotoPhysicalParams p = blink::read_params_file(a.params);
  m.inputs["params"] = a.params;
  snapshot_params(m, p);
  if (!(a.duration > 0.0) || !std::isfinite(a.duration)) throw blink::DomainError("--duration must be > 0");
  blink::Background mode;
  if (a.background == "whole") {
    mode = blink::Background::WholeTrace;
  } else if (a.background == "light") {
    mode = blink::Background::LightOnly;
  } else {
    throw blink::ParseError("--background must be 'whole' or 'light'");
  }
  m.parameters["duration"] = blink::format_double(a.duration);
  m.parameters["background"] = a.background;
  m.seeds["simulation"] = a.seed;
  // Validate the estimator grid before the (possibly long) simulation.
  std::vector<double> grid;
  if (!a.g_out.empty()) grid = estimator_grid_for(a.grid, a.duration);

  const blink::Trajectory traj = blink::simulate(p, a.duration, a.seed, mode);
  blink::write_file_atomic(a.out, blink::trajectory_to_text(traj));
  m.outputs["trajectory"] = a.out;
  if (!a.g_out.empty()) {
    m.parameters["grid"] = a.grid.empty() ? "default" : a.grid;
    blink::write_file_atomic(a.g_out, blink::series_to_csv(blink::estimate_g(traj, grid)));
    m.outputs["g"] = a.g_out;
  }
  m.write_all();
  fmt::print("{} photons in {} s\n", traj.arrival_times.size(), a.duration);
  return 0;
}

// ---------------------------------------------------------------- estimate-g

struct EstimateArgs {
  std::string trajectory, out, grid;
  int blocks = 20;
};

int cmd_estimate(const EstimateArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("estimate-g", argc, argv);
  const blink::Trajectory traj = blink::read_trajectory_file(a.trajectory);
  m.inputs["trajectory"] = a.trajectory;
  m.seeds["trajectory"] = traj.seed;
  if (a.blocks < 1) throw blink::DomainError("--blocks must be >= 1");
  blink::EstimatorOptions opt;
  opt.blocks = static_cast<std::size_t>(a.blocks);
  m.parameters["grid"] = a.grid.empty() ? "default" : a.grid;
  m.parameters["blocks"] = std::to_string(a.blocks);
  const auto series = blink::estimate_g(traj, estimator_grid_for(a.grid, traj.duration), opt);
  blink::write_file_atomic(a.out, blink::series_to_csv(series));
  m.outputs["g"] = a.out;
  m.write_all();
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string data, config, out, json, curve_out;
  std::optional<std::uint64_t> seed;
};

std::string fit_json(const blink::FitResult& r) {
  nlohmann::ordered_json j;
  j["complete"] = r.complete;
  j["residual_norm"] = r.residual_norm;
  j["bootstrap_used"] = r.bootstrap_used;
  for (const auto& [name, e] : r.estimates) {
    j["estimates"][name] = {{"value", e.value}, {"sigma", e.sigma}, {"jacobian_sigma", e.jacobian_sigma}};
  }
  for (const auto& s : r.stages) {
    j["stages"].push_back({{"stage", s.stage},
                           {"ok", s.ok},
                           {"converged", s.converged},
                           {"iterations", s.iterations},
                           {"residual_norm", s.residual_norm},
                           {"error", s.error}});
  }
  if (r.estimates.count("T_L")) {
    j["stats"] = {{"T_L", r.stats.T_L}, {"T_D1", r.stats.T_D[0]}, {"T_D2", r.stats.T_D[1]},
                  {"p1", r.stats.p1},   {"P_L", r.stats.P_L},     {"Gamma", r.stats.Gamma}};
  }
  return j.dump(2) + "\n";
}

int cmd_fit(const FitArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("fit", argc, argv);
  const blink::CorrelationSeries series = blink::read_series_csv_file(a.data);
  m.inputs["data"] = a.data;
  blink::FitConfig config;
  bool config_seed = false;
  if (!a.config.empty()) {
    config = blink::read_fit_config_file(a.config);
    config_seed = blink::KeyValueText::parse_file(a.config).contains("bootstrap_seed");
    m.inputs["config"] = a.config;
  }
  if (a.seed) {
    config.bootstrap_seed = *a.seed;
  } else if (config.bootstrap_resamples > 0 && !config_seed) {
    throw blink::ParseError("bootstrap resampling needs --seed (or bootstrap_seed in the config)");
  }
  if (config.bootstrap_resamples > 0) m.seeds["bootstrap"] = config.bootstrap_seed;
  m.parameters["split_tau"] = blink::format_double(config.split_tau);
  m.parameters["bootstrap_resamples"] = std::to_string(config.bootstrap_resamples);
  m.parameters["free_amplitude"] = config.free_amplitude ? "true" : "false";

  const blink::FitResult result = blink::fit_full(series, config);
  std::string report = blink::fit_report(result);
  report += fmt::format("residual_norm = {:.6g}\n", result.residual_norm);
  for (const auto& s : result.stages) {
    if (s.ok) {
      report += fmt::format("# stage {}: ok, {} iterations\n", s.stage, s.iterations);
    } else {
      report += fmt::format("# stage {}: FAILED: {}\n", s.stage, s.error);
    }
  }
  std::cout << report;
  blink::write_file_atomic(a.out, report);
  m.outputs["report"] = a.out;
  if (!a.json.empty()) {
    blink::write_file_atomic(a.json, fit_json(result));
    m.outputs["json"] = a.json;
  }
  if (!a.curve_out.empty()) {
    blink::CorrelationSeries curve;
    for (double tau : series.taus) {
      const double v = result.curve(tau);
      if (!std::isfinite(v)) continue;
      curve.taus.push_back(tau);
      curve.values.push_back(v);
    }
    blink::write_file_atomic(a.curve_out, blink::series_to_csv(curve));
    m.outputs["curve"] = a.curve_out;
  }
  m.write_all();
  return result.complete ? 0 : 1;
}

// ---------------------------------------------------------------- selftest

int cmd_selftest(double tolerance_scale) {
  const auto rows = blinkcorr::run_selftest(tolerance_scale);
  std::cout << blinkcorr::format_selftest(rows);
  for (const auto& r : rows) {
    if (!r.pass()) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blinking fluorescence intensity correlation toolkit"};
  app.set_version_flag("--version", blinkcorr::kToolVersion);
  app.require_subcommand(1);

  EvalArgs eval;
  auto* sub_eval = app.add_subcommand("eval", "Evaluate g(tau) on a log grid");
  sub_eval->add_option("--params", eval.params, "Parameter file")->check(CLI::ExistingFile);
  sub_eval->add_option("--chain", eval.chain, "n-period chain file")->check(CLI::ExistingFile);
  sub_eval->add_option("--grid", eval.grid, "min,max,points_per_decade")->capture_default_str();
  sub_eval->add_option("--out", eval.out, "Output CSV")->required();

  RatesArgs rates;
  auto* sub_rates = app.add_subcommand("rates", "Closed-form vs perturbative transition rates");
  sub_rates->add_option("--params", rates.params, "Parameter file")->required()->check(CLI::ExistingFile);
  sub_rates->add_option("--format", rates.format, "text or kv")
      ->check(CLI::IsMember({"text", "kv"}))
      ->capture_default_str();
  sub_rates->add_option("--out", rates.out, "Also write the report here");

  SimulateArgs sim;
  auto* sub_sim = app.add_subcommand("simulate", "Simulate a photon arrival trajectory");
  sub_sim->add_option("--params", sim.params, "Parameter file")->required()->check(CLI::ExistingFile);
  sub_sim->add_option("--duration", sim.duration, "Duration in seconds")->required();
  sub_sim->add_option("--seed", sim.seed, "RNG seed")->required();
  sub_sim->add_option("--out", sim.out, "Trajectory output")->required();
  sub_sim->add_option("--g-out", sim.g_out, "Also estimate g(tau) into this CSV");
  sub_sim->add_option("--grid", sim.grid, "Estimator grid min,max,points_per_decade");
  sub_sim->add_option("--background", sim.background, "whole or light")->capture_default_str();

  EstimateArgs est;
  auto* sub_est = app.add_subcommand("estimate-g", "Estimate g(tau) from a trajectory file");
  sub_est->add_option("--trajectory", est.trajectory, "Trajectory file")->required()->check(CLI::ExistingFile);
  sub_est->add_option("--out", est.out, "Output CSV")->required();
  sub_est->add_option("--grid", est.grid, "min,max,points_per_decade");
  sub_est->add_option("--blocks", est.blocks, "Time blocks for the error estimate")->capture_default_str();

  FitArgs fit;
  auto* sub_fit = app.add_subcommand("fit", "Fit a measured correlation curve");
  sub_fit->add_option("--data", fit.data, "Correlation CSV")->required()->check(CLI::ExistingFile);
  sub_fit->add_option("--config", fit.config, "Fit configuration")->check(CLI::ExistingFile);
  sub_fit->add_option("--out", fit.out, "Report output")->required();
  sub_fit->add_option("--json", fit.json, "Machine-readable result");
  sub_fit->add_option("--curve-out", fit.curve_out, "Fitted curve CSV");
  sub_fit->add_option("--seed", fit.seed, "Bootstrap seed");

  double tolerance_scale = 1.0;
  auto* sub_self = app.add_subcommand("selftest", "Cross-module consistency checks");
  sub_self->add_option("--perturb-tolerance", tolerance_scale, "Multiply every tolerance (debugging)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sub_eval) return cmd_eval(eval, argc, argv);
    if (*sub_rates) return cmd_rates(rates, argc, argv);
    if (*sub_sim) return cmd_simulate(sim, argc, argv);
    if (*sub_est) return cmd_estimate(est, argc, argv);
    if (*sub_fit) return cmd_fit(fit, argc, argv);
    if (*sub_self) return cmd_selftest(tolerance_scale);
  } catch (const blink::InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const blink::NumericalError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}
