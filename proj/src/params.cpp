#include "blink/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "blink/errors.hpp"
#include "blink/kv_text.hpp"

namespace blink {

namespace {

void require_rate(double value, const char* name) {
  if (!std::isfinite(value) || value < 0.0) {
    throw DomainError(std::string(name) + " must be finite and >= 0");
  }
}

constexpr std::array<const char*, 7> kParamKeys = {"A31", "Omega31", "A32_1", "A32_2",
                                                   "A21_1", "A21_2", "I_sc"};

}  // namespace

void PhotoPhysicalParams::validate() const {
  require_rate(A31, "A31");
  require_rate(Omega31, "Omega31");
  require_rate(A32[0], "A32_1");
  require_rate(A32[1], "A32_2");
  require_rate(A21[0], "A21_1");
  require_rate(A21[1], "A21_2");
  require_rate(I_sc, "I_sc");
}

std::vector<std::string> PhotoPhysicalParams::hierarchy_warnings() const {
  std::vector<std::string> out;
  const double fast = std::min(A31, Omega31);
  const double limit = 1e-2 * fast;
  auto check = [&](double v, const char* name) {
    if (v >= limit) {
      std::ostringstream os;
      os << name << " = " << v << " is not small against min(A31, Omega31) = " << fast;
      out.push_back(os.str());
    }
  };
  check(A32[0], "A32_1");
  check(A32[1], "A32_2");
  check(A21[0], "A21_1");
  check(A21[1], "A21_2");
  return out;
}

PhotoPhysicalParams PhotoPhysicalParams::swapped_dark_labels() const {
  PhotoPhysicalParams p = *this;
  std::swap(p.A32[0], p.A32[1]);
  std::swap(p.A21[0], p.A21[1]);
  return p;
}

double PeriodStatistics::P_L_explicit() const {
  const double denom = p_LD[0] * p_DL[1] + p_DL[0] * p_LD[1] + p_DL[0] * p_DL[1];
  return p_DL[0] * p_DL[1] / denom;
}

double light_intensity(double A31, double Omega31) {
  if (A31 == 0.0 && Omega31 == 0.0) throw DegenerateError("light_intensity: A31 = Omega31 = 0");
  const double om2 = Omega31 * Omega31;
  return A31 * om2 / (A31 * A31 + 2.0 * om2);
}

double light_intensity(const PhotoPhysicalParams& params) {
  return light_intensity(params.A31, params.Omega31);
}

TransitionRates transition_rates(const PhotoPhysicalParams& params) {
  params.validate();
  const double om2 = params.Omega31 * params.Omega31;
  const double denom = params.A31 * params.A31 + om2;
  if (denom == 0.0) throw DegenerateError("transition_rates: A31 = Omega31 = 0");
  const double saturation = om2 / denom;
  TransitionRates r;
  for (int i = 0; i < 2; ++i) {
    r.p_DL[i] = params.A21[i];
    r.p_LD[i] = params.A32[i] * saturation;
  }
  return r;
}

PeriodStatistics period_statistics(const TransitionRates& rates) {
  for (int i = 0; i < 2; ++i) {
    require_rate(rates.p_LD[i], "p_LD");
    require_rate(rates.p_DL[i], "p_DL");
    if (rates.p_DL[i] == 0.0) {
      throw DegenerateError("period_statistics: p_DL must be > 0 (infinite dark period)");
    }
  }
  const auto& ld = rates.p_LD;
  const auto& dl = rates.p_DL;

  PeriodStatistics s;
  s.p_LD = ld;
  s.p_DL = dl;
  const double ld_total = ld[0] + ld[1];
  if (ld_total > 0.0) {
    s.T_L = 1.0 / ld_total;
    s.p1 = ld[0] / ld_total;
    s.p2 = ld[1] / ld_total;
  } else {
    s.T_L = std::numeric_limits<double>::infinity();
  }
  s.T_D = {1.0 / dl[0], 1.0 / dl[1]};

  // mu are the roots of mu^2 + sum*mu + product = 0. The larger-magnitude root
  // comes from the discriminant; the other one from the product.
  const double sum = ld[0] + ld[1] + dl[0] + dl[1];
  const double diff = dl[0] + ld[0] - ld[1] - dl[1];
  const double product = ld[0] * dl[1] + dl[0] * ld[1] + dl[0] * dl[1];
  s.Gamma = 0.5 * std::sqrt(diff * diff + 4.0 * ld[0] * ld[1]);
  s.mu2 = -0.5 * sum - s.Gamma;
  s.mu1 = product / s.mu2;
  s.P_L = dl[0] * dl[1] / (s.mu1 * s.mu2);
  return s;
}

TransitionRates rates_from_statistics(double T_L, const RatePair& T_D, double p1) {
  if (!(T_L > 0.0) || !(T_D[0] > 0.0) || !(T_D[1] > 0.0)) {
    throw DomainError("rates_from_statistics: durations must be > 0");
  }
  if (!(p1 >= 0.0 && p1 <= 1.0)) throw DomainError("rates_from_statistics: p1 must lie in [0, 1]");
  TransitionRates r;
  r.p_LD = {p1 / T_L, (1.0 - p1) / T_L};
  r.p_DL = {1.0 / T_D[0], 1.0 / T_D[1]};
  return r;
}

PhotoPhysicalParams read_params(std::istream& in) {
  const KeyValueText kv = KeyValueText::parse(in);
  const std::set<std::string> allowed(kParamKeys.begin(), kParamKeys.end());
  for (const auto& [k, v] : kv.entries()) {
    if (!allowed.count(k)) throw ParseError("unknown parameter key '" + k + "'");
  }
  PhotoPhysicalParams p;
  p.A31 = kv.get_double("A31");
  p.Omega31 = kv.get_double("Omega31");
  p.A32 = {kv.get_double("A32_1"), kv.get_double("A32_2")};
  p.A21 = {kv.get_double("A21_1"), kv.get_double("A21_2")};
  p.I_sc = kv.get_double("I_sc");
  p.validate();
  return p;
}

PhotoPhysicalParams read_params_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open parameter file '" + path + "'");
  return read_params(in);
}

std::string params_to_text(const PhotoPhysicalParams& p) {
  KeyValueText kv;
  kv.set("A31", p.A31);
  kv.set("Omega31", p.Omega31);
  kv.set("A32_1", p.A32[0]);
  kv.set("A32_2", p.A32[1]);
  kv.set("A21_1", p.A21[0]);
  kv.set("A21_2", p.A21[1]);
  kv.set("I_sc", p.I_sc);
  return kv.to_string();
}

}  // namespace blink
