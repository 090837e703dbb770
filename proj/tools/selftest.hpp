#pragma once

#include <string>
#include <vector>

namespace blinkcorr {

struct SelftestRow {
  std::string check;
  double deviation = 0.0;  ///< worst relative deviation found
  double tolerance = 0.0;
  bool pass() const { return deviation <= tolerance; }
};

/// Cross-module equivalences. Tolerances are multiplied by tolerance_scale
/// (1 for a normal run).
std::vector<SelftestRow> run_selftest(double tolerance_scale);

std::string format_selftest(const std::vector<SelftestRow>& rows);

}  // namespace blinkcorr
