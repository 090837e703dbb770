#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace blinkcorr {

inline constexpr const char* kToolVersion = "blinkcorr 1.0.0";

/// Record written next to every output file, `<output>.manifest.json`.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> argv;
  std::map<std::string, std::string> inputs;   ///< role -> path
  std::map<std::string, std::string> outputs;  ///< role -> path
  std::map<std::string, std::string> parameters;
  std::map<std::string, std::uint64_t> seeds;

  std::string to_json() const;
  /// Writes the manifest for every output path.
  void write_all() const;
};

}  // namespace blinkcorr
