#include "manifest.hpp"

#include <json.hpp>

#include "blink/kv_text.hpp"

namespace blinkcorr {

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["argv"] = argv;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["parameters"] = parameters;
  j["seeds"] = seeds;
  return j.dump(2) + "\n";
}

void RunManifest::write_all() const {
  const std::string text = to_json();
  for (const auto& [role, path] : outputs) blink::write_file_atomic(path + ".manifest.json", text);
}

}  // namespace blinkcorr
