#pragma once

// JSON experiment configuration, presets and dotted-key overrides.
//
// Resolution order: preset (default config1), then the document's sections,
// then --override KEY=VALUE pairs in command-line order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "duon/sim_engine.hpp"
#include "duon/workload.hpp"

namespace duon {

// Field-level diagnostic; `field` is the dotted key, e.g. latencies.fast_read.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& why)
      : std::invalid_argument(field + ": " + why), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  std::string preset = "config1";
  SimConfig sim;
  // Either a trace file or an inline generator spec.
  std::optional<std::filesystem::path> trace_path;
  TraceSpec trace;
  std::filesystem::path output_dir = "out";
};

const std::vector<std::string>& preset_names();
// Throws ConfigError("preset", ...) for an unknown name.
ExperimentConfig preset(const std::string& name);

// Accepts a plain integer or an integer with a K/M/G/KiB/MiB/GiB suffix
// (all binary). Throws std::invalid_argument.
std::uint64_t parse_size(const std::string& text);

using Json = nlohmann::ordered_json;

// Sets a dotted key in `doc`, creating objects on the way. The value is read
// as JSON when it parses as JSON, as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

// Throws ConfigError. Relative trace paths resolve against `base_dir`.
ExperimentConfig parse_config(const Json& doc,
                              const std::filesystem::path& base_dir = {});
Json load_json(const std::filesystem::path& path);

// Full resolved configuration as a JSON document (the schema's shape).
Json to_json(const ExperimentConfig& cfg);

CoreTraces load_traces(const ExperimentConfig& cfg);

}  // namespace duon
