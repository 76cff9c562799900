#pragma once

// Run configuration: built-in per-dataset presets, a sectioned key = value
// file, and command-line overrides, in increasing precedence. The resolved
// config is written back out as a manifest with every value explicit.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "akgan/training.hpp"

namespace akgan {

/// Flat view of a config file: "section.key" -> raw value (quotes removed).
using ConfigValues = std::map<std::string, std::string>;

struct RunConfig {
  std::string preset = "alibaba-ifashion";
  std::filesystem::path data_dir;
  std::filesystem::path kg_path;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path out_dir;
  std::size_t item_count = 0;  // 0 infers from the interaction files
  TrainConfig train;

  /// Paths with data_dir defaults filled in.
  std::filesystem::path kg() const;
  std::filesystem::path train_file() const;
  std::filesystem::path test_file() const;
};

/// Names of the built-in presets.
std::vector<std::string> preset_names();

/// TrainConfig with a preset's hyperparameters. Throws ConfigError.
TrainConfig preset_config(const std::string& name);

/// Parses "[section]" headers, "key = value" lines and "#" comments.
/// Throws ConfigError with origin:line on malformed input.
ConfigValues parse_config(const std::string& text, const std::string& origin = "<config>");
ConfigValues read_config_file(const std::filesystem::path& path);

/// Applies values onto cfg. A "run.preset" entry resets the training
/// hyperparameters to that preset before the other keys are applied.
/// Unknown keys and unparsable values throw ConfigError.
void apply_config(RunConfig& cfg, const ConfigValues& values);

/// Every key, always present, in a form parse_config reads back exactly.
std::string manifest_text(const RunConfig& cfg);
void write_manifest(const std::filesystem::path& path, const RunConfig& cfg);

/// Defaults < preset < file < overrides.
RunConfig resolve_config(const std::filesystem::path& config_file, const ConfigValues& overrides);

}  // namespace akgan
