#pragma once

// Checkpoint text format:
//
//   raap-checkpoint 1
//   config <key> <value>          (one line per ModelConfig field)
//   param <name> <rows> <cols> <v0> <v1> ...
//
// Values are shortest round-trip decimals; a load reproduces every parameter bitwise.

#include <filesystem>
#include <map>
#include <string>

#include "raap/model.hpp"

namespace raap {

/// ModelConfig as ordered key/value strings and back. Unknown keys raise ConfigError.
std::map<std::string, std::string> model_config_fields(const ModelConfig& config);
void set_model_config_field(ModelConfig& config, std::string_view key, std::string_view value);

void save_checkpoint(const AlignmentModel& model, const std::filesystem::path& path);
/// Throws ParseError for malformed files and SchemaError when parameter
/// names or shapes disagree with the stored config.
AlignmentModel load_checkpoint(const std::filesystem::path& path);

}  // namespace raap
