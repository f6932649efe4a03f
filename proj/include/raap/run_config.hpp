#pragma once

// JSON run configuration shared by the command-line subcommands.
//
//   {
//     "model":     { "d": 32, "n_layers": 6, "weighting": "full", ... },
//     "train":     { "k": 3, "max_epochs": 50, "learning_rate": 0.001, ... },
//     "data":      { "variant": "noiseless", "tasks": ["open"], "n_train": 70, "n_test": 30, "seed": 0 },
//     "retrieval": { "synonyms": [["open", "pull open"]] },
//     "eval":      { "k": 3, "seeds": [0, 1, 2] },
//     "paths":     { "data_dir": "data", "checkpoint": "model.ckpt", ... }
//   }
//
// Every section and key is optional; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "raap/model.hpp"
#include "raap/retrieval.hpp"
#include "raap/training.hpp"

namespace raap {

struct DataConfig {
  std::string variant = "noiseless";
  std::vector<std::string> tasks{"open", "close", "pickup"};
  int n_train = 70;
  int n_test = 30;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  int k = 3;
  std::vector<std::uint64_t> seeds{0};
};

struct PathConfig {
  std::string data_dir = "data";  // holds memory.store, train.store, test.store, manifest.json
  std::string checkpoint = "model.ckpt";
  std::string loss_history = "loss_history.csv";
  std::string report = "report.json";
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  std::vector<std::vector<std::string>> synonyms;
  PathConfig paths;

  TaskSynonymTable synonym_table() const { return TaskSynonymTable(synonyms); }
  /// Throws ConfigError on the first invalid field.
  void validate() const;
};

/// Throws ConfigError for unknown keys and type mismatches.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

/// Every accepted key as "section.key", for help text.
std::vector<std::string> run_config_keys();

}  // namespace raap
