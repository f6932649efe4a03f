#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "raap/memory.hpp"
#include "raap/model.hpp"
#include "raap/retrieval.hpp"

namespace raap {

/// Angle between two unit vectors in degrees, in [0, 180].
/// Throws ContractError when either norm differs from 1 by more than 1e-6.
double mae_degrees(const Eigen::Vector2d& predicted, const Eigen::Vector2d& truth);

struct SampleRecord {
  std::string query_id;
  std::string task;
  Eigen::Vector2d predicted = Eigen::Vector2d::Zero();  // unit, or zero when degenerate
  Eigen::Vector2d truth = Eigen::Vector2d::Zero();
  double error_degrees = 0.0;
  bool degenerate = false;
};

struct EvalReport {
  std::map<std::string, double> task_mae;
  double overall_mae = 0.0;  // mean over all records
  std::vector<SampleRecord> records;  // ordered by query id

  std::string config_hash;
  std::uint64_t seed = 0;
  std::string weighting;
  std::string variant;
  int k = 0;
};

/// Raw (unnormalized) direction for a query given its retrieved references.
using DirectionPredictor =
    std::function<Eigen::Vector2d(const MemoryEntry& query, std::span<const ReferenceInput> references)>;

struct EvalOptions {
  int k = 3;
  TaskSynonymTable synonyms;
  std::uint64_t seed = 0;
  std::string variant;
};

/// Retrieves top-K task-filtered references per query, predicts, normalizes
/// and scores. Degenerate predictions score 180 degrees. Throws LeakageError
/// when any query id is present in the memory.
EvalReport evaluate(const DirectionPredictor& predictor, const std::vector<MemoryEntry>& queries,
                    const Memory& memory, const EvalOptions& options);
/// Evaluates with the model's configured weighting rule.
EvalReport evaluate(const AlignmentModel& model, const std::vector<MemoryEntry>& queries, const Memory& memory,
                    const EvalOptions& options);

/// Stable hex digest of the model configuration.
std::string config_hash(const ModelConfig& config);

nlohmann::json report_to_json(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

struct KSweepRow {
  int k = 0;
  double mae = 0.0;  // mean over seeds
  int seeds = 0;
};

/// One row per K, ascending.
std::vector<KSweepRow> k_sweep_table(const std::map<int, std::vector<EvalReport>>& reports_by_k);
/// "k,mae,seeds" rows.
void write_k_sweep(const std::filesystem::path& path, const std::vector<KSweepRow>& rows);

}  // namespace raap
