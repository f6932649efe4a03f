#include "raap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "raap/checkpoint.hpp"
#include "raap/errors.hpp"
#include "raap/store_format.hpp"

namespace raap {

double mae_degrees(const Eigen::Vector2d& predicted, const Eigen::Vector2d& truth) {
  if (std::abs(predicted.norm() - 1.0) > 1e-6 || std::abs(truth.norm() - 1.0) > 1e-6) {
    throw ContractError("mae_degrees: inputs must be unit vectors");
  }
  const double cosine = std::clamp(predicted.dot(truth), -1.0, 1.0);
  return std::acos(cosine) * 180.0 / std::numbers::pi;
}

EvalReport evaluate(const DirectionPredictor& predictor, const std::vector<MemoryEntry>& queries,
                    const Memory& memory, const EvalOptions& options) {
  if (options.k < 0) {
    throw ConfigError("evaluate: k must be non-negative");
  }
  for (const auto& q : queries) {
    if (memory.find(q.id)) {
      throw LeakageError("test query '" + q.id + "' is present in the memory");
    }
  }
  EvalReport report;
  report.k = options.k;
  report.seed = options.seed;
  report.variant = options.variant;

  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return queries[a].id < queries[b].id; });

  std::map<std::string, std::pair<double, int>> per_task;
  double total = 0.0;
  for (const std::size_t qi : order) {
    const MemoryEntry& q = queries[qi];
    std::vector<ReferenceInput> refs;
    if (options.k > 0) {
      const RetrievalResult hits =
          retrieve(memory, q.task, q.embedding, static_cast<std::size_t>(options.k), options.synonyms);
      for (std::size_t slot = 0; slot < hits.size(); ++slot) {
        const MemoryEntry& m = memory[hits[slot].entry];
        refs.push_back({std::cref(m.image), m.affordance.direction, hits[slot].similarity, static_cast<int>(slot)});
      }
    }
    const Eigen::Vector2d raw = predictor(q, refs);
    SampleRecord rec;
    rec.query_id = q.id;
    rec.task = q.task;
    rec.truth = q.affordance.direction;
    const double n = raw.norm();
    if (!std::isfinite(n)) {
      throw NumericError("evaluate: non-finite prediction for query '" + q.id + "'");
    }
    if (n < 1e-12) {
      rec.degenerate = true;
      rec.error_degrees = 180.0;
    } else {
      rec.predicted = raw / n;
      rec.error_degrees = mae_degrees(rec.predicted, rec.truth);
    }
    total += rec.error_degrees;
    auto& acc = per_task[q.task];
    acc.first += rec.error_degrees;
    acc.second += 1;
    report.records.push_back(std::move(rec));
  }
  for (const auto& [task, acc] : per_task) {
    report.task_mae[task] = acc.first / acc.second;
  }
  report.overall_mae = report.records.empty() ? 0.0 : total / static_cast<double>(report.records.size());
  return report;
}

EvalReport evaluate(const AlignmentModel& model, const std::vector<MemoryEntry>& queries, const Memory& memory,
                    const EvalOptions& options) {
  const auto predictor = [&model](const MemoryEntry& q, std::span<const ReferenceInput> refs) {
    const Prediction p = model.predict(q.image, refs);
    const Matrix& raw = p.raw.value();
    return Eigen::Vector2d(raw(0, 0), raw(0, 1));
  };
  EvalReport report = evaluate(predictor, queries, memory, options);
  report.config_hash = config_hash(model.config());
  report.weighting = to_string(model.config().weighting);
  return report;
}

std::string config_hash(const ModelConfig& config) {
  // FNV-1a over "key=value;" pairs in key order.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : model_config_fields(config)) {
    for (const char ch : key + "=" + value + ";") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["metadata"] = {{"config_hash", report.config_hash}, {"seed", report.seed}, {"weighting", report.weighting},
                   {"variant", report.variant}, {"k", report.k}};
  j["overall_mae"] = report.overall_mae;
  j["task_mae"] = report.task_mae;
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& r : report.records) {
    records.push_back({{"query", r.query_id},
                       {"task", r.task},
                       {"predicted", {r.predicted.x(), r.predicted.y()}},
                       {"truth", {r.truth.x(), r.truth.y()}},
                       {"error_degrees", r.error_degrees},
                       {"degenerate", r.degenerate}});
  }
  return j;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  out << report_to_json(report).dump(2) << '\n';
}

std::vector<KSweepRow> k_sweep_table(const std::map<int, std::vector<EvalReport>>& reports_by_k) {
  std::vector<KSweepRow> rows;
  for (const auto& [k, reports] : reports_by_k) {
    KSweepRow row;
    row.k = k;
    row.seeds = static_cast<int>(reports.size());
    for (const auto& r : reports) {
      row.mae += r.overall_mae;
    }
    if (row.seeds > 0) {
      row.mae /= row.seeds;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_k_sweep(const std::filesystem::path& path, const std::vector<KSweepRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  out << "k,mae,seeds\n";
  for (const auto& r : rows) {
    out << r.k << ',' << format_double(r.mae) << ',' << r.seeds << '\n';
  }
}

}  // namespace raap
