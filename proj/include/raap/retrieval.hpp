#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "raap/memory.hpp"

namespace raap {

/// Groups of task labels treated as mutually relevant. A label that is not
/// listed forms its own singleton group.
class TaskSynonymTable {
 public:
  TaskSynonymTable() = default;
  /// Labels are normalized; throws ConfigError when a label appears in two groups.
  explicit TaskSynonymTable(const std::vector<std::vector<std::string>>& groups);

  std::set<std::string> group_of(std::string_view task) const;
  const std::vector<std::set<std::string>>& groups() const { return groups_; }

 private:
  std::vector<std::set<std::string>> groups_;
};

struct Retrieved {
  std::size_t entry = 0;  // insertion index in the memory
  double similarity = 0.0;
};

/// Ordered by similarity (descending), then insertion index (ascending).
using RetrievalResult = std::vector<Retrieved>;

/// Insertion indices of every entry whose task lies in the synonym group of `task`.
std::vector<std::size_t> filter_by_task(const Memory& memory, std::string_view task,
                                        const TaskSynonymTable& synonyms = {});

/// Exact cosine top-k over `subset`. Zero-norm embeddings are never returned;
/// `exclude_id` is removed before ranking. Throws SchemaError on embedding size mismatch.
RetrievalResult cosine_topk(const Memory& memory, const Eigen::VectorXd& query, std::span<const std::size_t> subset,
                            std::size_t k, std::optional<std::string_view> exclude_id = std::nullopt);

/// filter_by_task followed by cosine_topk.
RetrievalResult retrieve(const Memory& memory, std::string_view task, const Eigen::VectorXd& query, std::size_t k,
                         const TaskSynonymTable& synonyms = {},
                         std::optional<std::string_view> exclude_id = std::nullopt);

}  // namespace raap
