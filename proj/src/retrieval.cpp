#include "raap/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "raap/errors.hpp"
#include "raap/kernels.hpp"

namespace raap {

TaskSynonymTable::TaskSynonymTable(const std::vector<std::vector<std::string>>& groups) {
  std::set<std::string> seen;
  for (const auto& group : groups) {
    std::set<std::string> normalized;
    for (const auto& label : group) {
      std::string t = normalize_task(label);
      if (seen.contains(t)) {
        throw ConfigError("task '" + t + "' appears in more than one synonym group");
      }
      normalized.insert(t);
    }
    seen.insert(normalized.begin(), normalized.end());
    if (!normalized.empty()) {
      groups_.push_back(std::move(normalized));
    }
  }
}

std::set<std::string> TaskSynonymTable::group_of(std::string_view task) const {
  const std::string t = normalize_task(task);
  for (const auto& g : groups_) {
    if (g.contains(t)) {
      return g;
    }
  }
  return {t};
}

std::vector<std::size_t> filter_by_task(const Memory& memory, std::string_view task,
                                        const TaskSynonymTable& synonyms) {
  std::vector<std::size_t> out;
  for (const auto& label : synonyms.group_of(task)) {
    const auto idx = memory.task_index(label);
    out.insert(out.end(), idx.begin(), idx.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

RetrievalResult cosine_topk(const Memory& memory, const Eigen::VectorXd& query, std::span<const std::size_t> subset,
                            std::size_t k, std::optional<std::string_view> exclude_id) {
  if (k < 1) {
    throw ContractError("cosine_topk: k must be at least 1");
  }
  if (!memory.empty() && query.size() != memory.embedding_dim()) {
    throw SchemaError("query embedding has size " + std::to_string(query.size()) + ", memory uses " +
                      std::to_string(memory.embedding_dim()));
  }
  RetrievalResult scored;
  scored.reserve(subset.size());
  for (const std::size_t i : subset) {
    const auto& entry = memory[i];
    if (exclude_id && entry.id == *exclude_id) {
      continue;
    }
    const double s = cosine_similarity(query, entry.embedding);
    if (std::isinf(s)) {
      continue;
    }
    scored.push_back({i, s});
  }
  const auto order = [](const Retrieved& a, const Retrieved& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.entry < b.entry);
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), order);
  scored.resize(n);
  return scored;
}

RetrievalResult retrieve(const Memory& memory, std::string_view task, const Eigen::VectorXd& query, std::size_t k,
                         const TaskSynonymTable& synonyms, std::optional<std::string_view> exclude_id) {
  const auto subset = filter_by_task(memory, task, synonyms);
  return cosine_topk(memory, query, subset, k, exclude_id);
}

}  // namespace raap
