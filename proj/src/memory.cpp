#include "raap/memory.hpp"

#include <cctype>
#include <cmath>

#include "raap/errors.hpp"
#include "raap/store_format.hpp"

namespace raap {

std::string normalize_task(std::string_view task) {
  std::string out;
  out.reserve(task.size());
  bool pending_space = false;
  for (const char ch : task) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

std::optional<Eigen::Vector2d> reduce_trajectory(const Trajectory2D& trajectory, DirectionRule rule) {
  const auto& pts = trajectory.points;
  if (pts.size() < 2) {
    throw ContractError("reduce_trajectory: need at least two points");
  }
  for (const auto& p : pts) {
    if (!p.allFinite()) {
      throw ContractError("reduce_trajectory: non-finite point");
    }
  }
  const Eigen::Vector2d displacement = pts.back() - pts.front();
  if (displacement.norm() < 1e-6) {
    return std::nullopt;
  }
  if (rule == DirectionRule::kEndpointDisplacement) {
    return displacement.normalized();
  }

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) {
    mean += p;
  }
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d c = p - mean;
    cov += c * c.transpose();
  }
  if (cov.isZero(0.0)) {
    return std::nullopt;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(cov);
  Eigen::Vector2d axis = solver.eigenvectors().col(1);
  if (axis.dot(displacement) < 0.0) {
    axis = -axis;
  }
  return axis.normalized();
}

Memory::Memory(std::vector<MemoryEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    e.task = normalize_task(e.task);
    if (i == 0) {
      embedding_dim_ = e.embedding.size();
    } else if (e.embedding.size() != embedding_dim_) {
      throw SchemaError("memory entry '" + e.id + "' has embedding size " + std::to_string(e.embedding.size()) +
                        ", expected " + std::to_string(embedding_dim_));
    }
    if (std::abs(e.affordance.direction.norm() - 1.0) > 1e-9) {
      throw ContractError("memory entry '" + e.id + "' has a non-unit direction");
    }
    const auto& c = e.affordance.contact;
    if (!e.image.empty() &&
        !(c.x() >= 0.0 && c.y() >= 0.0 && c.x() < e.image.width && c.y() < e.image.height)) {
      throw ContractError("memory entry '" + e.id + "' has a contact outside its image");
    }
    if (!by_id_.emplace(e.id, i).second) {
      throw SchemaError("duplicate memory entry id '" + e.id + "'");
    }
    by_task_[e.task].push_back(i);
  }
}

std::span<const std::size_t> Memory::task_index(std::string_view task) const {
  const auto it = by_task_.find(normalize_task(task));
  if (it == by_task_.end()) {
    return {};
  }
  return it->second;
}

std::vector<std::string> Memory::tasks() const {
  std::vector<std::string> out;
  out.reserve(by_task_.size());
  for (const auto& [task, _] : by_task_) {
    out.push_back(task);
  }
  return out;
}

std::optional<std::size_t> Memory::find(std::string_view id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) {
    return std::nullopt;
  }
  return it->second;
}

Memory build_memory(std::span<const MemorySample> samples, DirectionRule rule) {
  if (samples.empty()) {
    throw ContractError("build_memory: no samples");
  }
  std::vector<MemoryEntry> entries;
  entries.reserve(samples.size());
  for (const auto& s : samples) {
    Affordance2D affordance;
    if (const auto* traj = std::get_if<Trajectory2D>(&s.annotation)) {
      const auto direction = reduce_trajectory(*traj, rule);
      if (!direction) {
        continue;
      }
      affordance.contact = traj->points.front();
      affordance.direction = *direction;
    } else {
      affordance = std::get<Affordance2D>(s.annotation);
    }
    entries.push_back(MemoryEntry{s.id, s.task, s.image, s.embedding, affordance});
  }
  if (entries.empty()) {
    throw EmptyMemoryError("build_memory: every sample was filtered out");
  }
  return Memory(std::move(entries));
}

void save_memory(const Memory& memory, const std::filesystem::path& path) {
  StoreContents contents;
  contents.embedding_dim = memory.embedding_dim();
  contents.entries = memory.entries();
  write_store_file(path, contents);
}

Memory load_memory(const std::filesystem::path& path) {
  StoreContents contents = read_store_file(path);
  return Memory(std::move(contents.entries));
}

}  // namespace raap
