#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "raap/image.hpp"

namespace raap {

/// Contact pixel and unit post-contact direction, both in image coordinates
/// (origin top-left, x right, y down).
struct Affordance2D {
  Eigen::Vector2d contact = Eigen::Vector2d::Zero();
  Eigen::Vector2d direction = Eigen::Vector2d::UnitX();
};

struct Trajectory2D {
  std::vector<Eigen::Vector2d> points;
};

/// One stored interaction. `id` names the source sample; it is how training
/// excludes self-retrieval and how evaluation detects leakage.
struct MemoryEntry {
  std::string id;
  std::string task;
  FeatureImage image;
  Eigen::VectorXd embedding;
  Affordance2D affordance;
};

enum class DirectionRule {
  kPrincipalAxis,         // signed first principal component of the points
  kEndpointDisplacement,  // last - first
};

/// Lowercases and collapses whitespace runs to single spaces.
std::string normalize_task(std::string_view task);

/// Unit direction of a trajectory, or nullopt when the trajectory does not
/// define one (net displacement below 1e-6 px, or all points coincide).
/// Throws ContractError for fewer than two points or non-finite points.
std::optional<Eigen::Vector2d> reduce_trajectory(const Trajectory2D& trajectory,
                                                 DirectionRule rule = DirectionRule::kPrincipalAxis);

/// Immutable affordance memory. Entries keep insertion order, which is the
/// tie-breaking order for retrieval.
class Memory {
 public:
  Memory() = default;
  /// Validates unit directions, contact bounds and a common embedding size.
  explicit Memory(std::vector<MemoryEntry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// 0 for an empty memory.
  Eigen::Index embedding_dim() const { return embedding_dim_; }

  const std::vector<MemoryEntry>& entries() const { return entries_; }
  const MemoryEntry& operator[](std::size_t i) const { return entries_[i]; }

  /// Insertion indices of the entries carrying `task` (normalized).
  std::span<const std::size_t> task_index(std::string_view task) const;
  std::vector<std::string> tasks() const;
  std::optional<std::size_t> find(std::string_view id) const;

 private:
  std::vector<MemoryEntry> entries_;
  Eigen::Index embedding_dim_ = 0;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_task_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// Raw sample before reduction: either an annotated trajectory (its first
/// point is the contact) or an already reduced affordance.
struct MemorySample {
  std::string id;
  std::string task;
  FeatureImage image;
  Eigen::VectorXd embedding;
  std::variant<Trajectory2D, Affordance2D> annotation;
};

/// Reduces trajectories, drops samples without a valid direction and indexes
/// the rest by task. Throws EmptyMemoryError when nothing survives.
Memory build_memory(std::span<const MemorySample> samples, DirectionRule rule = DirectionRule::kPrincipalAxis);

void save_memory(const Memory& memory, const std::filesystem::path& path);
Memory load_memory(const std::filesystem::path& path);

}  // namespace raap
