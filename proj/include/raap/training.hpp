#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "raap/memory.hpp"
#include "raap/model.hpp"
#include "raap/retrieval.hpp"

namespace raap {

struct TrainConfig {
  int k = 3;
  int candidate_pool = 15;
  int episodes_per_query = 5;
  int max_epochs = 50;
  int patience = 5;
  double learning_rate = 3e-4;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double flip_probability = 0.5;
  bool flip_references = true;  // mirror retrieved references together with the query
  double min_improvement = 1e-6;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One training sample: a query with K sampled references.
struct Episode {
  std::string id;                  // "<query id>#<repetition>"
  std::size_t query = 0;           // index into the query list
  std::vector<std::size_t> references;  // memory insertion indices, most similar first
  std::vector<double> similarities;
  Eigen::Vector2d target = Eigen::Vector2d::UnitX();  // unflipped ground truth
  bool flip = false;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Per query: task filter, cosine top-`candidate_pool` with the query's own
/// entry excluded, then `episodes_per_query` draws of K references without
/// replacement. Pools smaller than K are used whole; queries with an empty
/// pool (and K > 0) are skipped. Both cases append a message to `warnings`.
std::vector<Episode> build_episodes(const std::vector<MemoryEntry>& queries, const Memory& memory,
                                    const TrainConfig& config, const TaskSynonymTable& synonyms = {},
                                    std::vector<std::string>* warnings = nullptr);

/// Mirrors image, direction and contact about the vertical axis.
MemoryEntry hflip_augment(const MemoryEntry& sample);

/// Model inputs for one episode, flipped as the episode requests.
struct EpisodeInputs {
  FeatureImage query;
  std::vector<FeatureImage> reference_images;
  std::vector<ReferenceInput> references;
  Eigen::Vector2d target;
};
EpisodeInputs episode_inputs(const Episode& episode, const std::vector<MemoryEntry>& queries, const Memory& memory,
                             bool flip_references);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean episode loss per epoch
  bool early_stopped = false;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Adam on 0.5 |raw - target|^2 with episode mini-batches. Stops after
/// max_epochs or once the epoch loss has failed to beat its running best by
/// min_improvement for `patience` consecutive epochs. The model keeps the
/// final-epoch parameters. Throws NumericError naming the episode on a
/// non-finite loss.
TrainResult train(AlignmentModel& model, const std::vector<Episode>& episodes,
                  const std::vector<MemoryEntry>& queries, const Memory& memory, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// "epoch,loss" rows, epochs counted from 1.
void write_loss_history(const std::filesystem::path& path, const std::vector<double>& epoch_loss);

}  // namespace raap
