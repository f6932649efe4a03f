#include "raap/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "raap/errors.hpp"
#include "raap/store_format.hpp"

namespace raap {

void TrainConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) {
      throw ConfigError("train config: " + what);
    }
  };
  require(candidate_pool >= 1, "candidate_pool must be at least 1");
  require(k >= 0 && k <= candidate_pool, "k must lie in [0, candidate_pool]");
  require(episodes_per_query >= 1, "episodes_per_query must be at least 1");
  require(max_epochs >= 1, "max_epochs must be at least 1");
  require(patience >= 1, "patience must be at least 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be finite and non-negative");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(flip_probability >= 0.0 && flip_probability <= 1.0, "flip_probability must lie in [0, 1]");
  require(min_improvement >= 0.0, "min_improvement must be non-negative");
}

std::vector<Episode> build_episodes(const std::vector<MemoryEntry>& queries, const Memory& memory,
                                    const TrainConfig& config, const TaskSynonymTable& synonyms,
                                    std::vector<std::string>* warnings) {
  config.validate();
  const auto warn = [warnings](std::string msg) {
    if (warnings) {
      warnings->push_back(std::move(msg));
    }
  };
  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution flip(config.flip_probability);
  std::vector<Episode> episodes;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const MemoryEntry& q = queries[qi];
    RetrievalResult pool;
    if (config.k > 0) {
      pool = retrieve(memory, q.task, q.embedding, static_cast<std::size_t>(config.candidate_pool), synonyms, q.id);
      if (pool.empty()) {
        warn("query '" + q.id + "': no candidates for task '" + q.task + "', skipped");
        continue;
      }
      if (pool.size() < static_cast<std::size_t>(config.k)) {
        warn("query '" + q.id + "': pool of " + std::to_string(pool.size()) + " is smaller than K=" +
             std::to_string(config.k) + ", using the whole pool");
      }
    }
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(config.k));
    for (int rep = 0; rep < config.episodes_per_query; ++rep) {
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      // Partial Fisher-Yates: the first `take` slots are a uniform sample.
      for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
      }
      order.resize(take);
      std::sort(order.begin(), order.end());  // pool rank order: most similar first
      Episode e;
      e.id = q.id + "#" + std::to_string(rep);
      e.query = qi;
      for (const std::size_t r : order) {
        e.references.push_back(pool[r].entry);
        e.similarities.push_back(pool[r].similarity);
      }
      e.target = q.affordance.direction;
      e.flip = flip(rng);
      episodes.push_back(std::move(e));
    }
  }
  return episodes;
}

MemoryEntry hflip_augment(const MemoryEntry& sample) {
  MemoryEntry out = sample;
  out.image = hflip(sample.image);
  out.affordance.direction.x() = -sample.affordance.direction.x();
  out.affordance.contact.x() = sample.image.width - 1 - sample.affordance.contact.x();
  return out;
}

EpisodeInputs episode_inputs(const Episode& episode, const std::vector<MemoryEntry>& queries, const Memory& memory,
                             bool flip_references) {
  const auto mirror = [](Eigen::Vector2d d) {
    d.x() = -d.x();
    return d;
  };
  EpisodeInputs in;
  const MemoryEntry& q = queries.at(episode.query);
  in.query = episode.flip ? hflip(q.image) : q.image;
  in.target = episode.flip ? mirror(episode.target) : episode.target;
  const bool flip_refs = episode.flip && flip_references;
  in.reference_images.reserve(episode.references.size());
  for (const std::size_t r : episode.references) {
    in.reference_images.push_back(flip_refs ? hflip(memory[r].image) : memory[r].image);
  }
  for (std::size_t k = 0; k < episode.references.size(); ++k) {
    const Eigen::Vector2d& d = memory[episode.references[k]].affordance.direction;
    in.references.push_back(
        {std::cref(in.reference_images[k]), flip_refs ? mirror(d) : d, episode.similarities[k], static_cast<int>(k)});
  }
  return in;
}

namespace {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

void adam_step(std::span<NamedParameter> params, AdamState& state, double lr) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      state.v.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    if (!t.has_grad()) {
      continue;
    }
    const Matrix& g = t.grad();
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    t.mutable_value().array() -=
        lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace

TrainResult train(AlignmentModel& model, const std::vector<Episode>& episodes,
                  const std::vector<MemoryEntry>& queries, const Memory& memory, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (episodes.empty()) {
    throw ConfigError("train: no episodes");
  }
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> losses(episodes.size());
  AdamState adam;
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const Episode& e = episodes[order[b]];
        const EpisodeInputs in = episode_inputs(e, queries, memory, config.flip_references);
        GradGraph graph;
        GraphScope scope(graph);
        const Prediction pred = model.predict(in.query, in.references);
        const Tensor loss = direction_loss(pred.raw, in.target);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss in episode '" + e.id + "' at epoch " + std::to_string(epoch));
        }
        losses[order[b]] = value;
        graph.backward(scale(loss, inv));
      }
      if (config.learning_rate > 0.0) {
        adam_step(model.parameters(), adam, config.learning_rate);
      }
    }
    // Summed in episode order so the value does not depend on the shuffle.
    double total = 0.0;
    for (const double l : losses) {
      total += l;
    }
    const double mean = total / static_cast<double>(losses.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) {
      on_epoch(epoch, mean);
    }
    if (mean < best - config.min_improvement) {
      best = mean;
      stale = 0;
    } else if (++stale >= config.patience) {
      result.early_stopped = epoch < config.max_epochs;
      break;
    }
  }
  return result;
}

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& epoch_loss) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
    out << (i + 1) << ',' << format_double(epoch_loss[i]) << '\n';
  }
  if (!out) {
    throw ConfigError("failed writing '" + path.string() + "'");
  }
}

}  // namespace raap
