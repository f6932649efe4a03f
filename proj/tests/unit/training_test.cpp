#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "raap/errors.hpp"
#include "raap/evaluation.hpp"
#include "raap/synthgen.hpp"
#include "raap/training.hpp"

namespace raap {
namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.d = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.n_layers = 1;
  c.film_hidden = 8;
  c.gate_hidden = 8;
  c.head_hidden = 8;
  c.k_max = 3;
  return c;
}

struct Fixture {
  SceneSplit split = generate_split(5, 1, {"open", "close"}, 21, BenchmarkVariant::noiseless());
  std::vector<MemoryEntry> queries = split.train_queries();
};

TEST(Episodes, CountAndShape) {
  Fixture f;
  TrainConfig cfg;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  ASSERT_EQ(episodes.size(), 50u);
  for (const auto& e : episodes) {
    ASSERT_EQ(e.references.size(), 3u);
    const MemoryEntry& q = f.queries[e.query];
    EXPECT_EQ(e.id.substr(0, e.id.find('#')), q.id);
    EXPECT_EQ(e.target, q.affordance.direction);
    std::set<std::size_t> distinct(e.references.begin(), e.references.end());
    EXPECT_EQ(distinct.size(), e.references.size());
    for (std::size_t k = 0; k < e.references.size(); ++k) {
      const MemoryEntry& r = f.split.memory[e.references[k]];
      EXPECT_NE(r.id, q.id);
      EXPECT_EQ(r.task, q.task);
      if (k > 0) {
        EXPECT_GE(e.similarities[k - 1], e.similarities[k]);
      }
    }
  }
}

TEST(Episodes, ZeroReferences) {
  Fixture f;
  TrainConfig cfg;
  cfg.k = 0;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  ASSERT_EQ(episodes.size(), 50u);
  for (const auto& e : episodes) {
    EXPECT_TRUE(e.references.empty());
  }
}

TEST(Episodes, DeterministicInSeed) {
  Fixture f;
  TrainConfig cfg;
  EXPECT_EQ(build_episodes(f.queries, f.split.memory, cfg), build_episodes(f.queries, f.split.memory, cfg));
  TrainConfig other = cfg;
  other.seed = 1;
  EXPECT_NE(build_episodes(f.queries, f.split.memory, cfg), build_episodes(f.queries, f.split.memory, other));
}

TEST(Episodes, FlipRateFollowsProbability) {
  Fixture f;
  TrainConfig cfg;
  cfg.episodes_per_query = 100;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  double flips = 0;
  for (const auto& e : episodes) flips += e.flip ? 1.0 : 0.0;
  EXPECT_NEAR(flips / episodes.size(), 0.5, 0.05);
  cfg.flip_probability = 0.0;
  for (const auto& e : build_episodes(f.queries, f.split.memory, cfg)) EXPECT_FALSE(e.flip);
}

TEST(Episodes, SmallAndEmptyPoolsWarn) {
  Fixture f;
  std::vector<MemoryEntry> entries = f.split.memory.entries();
  // Keep two "open" entries and no "close" entries.
  std::vector<MemoryEntry> kept;
  for (const auto& e : entries) {
    if (e.task == "open" && kept.size() < 2) kept.push_back(e);
  }
  const Memory memory(kept);
  std::vector<MemoryEntry> queries{f.queries.front(), f.queries.back()};
  ASSERT_EQ(queries[0].task, "open");
  ASSERT_EQ(queries[1].task, "close");
  queries[0].id = "fresh";
  TrainConfig cfg;
  std::vector<std::string> warnings;
  const auto episodes = build_episodes(queries, memory, cfg, {}, &warnings);
  ASSERT_EQ(episodes.size(), 5u);
  EXPECT_EQ(episodes.front().references.size(), 2u);
  ASSERT_EQ(warnings.size(), 2u);
  EXPECT_NE(warnings[0].find("smaller than K"), std::string::npos);
  EXPECT_NE(warnings[1].find("skipped"), std::string::npos);
}

TEST(Episodes, InvalidConfig) {
  Fixture f;
  TrainConfig cfg;
  cfg.k = 16;
  EXPECT_THROW(build_episodes(f.queries, f.split.memory, cfg), ConfigError);
  cfg = {};
  cfg.flip_probability = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Augment, MirrorsDirectionContactAndPixels) {
  MemoryEntry e;
  e.image = FeatureImage(4, 10, 2);
  e.image.at(2, 1, 0) = 7.0;
  e.image.at(9, 3, 1) = -1.0;
  e.affordance.contact = {2.0, 1.0};
  e.affordance.direction = Eigen::Vector2d(0.6, 0.8);
  const MemoryEntry f = hflip_augment(e);
  EXPECT_EQ(f.affordance.direction, Eigen::Vector2d(-0.6, 0.8));
  EXPECT_EQ(f.affordance.contact, Eigen::Vector2d(7.0, 1.0));
  EXPECT_EQ(f.image.at(7, 1, 0), 7.0);
  EXPECT_EQ(f.image.at(0, 3, 1), -1.0);
  const MemoryEntry back = hflip_augment(f);
  EXPECT_EQ(back.image, e.image);
  EXPECT_EQ(back.affordance.direction, e.affordance.direction);
  EXPECT_EQ(back.affordance.contact, e.affordance.contact);
}

TEST(Augment, EpisodeInputsFollowFlip) {
  Fixture f;
  TrainConfig cfg;
  cfg.flip_probability = 1.0;
  const Episode e = build_episodes(f.queries, f.split.memory, cfg).front();
  ASSERT_TRUE(e.flip);
  const EpisodeInputs both = episode_inputs(e, f.queries, f.split.memory, true);
  const EpisodeInputs query_only = episode_inputs(e, f.queries, f.split.memory, false);
  EXPECT_EQ(both.query, hflip(f.queries[e.query].image));
  EXPECT_EQ(both.target, Eigen::Vector2d(-e.target.x(), e.target.y()));
  const MemoryEntry& r0 = f.split.memory[e.references[0]];
  EXPECT_EQ(both.reference_images[0], hflip(r0.image));
  EXPECT_EQ(both.references[0].direction, Eigen::Vector2d(-r0.affordance.direction.x(), r0.affordance.direction.y()));
  EXPECT_EQ(query_only.reference_images[0], r0.image);
  EXPECT_EQ(query_only.references[0].direction, r0.affordance.direction);
  for (std::size_t k = 0; k < both.references.size(); ++k) {
    EXPECT_EQ(both.references[k].slot, static_cast<int>(k));
    EXPECT_EQ(both.references[k].similarity, e.similarities[k]);
  }
}

TEST(Train, ZeroLearningRateStopsAfterPatience) {
  Fixture f;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.episodes_per_query = 1;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  AlignmentModel model(small_model(), 0);
  const AlignmentModel before = model.clone();
  const TrainResult r = train(model, episodes, f.queries, f.split.memory, cfg);
  EXPECT_TRUE(r.early_stopped);
  ASSERT_EQ(r.epoch_loss.size(), 6u);
  for (const double l : r.epoch_loss) EXPECT_EQ(l, r.epoch_loss.front());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    EXPECT_EQ(model.parameters()[i].tensor.value(), before.parameters()[i].tensor.value());
  }
}

TEST(Train, ImprovingRunIsNotCutShort) {
  Fixture f;
  TrainConfig cfg;
  cfg.k = 0;
  cfg.episodes_per_query = 1;
  cfg.flip_probability = 0.0;
  cfg.batch_size = 1000;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 8;
  cfg.patience = 1;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  AlignmentModel model(small_model(), 3);
  const TrainResult r = train(model, episodes, f.queries, f.split.memory, cfg);
  ASSERT_EQ(r.epoch_loss.size(), 8u);
  EXPECT_FALSE(r.early_stopped);
  for (std::size_t i = 1; i < r.epoch_loss.size(); ++i) EXPECT_LT(r.epoch_loss[i], r.epoch_loss[i - 1]);
}

TEST(Train, DeterministicAndCallbackPerEpoch) {
  Fixture f;
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.episodes_per_query = 1;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  AlignmentModel a(small_model(), 5);
  AlignmentModel b(small_model(), 5);
  std::vector<double> seen;
  const TrainResult ra = train(a, episodes, f.queries, f.split.memory, cfg, [&](int, double l) { seen.push_back(l); });
  const TrainResult rb = train(b, episodes, f.queries, f.split.memory, cfg);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(seen, ra.epoch_loss);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].tensor.value(), b.parameters()[i].tensor.value());
  }
}

TEST(Train, NonFiniteLossNamesEpisode) {
  Fixture f;
  TrainConfig cfg;
  const auto episodes = build_episodes(f.queries, f.split.memory, cfg);
  AlignmentModel model(small_model(), 0);
  model.parameter("cls").mutable_value().setConstant(std::nan(""));
  try {
    train(model, episodes, f.queries, f.split.memory, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("#"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("episode '"), std::string::npos);
  }
}

TEST(Train, MirroredInputsGiveMirroredPredictions) {
  // Default augmentation: each episode is seen plain or mirrored, references included.
  const SceneSplit split = generate_split(70, 20, {"open"}, 8, BenchmarkVariant::noiseless());
  const std::vector<MemoryEntry> queries = split.train_queries();
  const std::vector<MemoryEntry> test = split.test_queries();
  TrainConfig cfg;
  ModelConfig mc;
  mc.embedding_dim = kSceneEmbeddingDim;
  AlignmentModel model(mc, 1);
  train(model, build_episodes(queries, split.memory, cfg), queries, split.memory, cfg);

  EvalOptions opts;
  opts.k = cfg.k;
  const double test_mae = evaluate(model, test, split.memory, opts).overall_mae;
  double discrepancy = 0.0;
  for (const auto& q : test) {
    Episode e;
    e.id = q.id;
    for (const auto& hit : retrieve(split.memory, q.task, q.embedding, cfg.k)) {
      e.references.push_back(hit.entry);
      e.similarities.push_back(hit.similarity);
    }
    const std::vector<MemoryEntry> one{q};
    const EpisodeInputs plain = episode_inputs(e, one, split.memory, true);
    e.flip = true;
    const EpisodeInputs flipped = episode_inputs(e, one, split.memory, true);
    Eigen::Vector2d mirrored = model.predict(plain.query, plain.references).direction;
    mirrored.x() = -mirrored.x();
    discrepancy += mae_degrees(model.predict(flipped.query, flipped.references).direction, mirrored);
  }
  discrepancy /= static_cast<double>(test.size());
  EXPECT_LT(test_mae, 30.0);
  EXPECT_LE(discrepancy, test_mae + 5.0) << "test MAE " << test_mae;
}

TEST(Train, LossHistoryFile) {
  const auto path = std::filesystem::temp_directory_path() / "raap_loss.csv";
  write_loss_history(path, {0.5, 0.25});
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text.substr(0, 11), "epoch,loss\n");
  EXPECT_NE(text.find("1,0.5"), std::string::npos);
  EXPECT_NE(text.find("2,0.25"), std::string::npos);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace raap
