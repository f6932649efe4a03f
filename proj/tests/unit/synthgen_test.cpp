#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "raap/correspondence.hpp"
#include "raap/errors.hpp"
#include "raap/synthgen.hpp"

namespace raap {
namespace {

TEST(Synthgen, ZeroAngleOpenPointsRight) {
  SceneGeometry g;
  g.angle = 0.0;
  const Scene s = render_scene("open", g, BenchmarkVariant::noiseless(), 0, "a");
  EXPECT_TRUE(s.gt.direction.isApprox(Eigen::Vector2d(1, 0)));
  // Handle centre sits at x = 23.5 + 11.5 = 35, so its 2 x 2 block starts at (34, 23).
  EXPECT_EQ(s.gt.contact, Eigen::Vector2d(34, 23));
  EXPECT_EQ(s.image.at(34, 23, kHandleChannel), kHandleValue);
  EXPECT_EQ(s.image.at(35, 24, kHandleChannel), kHandleValue);
  EXPECT_EQ(s.image.at(23, 23, kCosChannel), 1.0);
  EXPECT_EQ(s.image.at(23, 23, kSinChannel), 0.0);
  EXPECT_EQ(s.image.at(0, 0, kMaskChannel), 0.0);
}

TEST(Synthgen, DirectionsPerTask) {
  SceneGeometry g;
  g.angle = 1.0;
  g.jitter = 0.1;
  const auto v = BenchmarkVariant::noiseless();
  const Scene open = render_scene("open", g, v, 0, "o");
  const Scene close = render_scene("close", g, v, 0, "c");
  const Scene pick = render_scene("pickup", g, v, 0, "p");
  EXPECT_TRUE(open.gt.direction.isApprox(Eigen::Vector2d(std::cos(1.0), std::sin(1.0))));
  EXPECT_TRUE(close.gt.direction.isApprox(-open.gt.direction));
  EXPECT_EQ(close.gt.contact, open.gt.contact);
  EXPECT_NE(close.image, open.image);
  EXPECT_TRUE(pick.gt.direction.isApprox(Eigen::Vector2d(-std::sin(0.1), -std::cos(0.1))));
  for (const Scene* s : {&open, &close, &pick}) EXPECT_NEAR(s->gt.direction.norm(), 1.0, 1e-12);
}

TEST(Synthgen, ContactLiesOnHandle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& task : scene_tasks()) {
      const Scene s = generate_scene(task, seed, BenchmarkVariant::noiseless());
      const Eigen::Vector2i c = contact_pixel(s.gt.contact);
      EXPECT_EQ(s.reference.at(c.x(), c.y(), kHandleChannel), kHandleValue) << task << " " << seed;
    }
  }
}

TEST(Synthgen, Deterministic) {
  const auto v = BenchmarkVariant::noisy();
  const Scene a = generate_scene("close", 77, v);
  const Scene b = generate_scene("close", 77, v);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.reference, b.reference);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_EQ(a.gt.direction, b.gt.direction);
  EXPECT_NE(a.image, generate_scene("close", 78, v).image);
}

TEST(Synthgen, NoiseIsSharedByBothViews) {
  const Scene noisy = generate_scene("open", 5, BenchmarkVariant::noisy());
  const Scene clean = generate_scene("open", 5, BenchmarkVariant::noiseless());
  EXPECT_EQ(noisy.image, noisy.reference);
  const double std = std::sqrt((noisy.image.pixels - clean.image.pixels).array().square().mean());
  EXPECT_NEAR(std, 0.05, 0.005);
  EXPECT_EQ(noisy.embedding, clean.embedding);
}

TEST(Synthgen, BlindQueryHidesOrientation) {
  const Scene s = generate_scene("open", 3, BenchmarkVariant::reference_informative());
  EXPECT_TRUE(s.image.pixels.col(kCosChannel).isZero(0.0));
  EXPECT_TRUE(s.image.pixels.col(kSinChannel).isZero(0.0));
  EXPECT_TRUE(s.image.pixels.col(kHandleChannel).isZero(0.0));
  EXPECT_FALSE(s.reference.pixels.col(kCosChannel).isZero(0.0));
  EXPECT_FALSE(s.reference.pixels.col(kHandleChannel).isZero(0.0));
  EXPECT_GT(s.image.pixels.col(kMaskChannel).sum(), 50.0);
}

TEST(Synthgen, EmbeddingLayout) {
  const Scene s = generate_scene("pickup", 9, BenchmarkVariant::noiseless());
  ASSERT_EQ(s.embedding.size(), kSceneEmbeddingDim);
  for (int c = 0; c < kSceneChannels; ++c) {
    EXPECT_NEAR(s.embedding(c), s.reference.pixels.col(c).mean(), 1e-12);
  }
  const Eigen::VectorXd hist = s.embedding.tail(kHistogramBins);
  EXPECT_TRUE((hist.array() >= 0).all());
  EXPECT_NEAR(hist.sum(), 1.0, 1e-9);
}

TEST(Synthgen, SplitShape) {
  const SceneSplit split = generate_split(70, 30, scene_tasks(), 0, BenchmarkVariant::noiseless());
  EXPECT_EQ(split.train.size(), 210u);
  EXPECT_EQ(split.test.size(), 90u);
  std::set<std::string> train_ids, test_ids;
  for (const auto& s : split.train) train_ids.insert(s.id);
  for (const auto& s : split.test) test_ids.insert(s.id);
  EXPECT_EQ(train_ids.size(), 210u);
  EXPECT_EQ(test_ids.size(), 90u);
  for (const auto& id : test_ids) EXPECT_EQ(train_ids.count(id), 0u);
  ASSERT_EQ(split.memory.size(), 210u);
  for (const auto& e : split.memory.entries()) EXPECT_EQ(train_ids.count(e.id), 1u);
  EXPECT_EQ(split.memory.task_index("pickup").size(), 70u);
  EXPECT_EQ(split.train.front().id, "open-train-0000");
  EXPECT_EQ(split.test.back().id, "pickup-test-0029");
}

TEST(Synthgen, CorrespondenceRecoversContactOnCleanScenes) {
  int hits = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const Scene s = generate_scene(scene_tasks()[i % 3], 1000 + i, BenchmarkVariant::noiseless());
    const Eigen::Vector2i c = contact_pixel(s.gt.contact);
    hits += transfer_contact(s.reference, c, s.image) == c;
  }
  EXPECT_GE(hits, n * 99 / 100);
}

TEST(Synthgen, ContactTransfersAcrossScenes) {
  for (int i = 0; i < 100; ++i) {
    const auto& task = scene_tasks()[i % 3];
    const Scene ref = generate_scene(task, 2000 + i, BenchmarkVariant::noiseless());
    const Scene query = generate_scene(task, 3000 + i, BenchmarkVariant::noiseless());
    EXPECT_EQ(transfer_contact(ref.reference, contact_pixel(ref.gt.contact), query.image),
              contact_pixel(query.gt.contact))
        << task << " " << i;
  }
}

TEST(Synthgen, Errors) {
  EXPECT_THROW(generate_scene("push", 0, BenchmarkVariant::noiseless()), ConfigError);
  EXPECT_THROW(BenchmarkVariant::parse("foggy"), ConfigError);
  EXPECT_EQ(BenchmarkVariant::parse("noisy-reference-informative").noise, 0.05);
  EXPECT_THROW(generate_split(0, 1, scene_tasks(), 0, BenchmarkVariant::noiseless()), ConfigError);
  SceneGeometry g;
  g.center = {44, 23.5};
  EXPECT_THROW(render_scene("open", g, BenchmarkVariant::noiseless(), 0, "x"), ConfigError);
}

}  // namespace
}  // namespace raap
