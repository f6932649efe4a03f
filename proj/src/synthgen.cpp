#include "raap/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "raap/errors.hpp"

namespace raap {

BenchmarkVariant BenchmarkVariant::parse(std::string_view name) {
  for (const auto& v : {noiseless(), noisy(), reference_informative(), noisy_reference_informative()}) {
    if (v.name == name) {
      return v;
    }
  }
  throw ConfigError("unknown benchmark variant '" + std::string(name) +
                    "' (expected noiseless, noisy, reference-informative or noisy-reference-informative)");
}

const std::vector<std::string>& scene_tasks() {
  static const std::vector<std::string> tasks{"open", "close", "pickup"};
  return tasks;
}

Eigen::VectorXd scene_embedding(const FeatureImage& clean) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kSceneEmbeddingDim);
  out.head(kSceneChannels) = clean.pixels.colwise().mean().transpose();
  constexpr double bin_width = 2.0 * std::numbers::pi / kHistogramBins;
  double count = 0.0;
  for (Eigen::Index i = 0; i < clean.pixels.rows(); ++i) {
    if (clean.pixels(i, kMaskChannel) <= 0.5) {
      continue;
    }
    double angle = std::atan2(clean.pixels(i, kSinChannel), clean.pixels(i, kCosChannel));
    if (angle < 0.0) {
      angle += 2.0 * std::numbers::pi;
    }
    // Linear split between the two nearest bin centers.
    const double pos = angle / bin_width - 0.5;
    const double lo = std::floor(pos);
    const double frac = pos - lo;
    const int b0 = (static_cast<int>(lo) % kHistogramBins + kHistogramBins) % kHistogramBins;
    const int b1 = (b0 + 1) % kHistogramBins;
    out(kSceneChannels + b0) += 1.0 - frac;
    out(kSceneChannels + b1) += frac;
    count += 1.0;
  }
  if (count > 0.0) {
    out.tail(kHistogramBins) /= count;
  }
  return out;
}

SceneGeometry sample_geometry(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneGeometry g;
  g.angle = 2.0 * std::numbers::pi * unit(rng);
  g.center.x() = 23.5 + (unit(rng) - 0.5) * 6.0;
  g.center.y() = 23.5 + (unit(rng) - 0.5) * 6.0;
  g.half_length = 8.0 + 4.0 * unit(rng);
  g.half_width = 3.0 + 2.0 * unit(rng);
  g.radius = 7.0 + 3.0 * unit(rng);
  g.jitter = (unit(rng) - 0.5) * 20.0 * std::numbers::pi / 180.0;
  g.plane_depth = 0.8 + 0.4 * unit(rng);
  return g;
}

Scene render_scene(std::string_view task, const SceneGeometry& g, const BenchmarkVariant& variant,
                   std::uint64_t noise_seed, std::string id) {
  const auto& tasks = scene_tasks();
  if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
    throw ConfigError("unknown scene task '" + std::string(task) + "'");
  }
  const bool disk = task == "pickup";
  const double half_width = task == "close" ? g.half_width + 4.0 : g.half_width;
  const double reach = disk ? g.radius : g.half_length;
  const double c = std::cos(g.angle);
  const double s = std::sin(g.angle);
  const double hx = g.center.x() + (reach + 1.5) * c;
  const double hy = g.center.y() + (reach + 1.5) * s;
  const int x0 = static_cast<int>(std::floor(hx - 0.5));
  const int y0 = static_cast<int>(std::floor(hy - 0.5));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= kSceneSize || y0 + 1 >= kSceneSize) {
    throw ConfigError("render_scene: handle falls outside the image");
  }

  Scene scene;
  scene.id = std::move(id);
  scene.task = std::string(task);
  scene.angle = g.angle;

  FeatureImage clean(kSceneSize, kSceneSize, kSceneChannels);
  for (int y = 0; y < kSceneSize; ++y) {
    for (int x = 0; x < kSceneSize; ++x) {
      const double dx = x - g.center.x();
      const double dy = y - g.center.y();
      const double u = dx * c + dy * s;
      const double v = -dx * s + dy * c;
      const bool inside =
          disk ? std::hypot(dx, dy) <= g.radius : std::abs(u) <= g.half_length && std::abs(v) <= half_width;
      if (inside) {
        clean.pixel(x, y) << 1.0, 0.0, c, s;
      }
    }
  }
  for (int y = y0; y <= y0 + 1; ++y) {
    for (int x = x0; x <= x0 + 1; ++x) {
      clean.pixel(x, y) << 1.0, kHandleValue, c, s;
    }
  }

  scene.gt.contact = Eigen::Vector2d(x0, y0);
  if (disk) {
    scene.gt.direction = Eigen::Vector2d(-std::sin(g.jitter), -std::cos(g.jitter));
  } else if (task == "close") {
    scene.gt.direction = Eigen::Vector2d(-c, -s);
  } else {
    scene.gt.direction = Eigen::Vector2d(c, s);
  }
  scene.embedding = scene_embedding(clean);

  FeatureImage query = clean;
  if (variant.blind_query) {
    for (Eigen::Index i = 0; i < query.pixels.rows(); ++i) {
      if (query.pixels(i, kHandleChannel) > 0.5) {
        query.pixels.row(i).setZero();
      }
    }
    query.pixels.col(kCosChannel).setZero();
    query.pixels.col(kSinChannel).setZero();
  }
  scene.reference = clean;
  scene.image = std::move(query);
  if (variant.noise > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, variant.noise);
    for (Eigen::Index i = 0; i < clean.pixels.size(); ++i) {
      const double n = noise(rng);
      scene.image.pixels.data()[i] += n;
      scene.reference.pixels.data()[i] += n;
    }
  }

  scene.depth.depth = RowMatrix<double>::Constant(kSceneSize, kSceneSize, g.plane_depth);
  scene.intrinsics = Intrinsics<double>{60.0, 60.0, 23.5, 23.5};
  return scene;
}

Scene generate_scene(std::string_view task, std::uint64_t seed, const BenchmarkVariant& variant, std::string id) {
  if (id.empty()) {
    id = std::string(task) + "-" + std::to_string(seed);
  }
  return render_scene(task, sample_geometry(seed), variant, seed ^ 0x5bd1e995ULL, std::move(id));
}

std::vector<MemoryEntry> SceneSplit::train_queries() const {
  std::vector<MemoryEntry> out;
  out.reserve(train.size());
  for (const auto& s : train) {
    out.push_back(s.query_entry());
  }
  return out;
}

std::vector<MemoryEntry> SceneSplit::test_queries() const {
  std::vector<MemoryEntry> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    out.push_back(s.query_entry());
  }
  return out;
}

SceneSplit generate_split(int n_train, int n_test, const std::vector<std::string>& tasks, std::uint64_t seed,
                          const BenchmarkVariant& variant) {
  if (n_train < 1 || n_test < 1) {
    throw ConfigError("generate_split: n_train and n_test must be at least 1");
  }
  if (tasks.empty()) {
    throw ConfigError("generate_split: no tasks");
  }
  std::mt19937_64 seeds(seed);
  SceneSplit split;
  char buf[32];
  for (const auto& task : tasks) {
    for (int i = 0; i < n_train; ++i) {
      std::snprintf(buf, sizeof buf, "-train-%04d", i);
      split.train.push_back(generate_scene(task, seeds(), variant, task + buf));
    }
    for (int i = 0; i < n_test; ++i) {
      std::snprintf(buf, sizeof buf, "-test-%04d", i);
      split.test.push_back(generate_scene(task, seeds(), variant, task + buf));
    }
  }
  std::vector<MemoryEntry> entries;
  entries.reserve(split.train.size());
  for (const auto& s : split.train) {
    entries.push_back(s.memory_entry());
  }
  split.memory = Memory(std::move(entries));
  return split;
}

}  // namespace raap
