#pragma once

// Synthetic tabletop scenes.
//
// Each scene is a 48 x 48 image with four channels: object mask, handle
// mask (kHandleValue on handle pixels), and the cosine and sine of the object's orientation (written on
// object pixels only). A rectangular object (a disk for "pickup") sits near
// the image center with a 2 x 2 handle just outside its boundary along the
// orientation axis. Objects for "close" are drawn 4 px wider than the
// matching "open" object so the task is visible in the image.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "raap/image.hpp"
#include "raap/lifting.hpp"
#include "raap/memory.hpp"

namespace raap {

inline constexpr int kSceneSize = 48;
inline constexpr int kSceneChannels = 4;
inline constexpr int kHistogramBins = 8;
// Large enough that a handle pixel beats any body pixel under cosine
// matching against the 3 x 3 mean around the contact.
inline constexpr double kHandleValue = 2.0;
inline constexpr int kSceneEmbeddingDim = kSceneChannels + kHistogramBins;

enum SceneChannel : int { kMaskChannel = 0, kHandleChannel = 1, kCosChannel = 2, kSinChannel = 3 };

struct BenchmarkVariant {
  std::string name;
  double noise = 0.0;  // per-channel Gaussian std added to every pixel
  bool blind_query = false;  // query images lose orientation and handle cues

  static BenchmarkVariant noiseless() { return {"noiseless", 0.0, false}; }
  static BenchmarkVariant noisy() { return {"noisy", 0.05, false}; }
  static BenchmarkVariant reference_informative() { return {"reference-informative", 0.0, true}; }
  static BenchmarkVariant noisy_reference_informative() { return {"noisy-reference-informative", 0.05, true}; }

  /// Throws ConfigError for unknown names.
  static BenchmarkVariant parse(std::string_view name);
};

/// Tasks understood by the generator, in canonical order.
const std::vector<std::string>& scene_tasks();

struct Scene {
  std::string id;
  std::string task;
  double angle = 0.0;      // object orientation in [0, 2 pi)
  FeatureImage image;      // what a query sees (noisy, possibly blinded)
  FeatureImage reference;  // what the memory stores (noisy, never blinded)
  DepthMap<double> depth;
  Intrinsics<double> intrinsics;
  Affordance2D gt;
  Eigen::VectorXd embedding;  // from the clean, unblinded rendering

  MemoryEntry query_entry() const { return {id, task, image, embedding, gt}; }
  MemoryEntry memory_entry() const { return {id, task, reference, embedding, gt}; }
};

/// Channel means followed by an 8-bin soft orientation histogram over object pixels.
Eigen::VectorXd scene_embedding(const FeatureImage& clean);

/// Free parameters of one scene.
struct SceneGeometry {
  double angle = 0.0;  // radians
  Eigen::Vector2d center{23.5, 23.5};
  double half_length = 10.0;  // rectangle, along the orientation axis
  double half_width = 4.0;    // rectangle, before the "close" widening
  double radius = 8.0;        // disk ("pickup")
  double jitter = 0.0;        // radians, "pickup" direction offset
  double plane_depth = 1.0;   // meters
};

/// Geometry drawn from `seed`; every field is drawn whatever the task.
SceneGeometry sample_geometry(std::uint64_t seed);

/// Renders a scene from explicit geometry; `noise_seed` drives the pixel noise.
Scene render_scene(std::string_view task, const SceneGeometry& geometry, const BenchmarkVariant& variant,
                   std::uint64_t noise_seed, std::string id);

/// Deterministic in (task, seed, variant). Throws ConfigError for unknown tasks.
Scene generate_scene(std::string_view task, std::uint64_t seed, const BenchmarkVariant& variant,
                     std::string id = {});

struct SceneSplit {
  std::vector<Scene> train;
  std::vector<Scene> test;
  Memory memory;  // reference views of the training scenes

  std::vector<MemoryEntry> train_queries() const;
  std::vector<MemoryEntry> test_queries() const;
};

/// n_train and n_test scenes per task with disjoint ids ("<task>-train-0007").
SceneSplit generate_split(int n_train, int n_test, const std::vector<std::string>& tasks, std::uint64_t seed,
                          const BenchmarkVariant& variant);

}  // namespace raap
