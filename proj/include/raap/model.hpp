#pragma once

// Retrieval-augmented direction predictor.
//
// Query and reference images share one patch encoder. Each reference is
// conditioned on its action direction through FiLM, tagged with a learned
// slot embedding, and weighted by a combination of retrieval similarity and a
// learned relevance gate. Query tokens attend over the concatenated reference
// tokens; the fused sequence, prefixed with a CLS token, runs through a
// pre-norm transformer encoder and the CLS output is regressed to (x, y).

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "raap/image.hpp"
#include "raap/tensor.hpp"

namespace raap {

/// How retrieval similarity and gate values combine into per-reference weights.
enum class WeightingRule {
  kFull,          // softmax(s) * gate, normalized with eps
  kNoGating,      // gate fixed to 1
  kNoSimilarity,  // softmax(s) replaced by 1/K
  kUniform,       // exactly 1/K
};

/// How the per-reference weights enter the attention over concatenated tokens.
enum class AttentionCoupling {
  kLogBias,       // log(w_k + 1e-12) added to the logits of reference k's keys
  kPerReference,  // attention per reference, outputs mixed by w_k
};

std::string to_string(WeightingRule rule);
std::string to_string(AttentionCoupling coupling);
/// Throws ConfigError on unknown names.
WeightingRule parse_weighting_rule(std::string_view name);
AttentionCoupling parse_attention_coupling(std::string_view name);

struct ModelConfig {
  int image_height = 48;
  int image_width = 48;
  int channels = 4;
  int patch = 8;
  int patch_pool = 1;  // pixels are averaged over pool x pool cells inside each patch
  int d = 32;
  int n_heads = 4;
  int d_ff = 64;
  int n_layers = 6;
  int k_max = 4;
  int film_hidden = 32;
  int gate_hidden = 32;
  int head_hidden = 32;
  double eps = 1e-8;
  int embedding_dim = 12;
  WeightingRule weighting = WeightingRule::kFull;
  AttentionCoupling coupling = AttentionCoupling::kLogBias;

  /// Patches per image; queries and references share the image geometry.
  int tokens() const { return (image_height / patch) * (image_width / patch); }
  int patch_dim() const { return (patch / patch_pool) * (patch / patch_pool) * channels; }
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// One retrieved reference as seen by the model. `slot` selects the
/// reference-ID embedding (0-based, < k_max).
struct ReferenceInput {
  std::reference_wrapper<const FeatureImage> image;
  Eigen::Vector2d direction;
  double similarity = 0.0;
  int slot = 0;
};

struct Prediction {
  Tensor raw;                 // 1 x 2, unnormalized
  Eigen::Vector2d direction;  // raw / |raw|; zero when degenerate
  bool degenerate = false;    // |raw| < 1e-12
};

/// Intermediate values of one forward pass, exposed for inspection.
struct ForwardTrace {
  Tensor query_tokens;
  std::vector<Tensor> reference_tokens;  // after FiLM and slot embedding
  Tensor gates;                          // 1 x K (empty when unused)
  Tensor weights;                        // 1 x K final weights
  Tensor fused;                          // N_q x d
};

Tensor global_pool(const Tensor& tokens);

/// Final per-reference weights. `similarities` and `gates` are 1 x K rows.
/// Throws NumericError for non-finite similarities.
Tensor dual_weights(const Tensor& similarities, const Tensor& gates, double eps,
                    WeightingRule rule = WeightingRule::kFull);

/// 0.5 * |raw - target|^2.
Tensor direction_loss(const Tensor& raw, const Eigen::Vector2d& target);

class AlignmentModel {
 public:
  /// Randomly initialized parameters; the draw is a pure function of (config, seed).
  AlignmentModel(ModelConfig config, std::uint64_t seed);
  AlignmentModel(const AlignmentModel&) = delete;
  AlignmentModel& operator=(const AlignmentModel&) = delete;
  AlignmentModel(AlignmentModel&&) = default;
  AlignmentModel& operator=(AlignmentModel&&) = default;

  /// Deep copy with independent parameter storage.
  AlignmentModel clone() const;

  const ModelConfig& config() const { return config_; }
  /// Weighting is parameter-free, so a trained model can be evaluated under any rule.
  void set_weighting(WeightingRule rule) { config_.weighting = rule; }
  std::span<NamedParameter> parameters() { return params_; }
  std::span<const NamedParameter> parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  /// Throws ConfigError for unknown names.
  Tensor& parameter(std::string_view name);
  const Tensor& parameter(std::string_view name) const;
  void zero_grad();
  bool all_finite() const;

  /// N x d tokens: patch projection plus positional embeddings.
  Tensor encode_patches(const FeatureImage& image) const;
  /// (gamma, beta), each 1 x d.
  std::pair<Tensor, Tensor> film_parameters(const Eigen::Vector2d& direction) const;
  Tensor film_modulate(const Tensor& tokens, const Eigen::Vector2d& direction) const;
  Tensor add_ref_id(const Tensor& tokens, int slot) const;
  /// Relevance in (0, 1) from pooled query and reference features (1 x d each).
  Tensor gate(const Tensor& query_pooled, const Tensor& reference_pooled) const;
  /// F_q plus attention output over the concatenated references. K = 0 returns F_q.
  Tensor gated_cross_attention(const Tensor& query_tokens, std::span<const Tensor> references,
                               const Tensor& weights) const;
  /// Transformer stack and regression head on a fused token sequence.
  Tensor regress(const Tensor& fused) const;

  Prediction predict(const FeatureImage& query, std::span<const ReferenceInput> references,
                     ForwardTrace* trace = nullptr) const;

 private:
  struct Linear {
    Tensor w;
    Tensor b;  // empty handle when bias-free
    bool has_bias = true;
  };
  struct Block {
    Tensor ln1_g, ln1_b;
    Linear q, k, v, o;
    Tensor ln2_g, ln2_b;
    Linear ff1, ff2;
  };

  Tensor add_parameter(std::string name, Matrix value);
  Linear make_linear(const std::string& name, int in, int out, double scale, bool bias, std::mt19937_64& rng);
  Tensor apply(const Linear& layer, const Tensor& x) const;
  Tensor self_attention(const Block& block, const Tensor& x) const;

  ModelConfig config_;
  std::vector<NamedParameter> params_;

  Linear patch_proj_;
  Tensor pos_embed_;
  Linear film1_, film2_;
  Tensor ref_id_;
  Linear gate1_, gate2_;
  Linear cross_q_, cross_k_, cross_v_, cross_o_;
  Tensor cls_;
  std::vector<Block> blocks_;
  Tensor final_ln_g_, final_ln_b_;
  Linear head1_, head2_;
};

}  // namespace raap
