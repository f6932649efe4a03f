#include "raap/model.hpp"

#include <array>
#include <cmath>

#include "raap/errors.hpp"

namespace raap {

std::string to_string(WeightingRule rule) {
  switch (rule) {
    case WeightingRule::kFull:
      return "full";
    case WeightingRule::kNoGating:
      return "no_gating";
    case WeightingRule::kNoSimilarity:
      return "no_similarity";
    case WeightingRule::kUniform:
      return "uniform";
  }
  return "?";
}

std::string to_string(AttentionCoupling coupling) {
  return coupling == AttentionCoupling::kLogBias ? "log_bias" : "per_reference";
}

WeightingRule parse_weighting_rule(std::string_view name) {
  for (const auto rule :
       {WeightingRule::kFull, WeightingRule::kNoGating, WeightingRule::kNoSimilarity, WeightingRule::kUniform}) {
    if (name == to_string(rule)) {
      return rule;
    }
  }
  throw ConfigError("unknown weighting rule '" + std::string(name) +
                    "' (expected full, no_gating, no_similarity or uniform)");
}

AttentionCoupling parse_attention_coupling(std::string_view name) {
  if (name == "log_bias") {
    return AttentionCoupling::kLogBias;
  }
  if (name == "per_reference") {
    return AttentionCoupling::kPerReference;
  }
  throw ConfigError("unknown attention coupling '" + std::string(name) + "' (expected log_bias or per_reference)");
}

void ModelConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) {
      throw ConfigError("model config: " + what);
    }
  };
  require(image_height > 0 && image_width > 0 && channels > 0, "image dimensions must be positive");
  require(patch > 0, "patch must be positive");
  require(patch_pool > 0 && patch % patch_pool == 0, "patch_pool must divide patch");
  require(image_height % patch == 0 && image_width % patch == 0, "image dimensions must be divisible by patch");
  require(d > 0 && n_heads > 0 && d % n_heads == 0, "d must be a positive multiple of n_heads");
  require(d_ff > 0 && film_hidden > 0 && gate_hidden > 0 && head_hidden > 0, "hidden sizes must be positive");
  require(n_layers >= 1, "n_layers must be at least 1");
  require(k_max >= 1, "k_max must be at least 1");
  require(eps > 0.0, "eps must be positive");
  require(embedding_dim > 0, "embedding_dim must be positive");
}

// ---------------------------------------------------------------------------

Tensor global_pool(const Tensor& tokens) { return mean_rows(tokens); }

Tensor dual_weights(const Tensor& similarities, const Tensor& gates, double eps, WeightingRule rule) {
  if (similarities.rows() != 1 || similarities.cols() < 1) {
    throw DimensionError("dual_weights: similarities must be a non-empty row, got " + similarities.shape_string());
  }
  if (!similarities.value().allFinite()) {
    throw NumericError("dual_weights: non-finite similarity");
  }
  if (!(eps > 0.0)) {
    throw ContractError("dual_weights: eps must be positive");
  }
  const Eigen::Index k = similarities.cols();
  const auto normalize = [eps](const Tensor& numer) { return div(numer, add_scalar(sum(numer), eps)); };
  switch (rule) {
    case WeightingRule::kUniform:
      return Tensor::constant(Matrix::Constant(1, k, 1.0 / static_cast<double>(k)));
    case WeightingRule::kNoGating:
      return normalize(softmax(similarities, 1));
    case WeightingRule::kNoSimilarity:
    case WeightingRule::kFull: {
      if (gates.rows() != 1 || gates.cols() != k) {
        throw DimensionError("dual_weights: gates " + gates.shape_string() + " do not match similarities " +
                             similarities.shape_string());
      }
      const Tensor prior = rule == WeightingRule::kFull
                               ? softmax(similarities, 1)
                               : Tensor::constant(Matrix::Constant(1, k, 1.0 / static_cast<double>(k)));
      return normalize(mul(prior, gates));
    }
  }
  throw ContractError("dual_weights: unknown rule");
}

Tensor direction_loss(const Tensor& raw, const Eigen::Vector2d& target) {
  if (raw.rows() != 1 || raw.cols() != 2) {
    throw DimensionError("direction_loss expects a 1 x 2 prediction, got " + raw.shape_string());
  }
  Matrix t(1, 2);
  t << target.x(), target.y();
  return scale(sum(square(sub(raw, Tensor::constant(std::move(t))))), 0.5);
}

// ---------------------------------------------------------------------------

namespace {

Matrix random_normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dist(rng);
  }
  return m;
}

}  // namespace

Tensor AlignmentModel::add_parameter(std::string name, Matrix value) {
  Tensor t = Tensor::parameter(std::move(value));
  params_.push_back({std::move(name), t});
  return t;
}

AlignmentModel::Linear AlignmentModel::make_linear(const std::string& name, int in, int out, double scale, bool bias,
                                                   std::mt19937_64& rng) {
  Linear layer;
  layer.w = add_parameter(name + ".w", random_normal(in, out, scale / std::sqrt(static_cast<double>(in)), rng));
  layer.has_bias = bias;
  if (bias) {
    layer.b = add_parameter(name + ".b", Matrix::Zero(1, out));
  }
  return layer;
}

AlignmentModel::AlignmentModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.d;
  const double residual_scale = 1.0 / std::sqrt(2.0 * config_.n_layers);

  patch_proj_ = make_linear("encoder.proj", config_.patch_dim(), d, 1.0, true, rng);
  pos_embed_ = add_parameter("encoder.pos", random_normal(config_.tokens(), d, 0.02, rng));

  film1_ = make_linear("film.l1", 2, config_.film_hidden, 1.0, true, rng);
  // Small output layer: gamma starts near 1 and beta near 0.
  film2_ = make_linear("film.l2", config_.film_hidden, 2 * d, 0.1, true, rng);
  ref_id_ = add_parameter("ref_id", random_normal(config_.k_max, d, 0.02, rng));

  gate1_ = make_linear("gate.l1", 2 * d, config_.gate_hidden, 1.0, true, rng);
  gate2_ = make_linear("gate.l2", config_.gate_hidden, 1, 1.0, true, rng);

  cross_q_ = make_linear("cross.q", d, d, 1.0, true, rng);
  // Keys carry no bias: a per-row constant logit shift has no effect on attention.
  cross_k_ = make_linear("cross.k", d, d, 1.0, false, rng);
  cross_v_ = make_linear("cross.v", d, d, 1.0, true, rng);
  cross_o_ = make_linear("cross.o", d, d, 1.0, true, rng);

  cls_ = add_parameter("cls", random_normal(1, d, 0.02, rng));

  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    Block b;
    b.ln1_g = add_parameter(p + "ln1.g", Matrix::Ones(1, d));
    b.ln1_b = add_parameter(p + "ln1.b", Matrix::Zero(1, d));
    b.q = make_linear(p + "attn.q", d, d, 1.0, true, rng);
    b.k = make_linear(p + "attn.k", d, d, 1.0, false, rng);
    b.v = make_linear(p + "attn.v", d, d, 1.0, true, rng);
    b.o = make_linear(p + "attn.o", d, d, residual_scale, true, rng);
    b.ln2_g = add_parameter(p + "ln2.g", Matrix::Ones(1, d));
    b.ln2_b = add_parameter(p + "ln2.b", Matrix::Zero(1, d));
    b.ff1 = make_linear(p + "ff1", d, config_.d_ff, 1.0, true, rng);
    b.ff2 = make_linear(p + "ff2", config_.d_ff, d, residual_scale, true, rng);
    blocks_.push_back(std::move(b));
  }
  final_ln_g_ = add_parameter("final_ln.g", Matrix::Ones(1, d));
  final_ln_b_ = add_parameter("final_ln.b", Matrix::Zero(1, d));
  head1_ = make_linear("head.l1", d, config_.head_hidden, 1.0, true, rng);
  head2_ = make_linear("head.l2", config_.head_hidden, 2, 1.0, true, rng);
}

AlignmentModel AlignmentModel::clone() const {
  AlignmentModel copy(config_, 0);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    copy.params_[i].tensor.mutable_value() = params_[i].tensor.value();
  }
  return copy;
}

std::vector<Tensor> AlignmentModel::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) {
    out.push_back(p.tensor);
  }
  return out;
}

std::size_t AlignmentModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    n += static_cast<std::size_t>(p.tensor.size());
  }
  return n;
}

Tensor& AlignmentModel::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) {
      return p.tensor;
    }
  }
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Tensor& AlignmentModel::parameter(std::string_view name) const {
  return const_cast<AlignmentModel*>(this)->parameter(name);
}

void AlignmentModel::zero_grad() {
  for (auto& p : params_) {
    p.tensor.zero_grad();
  }
}

bool AlignmentModel::all_finite() const {
  for (const auto& p : params_) {
    if (!p.tensor.value().allFinite()) {
      return false;
    }
  }
  return true;
}

Tensor AlignmentModel::apply(const Linear& layer, const Tensor& x) const {
  Tensor y = matmul(x, layer.w);
  return layer.has_bias ? add_row(y, layer.b) : y;
}

Tensor AlignmentModel::encode_patches(const FeatureImage& image) const {
  const int p = config_.patch;
  if (image.height % p != 0 || image.width % p != 0) {
    throw ContractError("encode_patches: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        " is not divisible by patch " + std::to_string(p));
  }
  if (image.height != config_.image_height || image.width != config_.image_width ||
      image.channels() != config_.channels) {
    throw DimensionError("encode_patches: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         "x" + std::to_string(image.channels()) + " does not match model input " +
                         std::to_string(config_.image_height) + "x" + std::to_string(config_.image_width) + "x" +
                         std::to_string(config_.channels));
  }
  const int grid_w = image.width / p;
  const int c = image.channels();
  const int pool = config_.patch_pool;
  const int cells = p / pool;
  const double inv_area = 1.0 / (pool * pool);
  Matrix patches = Matrix::Zero(config_.tokens(), config_.patch_dim());
  for (int py = 0; py < image.height / p; ++py) {
    for (int px = 0; px < grid_w; ++px) {
      auto row = patches.row(py * grid_w + px);
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          row.segment(((dy / pool) * cells + dx / pool) * c, c) += inv_area * image.pixel(px * p + dx, py * p + dy);
        }
      }
    }
  }
  return add(apply(patch_proj_, Tensor::constant(std::move(patches))), pos_embed_);
}

std::pair<Tensor, Tensor> AlignmentModel::film_parameters(const Eigen::Vector2d& direction) const {
  if (std::abs(direction.norm() - 1.0) > 1e-6) {
    throw ContractError("film_modulate: action direction must be unit length");
  }
  Matrix a(1, 2);
  a << direction.x(), direction.y();
  const Tensor hidden = gelu(apply(film1_, Tensor::constant(std::move(a))));
  const Tensor out = apply(film2_, hidden);
  const int d = config_.d;
  return {add_scalar(slice_cols(out, 0, d), 1.0), slice_cols(out, d, d)};
}

Tensor AlignmentModel::film_modulate(const Tensor& tokens, const Eigen::Vector2d& direction) const {
  const auto [gamma, beta] = film_parameters(direction);
  return add_row(mul_row(tokens, gamma), beta);
}

Tensor AlignmentModel::add_ref_id(const Tensor& tokens, int slot) const {
  if (slot < 0 || slot >= config_.k_max) {
    throw ContractError("reference slot " + std::to_string(slot) + " outside [0, " + std::to_string(config_.k_max) +
                        ")");
  }
  return add_row(tokens, slice_rows(ref_id_, slot, 1));
}

Tensor AlignmentModel::gate(const Tensor& query_pooled, const Tensor& reference_pooled) const {
  const std::array<Tensor, 2> parts{query_pooled, reference_pooled};
  const Tensor hidden = gelu(apply(gate1_, hstack(parts)));
  return sigmoid(apply(gate2_, hidden));
}

Tensor AlignmentModel::gated_cross_attention(const Tensor& query_tokens, std::span<const Tensor> references,
                                             const Tensor& weights) const {
  if (references.empty()) {
    return query_tokens;
  }
  if (static_cast<int>(references.size()) > config_.k_max) {
    throw ContractError("gated_cross_attention: more references than k_max");
  }
  if (weights.rows() != 1 || weights.cols() != static_cast<Eigen::Index>(references.size())) {
    throw DimensionError("gated_cross_attention: weights " + weights.shape_string() + " for " +
                         std::to_string(references.size()) + " references");
  }
  const Eigen::Index per_ref = references.front().rows();
  for (const auto& r : references) {
    if (r.rows() != per_ref) {
      throw DimensionError("gated_cross_attention: references differ in token count");
    }
  }
  const Tensor q = apply(cross_q_, query_tokens);
  Tensor mixed;
  if (config_.coupling == AttentionCoupling::kLogBias) {
    const Tensor memory = vstack(references);
    const Tensor bias = log(add_scalar(repeat_each(weights, per_ref), 1e-12));
    mixed = attention(q, apply(cross_k_, memory), apply(cross_v_, memory), config_.n_heads, bias);
  } else {
    for (std::size_t i = 0; i < references.size(); ++i) {
      const Tensor out = attention(q, apply(cross_k_, references[i]), apply(cross_v_, references[i]),
                                   config_.n_heads);
      const Tensor term = mul(out, slice_cols(weights, static_cast<Eigen::Index>(i), 1));
      mixed = i == 0 ? term : add(mixed, term);
    }
  }
  return add(query_tokens, apply(cross_o_, mixed));
}

Tensor AlignmentModel::self_attention(const Block& block, const Tensor& x) const {
  const Tensor h = layer_norm(x, block.ln1_g, block.ln1_b);
  const Tensor att = attention(apply(block.q, h), apply(block.k, h), apply(block.v, h), config_.n_heads);
  return add(x, apply(block.o, att));
}

Tensor AlignmentModel::regress(const Tensor& fused) const {
  const std::array<Tensor, 2> parts{cls_, fused};
  Tensor x = vstack(parts);
  for (const auto& block : blocks_) {
    x = self_attention(block, x);
    const Tensor h = layer_norm(x, block.ln2_g, block.ln2_b);
    x = add(x, apply(block.ff2, gelu(apply(block.ff1, h))));
  }
  const Tensor cls_out = layer_norm(slice_rows(x, 0, 1), final_ln_g_, final_ln_b_);
  return apply(head2_, gelu(apply(head1_, cls_out)));
}

Prediction AlignmentModel::predict(const FeatureImage& query, std::span<const ReferenceInput> references,
                                   ForwardTrace* trace) const {
  if (static_cast<int>(references.size()) > config_.k_max) {
    throw ContractError("predict: " + std::to_string(references.size()) + " references exceed k_max " +
                        std::to_string(config_.k_max));
  }
  const Tensor query_tokens = encode_patches(query);
  std::vector<Tensor> ref_tokens;
  Tensor weights;
  Tensor gates;
  if (!references.empty()) {
    const bool use_gate =
        config_.weighting == WeightingRule::kFull || config_.weighting == WeightingRule::kNoSimilarity;
    const Tensor query_pooled = use_gate ? global_pool(query_tokens) : Tensor();
    std::vector<Tensor> gate_values;
    std::vector<double> sims;
    for (const auto& ref : references) {
      Tensor tokens = add_ref_id(film_modulate(encode_patches(ref.image.get()), ref.direction), ref.slot);
      if (use_gate) {
        gate_values.push_back(gate(query_pooled, global_pool(tokens)));
      }
      ref_tokens.push_back(std::move(tokens));
      sims.push_back(ref.similarity);
    }
    if (use_gate) {
      gates = hstack(gate_values);
    }
    weights = dual_weights(Tensor::row(sims), gates, config_.eps, config_.weighting);
  }
  const Tensor fused = gated_cross_attention(query_tokens, ref_tokens, weights);
  Prediction out;
  out.raw = regress(fused);
  const Eigen::Vector2d raw(out.raw.value()(0, 0), out.raw.value()(0, 1));
  const double n = raw.norm();
  out.degenerate = !(n >= 1e-12);
  out.direction = out.degenerate ? Eigen::Vector2d::Zero() : Eigen::Vector2d(raw / n);
  if (trace != nullptr) {
    trace->query_tokens = query_tokens;
    trace->reference_tokens = std::move(ref_tokens);
    trace->gates = gates;
    trace->weights = weights;
    trace->fused = fused;
  }
  return out;
}

}  // namespace raap
