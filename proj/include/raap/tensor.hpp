#pragma once

// Dense f64 tensors (rank <= 2, row-major) with a reverse-mode gradient tape.
//
// Ops record onto the thread's active GradGraph (see GraphScope) whenever at
// least one operand requires a gradient. Without an active graph every op is
// evaluated eagerly and the result is a constant, which is how inference runs.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raap/kernels.hpp"

namespace raap {

using Matrix = RowMatrix<double>;

class GradGraph;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

}  // namespace detail

class Tensor {
 public:
  Tensor();

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v);
  static Tensor row(std::span<const double> values);

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  std::string shape_string() const;

  const Matrix& value() const { return node_->value; }
  /// Mutable access; only meaningful on leaves (parameters, constants).
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  /// Detached copy of the value; never records.
  Tensor detach() const { return constant(node_->value); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class GradGraph;
  friend Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
};

/// Ordered record of operations; backward walks it in reverse creation order.
class GradGraph {
 public:
  GradGraph() = default;
  GradGraph(const GradGraph&) = delete;
  GradGraph& operator=(const GradGraph&) = delete;

  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from `loss`.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;

  friend Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
};

/// Makes `graph` the active graph of the calling thread for the scope's lifetime.
class GraphScope {
 public:
  explicit GraphScope(GradGraph& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  GradGraph* previous_;
};

GradGraph* active_graph();

/// Runs backward on the active graph. Throws ContractError for non-scalar losses
/// or when no graph is active.
void backward(const Tensor& loss);

Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// -- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// -- elementwise (exact-shape or 1x1 scalar operands) -----------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }

// -- row broadcasting: `row` is 1 x cols(x) and applies to every row of x ----

Tensor add_row(const Tensor& x, const Tensor& row);
Tensor mul_row(const Tensor& x, const Tensor& row);

// -- reductions and normalizations -------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean_rows(const Tensor& x);
/// axis = 1 normalizes each row, axis = 0 each column.
Tensor softmax(const Tensor& x, int axis = 1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// -- structure ----------------------------------------------------------------

Tensor vstack(std::span<const Tensor> parts);
Tensor hstack(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count);
/// [x0 .. x0 x1 .. x1 ...]: every column of a 1 x K row repeated `times` times.
Tensor repeat_each(const Tensor& x, Eigen::Index times);

/// Multi-head scaled dot-product attention over already projected q [Nq x d],
/// k [Nk x d], v [Nk x d]. `key_bias` (1 x Nk) is added to the logits of every
/// query row and head.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                 const std::optional<Tensor>& key_bias = std::nullopt);

}  // namespace raap
