#include "raap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "raap/errors.hpp"

namespace raap {

namespace {

thread_local GradGraph* t_active_graph = nullptr;

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

bool is_scalar(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

// Sum of a gradient over the broadcast dimensions of a scalar operand.
Matrix reduce_like(const Matrix& g, const Matrix& target) {
  if (g.rows() == target.rows() && g.cols() == target.cols()) {
    return g;
  }
  Matrix out(1, 1);
  out(0, 0) = g.sum();
  return out;
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast check_elementwise(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return Broadcast::kSame;
  }
  if (is_scalar(b)) {
    return Broadcast::kRightScalar;
  }
  if (is_scalar(a)) {
    return Broadcast::kLeftScalar;
  }
  shape_mismatch(op, a, b);
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) {
    return m;
  }
  return Matrix::Constant(rows, cols, m(0, 0));
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  Matrix out = x.value().unaryExpr(f);
  return make_result(std::move(out), {x}, [df](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      in.accumulate(self.grad.cwiseProduct(in.value.unaryExpr(df)));
    }
  });
}

}  // namespace

void detail::Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::row(std::span<const double> values) {
  Matrix m(1, static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    m(0, static_cast<Eigen::Index>(i)) = values[i];
  }
  return constant(std::move(m));
}

std::string Tensor::shape_string() const { return shape_of(node_->value); }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string());
  }
  return node_->value(0, 0);
}

Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  GradGraph* graph = t_active_graph;
  bool needs_grad = false;
  for (const auto& in : inputs) {
    needs_grad = needs_grad || in.requires_grad();
  }
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  if (graph != nullptr && needs_grad) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) {
      node->parents.push_back(in.node_);
    }
    node->backward = std::move(backward);
    graph->nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

void GradGraph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + loss.shape_string());
  }
  const auto& root = loss.node();
  if (root->is_leaf) {
    if (root->requires_grad) {
      root->accumulate(Matrix::Ones(1, 1));
    }
    return;
  }
  std::ptrdiff_t start = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    if (nodes_[static_cast<std::size_t>(i)] == root) {
      start = i;
      break;
    }
  }
  if (start < 0) {
    throw ContractError("backward: loss was not recorded on this graph");
  }
  root->accumulate(Matrix::Ones(1, 1));
  for (std::ptrdiff_t i = start; i >= 0; --i) {
    auto& node = *nodes_[static_cast<std::size_t>(i)];
    if (node.grad.size() == 0) {
      continue;
    }
    node.backward(node);
    node.grad.resize(0, 0);
  }
}

GraphScope::GraphScope(GradGraph& graph) : previous_(t_active_graph) { t_active_graph = &graph; }

GraphScope::~GraphScope() { t_active_graph = previous_; }

GradGraph* active_graph() { return t_active_graph; }

void backward(const Tensor& loss) {
  if (t_active_graph == nullptr) {
    throw ContractError("backward: no active gradient graph");
  }
  t_active_graph->backward(loss);
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    shape_mismatch("matmul", a, b);
  }
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    if (lhs.requires_grad) {
      lhs.accumulate(self.grad * rhs.value.transpose());
    }
    if (rhs.requires_grad) {
      rhs.accumulate(lhs.value.transpose() * self.grad);
    }
  });
}

Tensor transpose(const Tensor& x) {
  Matrix out = x.value().transpose();
  return make_result(std::move(out), {x}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      in.accumulate(self.grad.transpose());
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = check_elementwise("add", a, b);
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  Matrix out = expand(a.value(), r, c) + expand(b.value(), r, c);
  (void)mode;
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        p->accumulate(reduce_like(self.grad, p->value));
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_elementwise("sub", a, b);
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  Matrix out = expand(a.value(), r, c) - expand(b.value(), r, c);
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    if (lhs.requires_grad) {
      lhs.accumulate(reduce_like(self.grad, lhs.value));
    }
    if (rhs.requires_grad) {
      rhs.accumulate(reduce_like(-self.grad, rhs.value));
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_elementwise("mul", a, b);
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  Matrix out = expand(a.value(), r, c).cwiseProduct(expand(b.value(), r, c));
  return make_result(std::move(out), {a, b}, [r, c](detail::Node& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    if (lhs.requires_grad) {
      lhs.accumulate(reduce_like(self.grad.cwiseProduct(expand(rhs.value, r, c)), lhs.value));
    }
    if (rhs.requires_grad) {
      rhs.accumulate(reduce_like(self.grad.cwiseProduct(expand(lhs.value, r, c)), rhs.value));
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_elementwise("div", a, b);
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  Matrix out = expand(a.value(), r, c).cwiseQuotient(expand(b.value(), r, c));
  return make_result(std::move(out), {a, b}, [r, c](detail::Node& self) {
    auto& lhs = *self.parents[0];
    auto& rhs = *self.parents[1];
    const Matrix denom = expand(rhs.value, r, c);
    if (lhs.requires_grad) {
      lhs.accumulate(reduce_like(self.grad.cwiseQuotient(denom), lhs.value));
    }
    if (rhs.requires_grad) {
      const Matrix numer = expand(lhs.value, r, c);
      Matrix g = -(self.grad.array() * numer.array() / denom.array().square()).matrix();
      rhs.accumulate(reduce_like(g, rhs.value));
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  Matrix out = x.value() * c;
  return make_result(std::move(out), {x}, [c](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      in.accumulate(self.grad * c);
    }
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  Matrix out = x.value().array() + c;
  return make_result(std::move(out), {x}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      in.accumulate(self.grad);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Matrix out = x.value().unaryExpr([](double v) { return raap::sigmoid(v); });
  Matrix s = out;
  return make_result(std::move(out), {x}, [s = std::move(s)](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      in.accumulate((self.grad.array() * s.array() * (1.0 - s.array())).matrix());
    }
  });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return raap::gelu(v); }, [](double v) { return gelu_derivative(v); });
}

Tensor log(const Tensor& x) {
  if ((x.value().array() <= 0.0).any()) {
    throw NumericError("log of non-positive value");
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    shape_mismatch("add_row", x, row);
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {x, row}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    auto& r = *self.parents[1];
    if (in.requires_grad) {
      in.accumulate(self.grad);
    }
    if (r.requires_grad) {
      r.accumulate(self.grad.colwise().sum());
    }
  });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    shape_mismatch("mul_row", x, row);
  }
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(out), {x, row}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    auto& r = *self.parents[1];
    if (in.requires_grad) {
      in.accumulate((self.grad.array().rowwise() * r.value.row(0).array()).matrix());
    }
    if (r.requires_grad) {
      r.accumulate(self.grad.cwiseProduct(in.value).colwise().sum());
    }
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_result(std::move(out), {x}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      in.accumulate(Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rows() < 1) {
    throw ContractError("mean_rows of an empty tensor");
  }
  const double n = static_cast<double>(x.rows());
  Matrix out = x.value().colwise().sum() / n;
  return make_result(std::move(out), {x}, [n](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      Matrix g = self.grad.replicate(in.value.rows(), 1) / n;
      in.accumulate(g);
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1) {
    throw ContractError("softmax axis must be 0 or 1");
  }
  if (!x.value().allFinite()) {
    throw NumericError("softmax of non-finite input");
  }
  Matrix out = axis == 1 ? softmax_rows(x.value()) : Matrix(softmax_rows(x.value().transpose()).transpose());
  Matrix p = out;
  return make_result(std::move(out), {x}, [p = std::move(p), axis](detail::Node& self) {
    auto& in = *self.parents[0];
    if (!in.requires_grad) {
      return;
    }
    const Matrix gp = self.grad.cwiseProduct(p);
    if (axis == 1) {
      const Eigen::VectorXd dots = gp.rowwise().sum();
      Matrix g = gp - (p.array().colwise() * dots.array()).matrix();
      in.accumulate(g);
    } else {
      const Eigen::RowVectorXd dots = gp.colwise().sum();
      Matrix g = gp - (p.array().rowwise() * dots.array()).matrix();
      in.accumulate(g);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Eigen::Index d = x.cols();
  if (d < 1) {
    throw ContractError("layer_norm needs at least one feature");
  }
  if (gain.rows() != 1 || gain.cols() != d) {
    shape_mismatch("layer_norm gain", x, gain);
  }
  if (bias.rows() != 1 || bias.cols() != d) {
    shape_mismatch("layer_norm bias", x, bias);
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), d);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const auto centered = (xv.row(r).array() - mean).eval();
    const double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  return make_result(std::move(out), {x, gain, bias},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                       auto& in = *self.parents[0];
                       auto& g = *self.parents[1];
                       auto& b = *self.parents[2];
                       if (g.requires_grad) {
                         g.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                       }
                       if (b.requires_grad) {
                         b.accumulate(self.grad.colwise().sum());
                       }
                       if (in.requires_grad) {
                         const double n = static_cast<double>(xhat.cols());
                         const Matrix dxhat = (self.grad.array().rowwise() * g.value.row(0).array()).matrix();
                         Matrix dx(xhat.rows(), xhat.cols());
                         for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                           const double mean_d = dxhat.row(r).sum() / n;
                           const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / n;
                           dx.row(r) = inv_std(r) *
                                       (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
                         }
                         in.accumulate(dx);
                       }
                     });
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw ContractError("vstack of zero tensors");
  }
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      shape_mismatch("vstack", parts[0], p);
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (p.requires_grad) {
        p.accumulate(self.grad.middleRows(offsets[i], p.value.rows()));
      }
    }
  });
}

Tensor hstack(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw ContractError("hstack of zero tensors");
  }
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      shape_mismatch("hstack", parts[0], p);
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (p.requires_grad) {
        p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
      }
    }
  });
}

Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") out of range for " + x.shape_string());
  }
  Matrix out = x.value().middleRows(start, count);
  return make_result(std::move(out), {x}, [start, count](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
      g.middleRows(start, count) = self.grad;
      in.accumulate(g);
    }
  });
}

Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") out of range for " + x.shape_string());
  }
  Matrix out = x.value().middleCols(start, count);
  return make_result(std::move(out), {x}, [start, count](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
      g.middleCols(start, count) = self.grad;
      in.accumulate(g);
    }
  });
}

Tensor repeat_each(const Tensor& x, Eigen::Index times) {
  if (x.rows() != 1 || times < 1) {
    throw DimensionError("repeat_each expects a 1 x K row, got " + x.shape_string());
  }
  const Eigen::Index k = x.cols();
  Matrix out(1, k * times);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.middleCols(j * times, times).setConstant(x.value()(0, j));
  }
  return make_result(std::move(out), {x}, [k, times](detail::Node& self) {
    auto& in = *self.parents[0];
    if (in.requires_grad) {
      Matrix g(1, k);
      for (Eigen::Index j = 0; j < k; ++j) {
        g(0, j) = self.grad.middleCols(j * times, times).sum();
      }
      in.accumulate(g);
    }
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                 const std::optional<Tensor>& key_bias) {
  if (q.cols() != k.cols()) {
    shape_mismatch("attention q/k", q, k);
  }
  if (k.rows() != v.rows() || k.cols() != v.cols()) {
    shape_mismatch("attention k/v", k, v);
  }
  if (n_heads < 1 || q.cols() % n_heads != 0) {
    throw DimensionError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  if (key_bias && (key_bias->rows() != 1 || key_bias->cols() != k.rows())) {
    shape_mismatch("attention key_bias", k, *key_bias);
  }
  const Eigen::Index dh = q.cols() / n_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();

  Matrix out(q.rows(), q.cols());
  std::vector<Matrix> probs(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Matrix logits = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * inv_scale;
    if (key_bias) {
      logits.rowwise() += key_bias->value().row(0);
    }
    probs[static_cast<std::size_t>(h)] = softmax_rows(logits);
    out.middleCols(h * dh, dh) = probs[static_cast<std::size_t>(h)] * vv.middleCols(h * dh, dh);
  }

  std::vector<Tensor> inputs{q, k, v};
  if (key_bias) {
    inputs.push_back(*key_bias);
  }
  return make_result(
      std::move(out), std::move(inputs),
      [probs = std::move(probs), dh, inv_scale, n_heads](detail::Node& self) {
        auto& qn = *self.parents[0];
        auto& kn = *self.parents[1];
        auto& vn = *self.parents[2];
        detail::Node* bn = self.parents.size() > 3 ? self.parents[3].get() : nullptr;
        Matrix dq = Matrix::Zero(qn.value.rows(), qn.value.cols());
        Matrix dk = Matrix::Zero(kn.value.rows(), kn.value.cols());
        Matrix dv = Matrix::Zero(vn.value.rows(), vn.value.cols());
        Matrix dbias = Matrix::Zero(1, kn.value.rows());
        for (int h = 0; h < n_heads; ++h) {
          const Matrix& p = probs[static_cast<std::size_t>(h)];
          const auto go = self.grad.middleCols(h * dh, dh);
          dv.middleCols(h * dh, dh) = p.transpose() * go;
          const Matrix dp = go * vn.value.middleCols(h * dh, dh).transpose();
          const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
          const Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix();
          dq.middleCols(h * dh, dh) = (ds * kn.value.middleCols(h * dh, dh)) * inv_scale;
          dk.middleCols(h * dh, dh) = (ds.transpose() * qn.value.middleCols(h * dh, dh)) * inv_scale;
          dbias += ds.colwise().sum();
        }
        if (qn.requires_grad) {
          qn.accumulate(dq);
        }
        if (kn.requires_grad) {
          kn.accumulate(dk);
        }
        if (vn.requires_grad) {
          vn.accumulate(dv);
        }
        if (bn != nullptr && bn->requires_grad) {
          bn->accumulate(dbias);
        }
      });
}

}  // namespace raap
