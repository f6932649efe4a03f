#pragma once

// Plain Eigen kernels shared by the differentiable ops and by tests.
// Everything here is templated on the scalar type of the input expression.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>

namespace raap {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-wise softmax with max subtraction.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Normalizes each row to zero mean and unit variance (biased estimate, `eps` added to the variance).
template <typename Derived>
RowMatrix<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x,
                                                   typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  const Scalar n = static_cast<Scalar>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    out.row(r) = (centered / std::sqrt(var + eps)).matrix();
  }
  return out;
}

/// Exact GELU, x * Phi(x).
template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
  return cdf + x * pdf;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// Cosine similarity; returns -inf when either vector has zero norm.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) {
    return -std::numeric_limits<Scalar>::infinity();
  }
  return a.dot(b) / (na * nb);
}

}  // namespace raap
