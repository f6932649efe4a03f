#include "raap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "raap/errors.hpp"

namespace raap {

namespace {

double eval_loss(const std::function<Tensor()>& loss_fn) {
  const double v = loss_fn().item();
  if (!std::isfinite(v)) {
    throw NumericError("finite_diff_check: non-finite loss");
  }
  return v;
}

}  // namespace

double finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                         const GradCheckOptions& options) {
  if (options.step < 1e-6 || options.step > 1e-4) {
    throw ContractError("finite_diff_check: step must lie in [1e-6, 1e-4]");
  }
  for (auto& p : params) {
    p.zero_grad();
  }
  std::vector<Matrix> analytic;
  {
    GradGraph graph;
    GraphScope scope(graph);
    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) {
      throw NumericError("finite_diff_check: non-finite loss");
    }
    graph.backward(loss);
  }
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Matrix::Zero(p.rows(), p.cols()));
    p.zero_grad();
  }

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      coords.emplace_back(i, j);
    }
  }
  if (coords.size() > options.samples) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples);
  }

  const double h = options.step;
  double worst = 0.0;
  for (const auto& [pi, j] : coords) {
    double& x = params[pi].mutable_value().data()[j];
    const double saved = x;
    x = saved + h;
    const double up = eval_loss(loss_fn);
    x = saved - h;
    const double down = eval_loss(loss_fn);
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double exact = analytic[pi].data()[j];
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

}  // namespace raap
