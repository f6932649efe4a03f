#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "raap/tensor.hpp"

namespace raap {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled across all parameters; every coordinate when the total is smaller.
  std::size_t samples = 50;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of `loss_fn` with central differences.
///
/// Returns the maximum over sampled coordinates of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). The parameters'
/// gradients are reset before and after the check. Throws NumericError when
/// the loss is not finite and ContractError when the step is outside [1e-6, 1e-4].
double finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                         const GradCheckOptions& options = {});

}  // namespace raap
