#pragma once

#include <cstdint>
#include <vector>

#include "prism/tensor.hpp"

namespace prism {

/// Adam with bias correction over an ordered list of parameter tensors.
/// Moment tensors are allocated on the first step and stay aligned with
/// the parameter order.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One update: params[i] -= lr * m_hat / (sqrt(v_hat) + eps).
/// grads must cover every parameter, same order and shapes.
void adam_step(std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state);

}  // namespace prism
