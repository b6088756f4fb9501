#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fogsight/tensor.hpp"

namespace fogsight::ad {

struct AdamConfig {
  double lr = 5e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  // One array per parameter, in the order the parameters are passed.
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  // Steps on which every gradient was exactly zero.
  std::uint64_t zero_gradient_steps = 0;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

// w <- w - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments.
// Throws StateError if any parameter has no gradient yet (no backward ran),
// or if the parameter set does not match the moments already in `state`.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

template <typename T>
void zero_grad(std::span<Tensor<T>> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace fogsight::ad
