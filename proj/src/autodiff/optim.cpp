#include "fogsight/optim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "fogsight/error.hpp"
#include "fogsight/kernels.hpp"

namespace fogsight::ad {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw StateError("adam_step: parameter " + std::to_string(i) +
                       " has no gradient; run backward() first");
    }
  }
  if (state.step_count == 0 && state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), T(0));
      state.second_moment.emplace_back(p.numel(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw StateError("adam_step: optimizer state tracks " +
                     std::to_string(state.first_moment.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() ||
        state.second_moment[i].size() != params[i].numel()) {
      throw StateError("adam_step: moment size mismatch for parameter " + std::to_string(i));
    }
  }

  const bool all_zero = std::all_of(params.begin(), params.end(), [](const Tensor<T>& p) {
    const auto g = p.grad();
    return std::all_of(g.begin(), g.end(), [](T v) { return v == T(0); });
  });
  if (all_zero) {
    ++state.zero_gradient_steps;
#ifndef NDEBUG
    std::cerr << "adam_step: all gradients are zero at step " << state.step_count + 1 << '\n';
#endif
  }

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const auto& cfg = state.config;
  const kernels::AdamCoefficients k{cfg.lr,
                                    cfg.beta1,
                                    cfg.beta2,
                                    cfg.eps,
                                    1.0 - std::pow(cfg.beta1, t),
                                    1.0 - std::pow(cfg.beta2, t)};
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    kernels::adam_update(p.numel(), k, p.grad().data(), state.first_moment[i].data(),
                         state.second_moment[i].data(), p.mutable_data().data());
  }
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace fogsight::ad
