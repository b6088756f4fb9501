#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fogsight/tensor.hpp"

namespace fogsight::ad {

struct GradcheckEntry {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string error;  // set when the function itself failed
};

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares backward() against central differences (f(x+eps) - f(x-eps)) / 2eps
// for every element of every input. Error per element is
// |analytic - numeric| / max(1, |analytic|, |numeric|). Never throws; a
// failing function yields passed == false with `error` set.
GradcheckReport gradcheck(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs,
                          double eps = 1e-3, double tol = 1e-4);

}  // namespace fogsight::ad
