#include "fogsight/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

namespace fogsight::ad {

GradcheckReport gradcheck(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs,
                          double eps, double tol) {
  GradcheckReport report;
  try {
    std::vector<Tensor<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) {
      leaves.emplace_back(in.shape(), std::vector<double>(in.data().begin(), in.data().end()),
                          true);
    }
    const auto loss = f(leaves);
    loss.backward();

    const auto eval = [&]() {
      NoGradGuard guard;
      return f(leaves).item();
    };
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      auto& leaf = leaves[i];
      const std::vector<double> analytic =
          leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                          : std::vector<double>(leaf.numel(), 0.0);
      auto values = leaf.mutable_data();
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double saved = values[j];
        values[j] = saved + eps;
        const double up = eval();
        values[j] = saved - eps;
        const double down = eval();
        values[j] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({1.0, std::abs(analytic[j]), std::abs(numeric)});
        double err = std::abs(analytic[j] - numeric) / denom;
        if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
        report.entries.push_back({i, j, analytic[j], numeric, err});
        report.max_rel_error = std::max(report.max_rel_error, err);
      }
    }
    report.passed = report.max_rel_error < tol;
  } catch (const std::exception& e) {
    report.passed = false;
    report.error = e.what();
  }
  return report;
}

}  // namespace fogsight::ad
