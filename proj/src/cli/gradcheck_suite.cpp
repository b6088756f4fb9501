#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "fogsight/app.hpp"
#include "fogsight/gradcheck.hpp"

namespace fogsight::app {

using ad::Tensor;
using TensorD = Tensor<double>;

namespace {

TensorD uniform(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD(std::move(shape), std::move(v));
}

// Distinct values spaced well beyond the difference step, none near zero,
// so max-pool and relu kinks are never crossed.
TensorD spread(ad::Shape shape, Rng& rng) {
  const auto n = ad::numel(shape);
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  for (auto& x : v) x = (x - n / 2.0) * 0.05 + 0.0137;
  return TensorD(std::move(shape), std::move(v));
}

// relu whose backward rule lets half the gradient through: the negative
// control for the whole harness.
TensorD faulty_relu(const TensorD& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0 ? v : 0.0;
  const std::vector<double> in(x.data().begin(), x.data().end());
  return ad::make_op<double>("relu", x.shape(), std::move(out), {x},
                             [in](std::span<const double> g, std::span<const std::span<double>> grads) {
                               if (grads[0].empty()) return;
                               for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += in[i] > 0 ? 0.5 * g[i] : 0.0;
                             });
}

struct Case {
  std::string name;
  ad::ScalarFunction f;
  std::vector<TensorD> inputs;
};

std::vector<Case> build_cases(bool inject_fault) {
  Rng rng(0x6c5);
  const auto upstream = uniform({2, 3, 4, 4}, rng);
  std::vector<Case> cases;
  cases.push_back({"conv2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::conv2d(in[0], in[1], in[2], ad::Conv2dParams{2, 1, 1, 1, 1, 2});
                     return ad::sum(ad::mul(y, y));
                   },
                   {uniform({2, 2, 5, 6}, rng), uniform({3, 2, 3, 2}, rng), uniform({3}, rng)}});
  cases.push_back({"conv_transpose2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::conv_transpose2d(in[0], in[1], in[2], 2, 1, 1);
                     return ad::sum(ad::mul(y, y));
                   },
                   {uniform({2, 2, 3, 3}, rng), uniform({2, 3, 3, 3}, rng), uniform({3}, rng)}});
  cases.push_back({"max_pool2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::max_pool2d(in[0], 2, 2);
                     return ad::sum(ad::mul(y, y));
                   },
                   {spread({2, 2, 4, 6}, rng)}});
  cases.push_back({"avg_pool2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::avg_pool2d(in[0], 2, 2);
                     return ad::sum(ad::mul(y, y));
                   },
                   {uniform({2, 2, 4, 6}, rng)}});
  cases.push_back({"global_avg_pool2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::global_avg_pool2d(in[0]);
                     return ad::sum(ad::mul(y, y));
                   },
                   {uniform({2, 3, 3, 4}, rng)}});
  cases.push_back({"batch_norm2d",
                   [upstream](const std::vector<TensorD>& in) {
                     auto y = ad::batch_norm2d(in[0], in[1], in[2], ad::BatchNormBuffers<double>::create(3),
                                               ad::Mode::train);
                     return ad::sum(ad::mul(y, upstream));
                   },
                   {uniform({2, 3, 4, 4}, rng), uniform({3}, rng, 0.5, 1.5), uniform({3}, rng)}});
  cases.push_back({"relu",
                   [inject_fault](const std::vector<TensorD>& in) {
                     auto y = inject_fault ? faulty_relu(in[0]) : ad::relu(in[0]);
                     return ad::sum(ad::mul(y, y));
                   },
                   {spread({3, 5}, rng)}});
  cases.push_back({"leaky_relu",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::leaky_relu(in[0], 0.2);
                     return ad::sum(ad::mul(y, y));
                   },
                   {spread({3, 5}, rng)}});
  cases.push_back({"sigmoid",
                   [](const std::vector<TensorD>& in) {
                     auto y = ad::sigmoid(in[0]);
                     return ad::sum(ad::mul(y, y));
                   },
                   {uniform({7}, rng, -3, 3)}});
  cases.push_back({"softmax",
                   [upstream](const std::vector<TensorD>& in) {
                     return ad::sum(ad::mul(ad::softmax_channel(in[0]), upstream));
                   },
                   {uniform({2, 3, 4, 4}, rng, -2, 2)}});
  cases.push_back({"concat_channels",
                   [](const std::vector<TensorD>& in) {
                     auto c = ad::concat_channels<double>({in[0], in[1]});
                     return ad::sum(ad::mul(c, c));
                   },
                   {uniform({1, 2, 2, 2}, rng), uniform({1, 1, 2, 2}, rng)}});
  cases.push_back({"dropout",
                   [](const std::vector<TensorD>& in) {
                     Rng mask(5);
                     auto y = ad::dropout(in[0], 0.3, mask, ad::Mode::train);
                     return ad::sum(ad::mul(y, y));
                   },
                   {uniform({2, 2, 3, 3}, rng)}});
  cases.push_back({"seg_loss",
                   [](const std::vector<TensorD>& in) {
                     const data::LabelTensor labels{2, 2, 2, {0, 2, 255, 1, 1, 0, 2, 2}};
                     return segnet::seg_loss(in[0], labels, {0.5, 2.0, 1.25});
                   },
                   {uniform({2, 3, 2, 2}, rng, -2, 2)}});
  cases.push_back({"adv_loss",
                   [](const std::vector<TensorD>& in) {
                     const auto l = gan::adv_loss(in[0], in[1]);
                     return ad::add(l.disc, l.gen);
                   },
                   {uniform({4}, rng, 0.05, 0.95), uniform({4}, rng, 0.05, 0.95)}});
  return cases;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& c : build_cases(false)) names.push_back(c.name);
  return names;
}

std::vector<GradcheckRow> run_gradcheck_suite(const std::string& scope, bool inject_fault) {
  const auto cases = build_cases(inject_fault);
  std::vector<GradcheckRow> rows;
  for (const auto& c : cases) {
    if (scope != "all" && scope != c.name) continue;
    const auto r = ad::gradcheck(c.f, c.inputs, 1e-3, 1e-4);
    rows.push_back({c.name, r.max_rel_error, r.passed, r.error});
  }
  if (rows.empty()) {
    std::string known;
    for (const auto& c : cases) known += " " + c.name;
    throw ConfigError("unknown gradcheck scope '" + scope + "'; known:" + known);
  }
  return rows;
}

int cmd_gradcheck(const std::string& scope, bool inject_fault, std::ostream& out, std::ostream& err) {
  std::vector<GradcheckRow> rows;
  try {
    rows = run_gradcheck_suite(scope, inject_fault);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  bool ok = true;
  out << std::left << std::setw(20) << "primitive" << std::setw(16) << "max_rel_error" << "status\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(20) << r.name << std::setw(16) << std::scientific << std::setprecision(3)
        << r.max_rel_error << (r.passed ? "pass" : "FAIL") << "\n";
    if (!r.error.empty()) out << "  " << r.error << "\n";
    ok = ok && r.passed;
  }
  out << std::defaultfloat;
  return ok ? 0 : 1;
}

}  // namespace fogsight::app
