#include <cmath>

#include "fogsight/error.hpp"
#include "fogsight/segnet.hpp"

namespace fogsight::segnet {

std::vector<double> class_weights(const data::ClassStats& stats, double c) {
  if (!(c > 0.0)) throw ParameterError("class weight parameter c must be positive");
  const auto p = stats.probabilities();
  std::vector<double> w(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double arg = c + p[k];
    if (!(arg > 1.0)) {
      throw ParameterError("class weight undefined for class " + std::to_string(k) +
                           ": c + p = " + std::to_string(arg) + " <= 1");
    }
    w[k] = 1.0 / std::log(arg);
  }
  return w;
}

template <typename T>
ad::Tensor<T> seg_loss(const ad::Tensor<T>& logits, const data::LabelTensor& labels,
                       const std::vector<double>& weights, ad::Reduction reduction,
                       ad::CrossEntropyInfo* info) {
  if (logits.rank() != 4 || logits.dim(0) != labels.n || logits.dim(2) != labels.height ||
      logits.dim(3) != labels.width) {
    throw DimensionError("seg_loss: logits " + ad::to_string(logits.shape()) +
                         " do not match labels");
  }
  if (!weights.empty() && weights.size() != logits.dim(1)) {
    throw DimensionError("seg_loss: " + std::to_string(weights.size()) + " class weights for " +
                         std::to_string(logits.dim(1)) + " classes");
  }
  const std::vector<T> w(weights.begin(), weights.end());
  return ad::weighted_cross_entropy(logits, std::span<const std::uint8_t>(labels.ids),
                                    std::span<const T>(w), reduction, info);
}

template <typename T>
std::vector<std::uint8_t> argmax_labels(const ad::Tensor<T>& logits) {
  if (logits.rank() != 4) throw DimensionError("argmax_labels expects [N,K,H,W]");
  const std::size_t n = logits.dim(0), k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  const auto v = logits.data();
  std::vector<std::uint8_t> out(n * plane);
  for (std::size_t b = 0; b < n; ++b) {
    const T* base = v.data() + b * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (base[c * plane + i] > base[best * plane + i]) best = c;
      }
      out[b * plane + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template ad::Tensor<float> seg_loss<float>(const ad::Tensor<float>&, const data::LabelTensor&,
                                           const std::vector<double>&, ad::Reduction,
                                           ad::CrossEntropyInfo*);
template ad::Tensor<double> seg_loss<double>(const ad::Tensor<double>&, const data::LabelTensor&,
                                             const std::vector<double>&, ad::Reduction,
                                             ad::CrossEntropyInfo*);
template std::vector<std::uint8_t> argmax_labels<float>(const ad::Tensor<float>&);
template std::vector<std::uint8_t> argmax_labels<double>(const ad::Tensor<double>&);

}  // namespace fogsight::segnet
