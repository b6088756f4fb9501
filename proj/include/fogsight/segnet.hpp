#pragma once

// Dual-encoder segmentation network: an RGB encoder (downsamplers and
// factorised residual blocks), a depth/luminance encoder with dense blocks,
// sum fusion wherever the two encoders share a width, and a decoder with
// skip connections from the fused maps.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "fogsight/dataio.hpp"
#include "fogsight/ops.hpp"
#include "fogsight/params.hpp"
#include "fogsight/rng.hpp"

namespace fogsight::segnet {

struct NetworkSpec {
  std::size_t classes = 19;
  std::array<std::size_t, 3> widths{16, 64, 128};
  std::size_t rgb_blocks = 5;
  std::vector<std::size_t> dilations{2, 4, 8, 16, 2, 4, 8, 16};
  std::array<std::size_t, 3> dense_modules{4, 3, 4};
  std::size_t growth = 16;
  std::size_t decoder_blocks = 2;
  double dropout = 0.3;
  // Zero the last convolution of every residual block so it starts as an
  // identity on non-negative inputs.
  bool zero_init_residual = false;
};

// Throws ParameterError naming the offending layer.
void validate(const NetworkSpec& spec, std::size_t aux_channels);

// `model.*` configuration keys. Unknown keys throw ConfigError.
std::vector<std::string> model_keys();
void set_model_key(NetworkSpec& spec, const std::string& key, const std::string& value);
std::map<std::string, std::string> to_config(const NetworkSpec& spec);

template <typename T>
struct ForwardResult {
  ad::Tensor<T> logits;  // [N,classes,H,W]
  // Fused maps at widths 16, 64 and 128 (the RGB maps when there is no aux input).
  std::array<ad::Tensor<T>, 3> fused;
  ad::Tensor<T> bottleneck;
  // Decoder concatenations, coarse to fine; their second input is the skip.
  std::array<ad::Tensor<T>, 2> skip_concat;
};

template <typename T>
class SegNet {
 public:
  // aux_channels: 2 for depth+luminance, 1 for luminance, 0 for RGB only.
  SegNet(const NetworkSpec& spec, std::size_t aux_channels, Rng& rng);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t aux_channels() const { return aux_channels_; }
  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }

  // H and W must be divisible by 8. `rng` drives dropout in train mode.
  ForwardResult<T> forward(const ad::Tensor<T>& rgb, const ad::Tensor<T>& aux, ad::Mode mode,
                           Rng* rng = nullptr) const;

  // Runs one named residual block on its own (no dropout), e.g. "rgb.nb.0".
  ad::Tensor<T> residual_block(const std::string& name, const ad::Tensor<T>& x,
                               std::size_t dilation, ad::Mode mode) const;

 private:
  struct Ctx;
  void add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t kh,
                std::size_t kw, Rng& rng, bool zero = false);
  void add_conv_transpose(const std::string& name, std::size_t in, std::size_t out,
                          std::size_t k, Rng& rng);
  void build_downsampler(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  void build_nb1d(const std::string& name, std::size_t ch, Rng& rng);

  ad::Tensor<T> conv(const std::string& name, const ad::Tensor<T>& x,
                     const ad::Conv2dParams& p) const;
  ad::Tensor<T> bn(const std::string& name, const ad::Tensor<T>& x, const Ctx& ctx) const;
  ad::Tensor<T> downsampler(const std::string& name, const ad::Tensor<T>& x, const Ctx& ctx) const;
  ad::Tensor<T> nb1d(const std::string& name, const ad::Tensor<T>& x, std::size_t dilation,
                     double dropout, const Ctx& ctx) const;

  NetworkSpec spec_;
  std::size_t aux_channels_;
  ad::ParamStore<T> params_;
};

// 1 / ln(c + p_class) per class. Throws ParameterError if c + p <= 1 or c <= 0.
std::vector<double> class_weights(const data::ClassStats& stats, double c = 1.10);

// Weighted pixel-wise softmax cross-entropy; ignored pixels are excluded
// from the mean. `info` reports how many pixels were scored.
template <typename T>
ad::Tensor<T> seg_loss(const ad::Tensor<T>& logits, const data::LabelTensor& labels,
                       const std::vector<double>& weights,
                       ad::Reduction reduction = ad::Reduction::mean,
                       ad::CrossEntropyInfo* info = nullptr);

// Per-pixel argmax over classes, lowest index on ties. [N,K,H,W] -> N*H*W.
template <typename T>
std::vector<std::uint8_t> argmax_labels(const ad::Tensor<T>& logits);

extern template class SegNet<float>;
extern template class SegNet<double>;

}  // namespace fogsight::segnet
