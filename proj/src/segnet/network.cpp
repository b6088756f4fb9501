#include <cmath>
#include <sstream>

#include "fogsight/error.hpp"
#include "fogsight/segnet.hpp"

namespace fogsight::segnet {

using ad::Conv2dParams;
using ad::Mode;
using ad::Tensor;

namespace {

std::string block(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i); }

Conv2dParams conv_params(std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw,
                         std::size_t dh = 1, std::size_t dw = 1) {
  return Conv2dParams{sh, sw, ph, pw, dh, dw};
}

}  // namespace

void validate(const NetworkSpec& spec, std::size_t aux_channels) {
  const auto fail = [](const std::string& layer, const std::string& why) {
    throw ParameterError("invalid network spec at " + layer + ": " + why);
  };
  if (spec.classes < 2) fail("head", "need at least 2 classes");
  if (spec.widths[0] <= 3) fail("rgb.ds1", "width must exceed the 3 input channels");
  if (spec.widths[1] <= spec.widths[0]) fail("rgb.ds2", "stage widths must increase");
  if (spec.widths[2] <= spec.widths[1]) fail("rgb.ds3", "stage widths must increase");
  if (spec.dilations.empty()) fail("rgb.dil", "need at least one dilated block");
  for (std::size_t i = 0; i < spec.dilations.size(); ++i) {
    if (spec.dilations[i] == 0) fail(block("rgb.dil", i), "dilation must be positive");
  }
  if (spec.growth == 0) fail("dl.dense1", "growth rate must be positive");
  for (std::size_t b = 0; b < 3; ++b) {
    if (spec.dense_modules[b] == 0) fail("dl.dense" + std::to_string(b + 1), "needs at least one module");
  }
  if (aux_channels > 2) fail("dl.ds", "aux input has at most 2 channels");
  if (aux_channels > 0 && spec.widths[0] <= aux_channels) fail("dl.ds", "width must exceed aux channels");
  if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) fail("rgb.dil", "dropout must lie in [0, 1)");
}

// ---- configuration ----

namespace {

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (v < 0) throw std::invalid_argument("negative");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a comma-separated list of integers, got '" + value + "'");
    }
  }
  return out;
}

std::string join(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const auto v = parse_list(key, value);
  if (v.size() != 1) throw ConfigError(key + ": expected one integer, got '" + value + "'");
  return v[0];
}

template <std::size_t N>
std::array<std::size_t, N> parse_array(const std::string& key, const std::string& value) {
  const auto v = parse_list(key, value);
  if (v.size() != N) throw ConfigError(key + ": expected " + std::to_string(N) + " integers");
  std::array<std::size_t, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

std::vector<std::string> model_keys() {
  return {"model.classes",        "model.widths", "model.rgb_blocks",     "model.dilations",
          "model.dense_modules",  "model.growth", "model.decoder_blocks", "model.dropout",
          "model.zero_init_residual"};
}

void set_model_key(NetworkSpec& spec, const std::string& key, const std::string& value) {
  if (key == "model.classes") {
    spec.classes = parse_count(key, value);
  } else if (key == "model.widths") {
    spec.widths = parse_array<3>(key, value);
  } else if (key == "model.rgb_blocks") {
    spec.rgb_blocks = parse_count(key, value);
  } else if (key == "model.dilations") {
    spec.dilations = parse_list(key, value);
  } else if (key == "model.dense_modules") {
    spec.dense_modules = parse_array<3>(key, value);
  } else if (key == "model.growth") {
    spec.growth = parse_count(key, value);
  } else if (key == "model.decoder_blocks") {
    spec.decoder_blocks = parse_count(key, value);
  } else if (key == "model.dropout") {
    try {
      spec.dropout = std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
  } else if (key == "model.zero_init_residual") {
    if (value != "true" && value != "false") throw ConfigError(key + ": expected true or false");
    spec.zero_init_residual = value == "true";
  } else {
    throw ConfigError("unknown key " + key);
  }
}

std::map<std::string, std::string> to_config(const NetworkSpec& spec) {
  std::ostringstream dropout;
  dropout << spec.dropout;
  return {{"model.classes", std::to_string(spec.classes)},
          {"model.widths", join({spec.widths.begin(), spec.widths.end()})},
          {"model.rgb_blocks", std::to_string(spec.rgb_blocks)},
          {"model.dilations", join(spec.dilations)},
          {"model.dense_modules", join({spec.dense_modules.begin(), spec.dense_modules.end()})},
          {"model.growth", std::to_string(spec.growth)},
          {"model.decoder_blocks", std::to_string(spec.decoder_blocks)},
          {"model.dropout", dropout.str()},
          {"model.zero_init_residual", spec.zero_init_residual ? "true" : "false"}};
}

// ---- construction ----

template <typename T>
struct SegNet<T>::Ctx {
  Mode mode;
  Rng* rng;
};

template <typename T>
void SegNet<T>::add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t kh,
                         std::size_t kw, Rng& rng, bool zero) {
  auto& w = params_.add_parameter(name + ".weight", Tensor<T>::zeros({out, in, kh, kw}));
  if (!zero) ad::kaiming_uniform(w, in * kh * kw, rng);
  params_.add_parameter(name + ".bias", Tensor<T>::zeros({out}));
}

template <typename T>
void SegNet<T>::add_conv_transpose(const std::string& name, std::size_t in, std::size_t out,
                                   std::size_t k, Rng& rng) {
  auto& w = params_.add_parameter(name + ".weight", Tensor<T>::zeros({in, out, k, k}));
  ad::kaiming_uniform(w, out * k * k, rng);
  params_.add_parameter(name + ".bias", Tensor<T>::zeros({out}));
}

template <typename T>
void SegNet<T>::build_downsampler(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  add_conv(name + ".conv", out - in, in, 3, 3, rng);
  params_.add_batch_norm(name + ".bn", out);
}

template <typename T>
void SegNet<T>::build_nb1d(const std::string& name, std::size_t ch, Rng& rng) {
  add_conv(name + ".conv3x1_1", ch, ch, 3, 1, rng);
  add_conv(name + ".conv1x3_1", ch, ch, 1, 3, rng);
  params_.add_batch_norm(name + ".bn1", ch);
  add_conv(name + ".conv3x1_2", ch, ch, 3, 1, rng);
  add_conv(name + ".conv1x3_2", ch, ch, 1, 3, rng, spec_.zero_init_residual);
  params_.add_batch_norm(name + ".bn2", ch);
}

template <typename T>
SegNet<T>::SegNet(const NetworkSpec& spec, std::size_t aux_channels, Rng& rng)
    : spec_(spec), aux_channels_(aux_channels) {
  validate(spec_, aux_channels_);
  const auto& w = spec_.widths;

  build_downsampler("rgb.ds1", 3, w[0], rng);
  build_downsampler("rgb.ds2", w[0], w[1], rng);
  for (std::size_t i = 0; i < spec_.rgb_blocks; ++i) build_nb1d(block("rgb.nb", i), w[1], rng);
  build_downsampler("rgb.ds3", w[1], w[2], rng);
  for (std::size_t i = 0; i < spec_.dilations.size(); ++i) build_nb1d(block("rgb.dil", i), w[2], rng);

  if (aux_channels_ > 0) {
    build_downsampler("dl.ds", aux_channels_, w[0], rng);
    std::size_t ch = w[0];
    const std::array<std::size_t, 3> targets{w[1], w[2], w[2]};
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string dense = "dl.dense" + std::to_string(b + 1);
      for (std::size_t m = 0; m < spec_.dense_modules[b]; ++m) {
        params_.add_batch_norm(block(dense, m) + ".bn", ch);
        add_conv(block(dense, m) + ".conv", spec_.growth, ch, 3, 3, rng);
        ch += spec_.growth;
      }
      const std::string trans = "dl.trans" + std::to_string(b + 1);
      params_.add_batch_norm(trans + ".bn", ch);
      add_conv(trans + ".conv", targets[b], ch, 1, 1, rng);
      ch = targets[b];
    }
  }

  const std::array<std::size_t, 2> stage{w[1], w[0]};
  std::size_t in = w[2];
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string dec = "dec" + std::to_string(s + 1);
    add_conv_transpose(dec + ".up", in, stage[s], 3, rng);
    params_.add_batch_norm(dec + ".bn", stage[s]);
    add_conv(dec + ".proj", stage[s], 2 * stage[s], 1, 1, rng);
    for (std::size_t i = 0; i < spec_.decoder_blocks; ++i) build_nb1d(block(dec + ".nb", i), stage[s], rng);
    in = stage[s];
  }
  add_conv_transpose("head", w[0], spec_.classes, 2, rng);

  params_.add_buffer("meta.batch_norm", Tensor<T>({2}, {T(ad::kBatchNormEps), T(ad::kBatchNormMomentum)}));
}

// ---- forward ----

template <typename T>
Tensor<T> SegNet<T>::conv(const std::string& name, const Tensor<T>& x, const Conv2dParams& p) const {
  return ad::conv2d(x, params_.at(name + ".weight"), params_.at(name + ".bias"), p);
}

template <typename T>
Tensor<T> SegNet<T>::bn(const std::string& name, const Tensor<T>& x, const Ctx& ctx) const {
  return ad::batch_norm2d(x, params_.at(name + ".gamma"), params_.at(name + ".beta"),
                          params_.batch_norm_buffers(name), ctx.mode);
}

template <typename T>
Tensor<T> SegNet<T>::downsampler(const std::string& name, const Tensor<T>& x, const Ctx& ctx) const {
  auto c = conv(name + ".conv", x, conv_params(2, 2, 1, 1));
  auto p = ad::max_pool2d(x, 2, 2);
  return ad::relu(bn(name + ".bn", ad::concat_channels<T>({c, p}), ctx));
}

template <typename T>
Tensor<T> SegNet<T>::nb1d(const std::string& name, const Tensor<T>& x, std::size_t d,
                          double dropout, const Ctx& ctx) const {
  auto y = ad::relu(conv(name + ".conv3x1_1", x, conv_params(1, 1, 1, 0)));
  y = ad::relu(bn(name + ".bn1", conv(name + ".conv1x3_1", y, conv_params(1, 1, 0, 1)), ctx));
  y = ad::relu(conv(name + ".conv3x1_2", y, conv_params(1, 1, d, 0, d, 1)));
  y = bn(name + ".bn2", conv(name + ".conv1x3_2", y, conv_params(1, 1, 0, d, 1, d)), ctx);
  if (dropout > 0.0 && ctx.mode == Mode::train) {
    if (ctx.rng == nullptr) throw UsageError("dropout in train mode needs an rng");
    y = ad::dropout(y, dropout, *ctx.rng, ctx.mode);
  }
  return ad::relu(ad::add(y, x));
}

template <typename T>
Tensor<T> SegNet<T>::residual_block(const std::string& name, const Tensor<T>& x, std::size_t dilation,
                                    Mode mode) const {
  if (!params_.contains(name + ".conv3x1_1.weight")) throw UsageError("no residual block named " + name);
  return nb1d(name, x, dilation, 0.0, Ctx{mode, nullptr});
}

template <typename T>
ForwardResult<T> SegNet<T>::forward(const Tensor<T>& rgb, const Tensor<T>& aux, Mode mode,
                                    Rng* rng) const {
  if (!rgb.defined() || rgb.rank() != 4 || rgb.dim(1) != 3) {
    throw DimensionError("segnet input must be [N,3,H,W]");
  }
  const std::size_t n = rgb.dim(0), h = rgb.dim(2), w = rgb.dim(3);
  if (h % 8 != 0 || w % 8 != 0) {
    throw DimensionError("segnet input " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by 8");
  }
  if (aux_channels_ > 0) {
    if (!aux.defined() || aux.shape() != ad::Shape{n, aux_channels_, h, w}) {
      throw DimensionError("segnet aux input must be [" + std::to_string(n) + "," +
                           std::to_string(aux_channels_) + "," + std::to_string(h) + "," +
                           std::to_string(w) + "]");
    }
  }
  const Ctx ctx{mode, rng};
  ForwardResult<T> out;

  // DL encoder first; the RGB path adds its maps where widths match.
  std::array<Tensor<T>, 3> dl;
  if (aux_channels_ > 0) {
    auto y = downsampler("dl.ds", aux, ctx);
    dl[0] = y;
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string dense = "dl.dense" + std::to_string(b + 1);
      for (std::size_t m = 0; m < spec_.dense_modules[b]; ++m) {
        auto z = ad::relu(bn(block(dense, m) + ".bn", y, ctx));
        z = conv(block(dense, m) + ".conv", z, conv_params(1, 1, 1, 1));
        y = ad::concat_channels<T>({y, z});
      }
      const std::string trans = "dl.trans" + std::to_string(b + 1);
      y = conv(trans + ".conv", ad::relu(bn(trans + ".bn", y, ctx)), conv_params(1, 1, 0, 0));
      if (b < 2) y = ad::avg_pool2d(y, 2, 2);
      if (b == 0) dl[1] = y;  // width 64 at H/4
      if (b == 2) dl[2] = y;  // width 128 at H/8
    }
  }
  const auto fuse = [&](const Tensor<T>& x, std::size_t stage) {
    return aux_channels_ > 0 ? ad::add(x, dl[stage]) : x;
  };

  auto x = downsampler("rgb.ds1", rgb, ctx);
  out.fused[0] = fuse(x, 0);
  x = downsampler("rgb.ds2", out.fused[0], ctx);
  for (std::size_t i = 0; i < spec_.rgb_blocks; ++i) x = nb1d(block("rgb.nb", i), x, 1, 0.0, ctx);
  out.fused[1] = fuse(x, 1);
  x = downsampler("rgb.ds3", out.fused[1], ctx);
  for (std::size_t i = 0; i < spec_.dilations.size(); ++i) {
    x = nb1d(block("rgb.dil", i), x, spec_.dilations[i], spec_.dropout, ctx);
  }
  out.fused[2] = fuse(x, 2);
  out.bottleneck = out.fused[2];

  x = out.bottleneck;
  const std::array<const Tensor<T>*, 2> skips{&out.fused[1], &out.fused[0]};
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string dec = "dec" + std::to_string(s + 1);
    auto up = ad::conv_transpose2d(x, params_.at(dec + ".up.weight"), params_.at(dec + ".up.bias"), 2, 1, 1);
    up = ad::relu(bn(dec + ".bn", up, ctx));
    out.skip_concat[s] = ad::concat_channels<T>({up, *skips[s]});
    x = conv(dec + ".proj", out.skip_concat[s], conv_params(1, 1, 0, 0));
    for (std::size_t i = 0; i < spec_.decoder_blocks; ++i) x = nb1d(block(dec + ".nb", i), x, 1, 0.0, ctx);
  }
  out.logits = ad::conv_transpose2d(x, params_.at("head.weight"), params_.at("head.bias"), 2, 0, 0);
  return out;
}

template class SegNet<float>;
template class SegNet<double>;

}  // namespace fogsight::segnet
