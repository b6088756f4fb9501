#include "fogsight/gan.hpp"

#include <algorithm>
#include <cmath>


namespace fogsight::gan {

using ad::Tensor;

GeneratorLoss parse_generator_loss(const std::string& name) {
  if (name == "non_saturating") return GeneratorLoss::non_saturating;
  if (name == "literal") return GeneratorLoss::literal;
  throw ConfigError("unknown generator loss '" + name + "' (expected non_saturating or literal)");
}

std::string to_string(GeneratorLoss loss) {
  return loss == GeneratorLoss::literal ? "literal" : "non_saturating";
}

template <typename T>
AdvLoss<T> adv_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, GeneratorLoss gen_form) {
  if (!d_real.defined() || !d_fake.defined() || d_real.numel() == 0 || d_fake.numel() == 0) {
    throw UsageError("adv_loss: empty discriminator batch");
  }
  const T lo = T(kProbFloor), hi = T(1) - T(kProbFloor);
  auto real = ad::clamp(d_real, lo, hi);
  auto fake = ad::clamp(d_fake, lo, hi);
  auto log_real = ad::mean(ad::log(real));
  auto log_one_minus_fake = ad::mean(ad::log(ad::add_scalar(ad::neg(fake), T(1))));
  AdvLoss<T> out;
  out.disc = ad::neg(ad::add(log_real, log_one_minus_fake));
  out.gen = gen_form == GeneratorLoss::literal ? log_one_minus_fake : ad::neg(ad::mean(ad::log(fake)));
  return out;
}

template <typename T>
Tensor<T> joint_loss(const Tensor<T>& l_adv, const Tensor<T>& l_seg, double lambda_seg) {
  return ad::add(l_adv, ad::scale(l_seg, T(lambda_seg)));
}

namespace {

template <typename T>
void add_conv(ad::ParamStore<T>& store, const std::string& name, std::size_t out, std::size_t in,
              Rng& rng, bool zero) {
  auto& w = store.add_parameter(name + ".weight", Tensor<T>::zeros({out, in, 3, 3}, true));
  if (!zero) ad::kaiming_uniform(w, in * 9, rng);
  store.add_parameter(name + ".bias", Tensor<T>::zeros({out}, true));
}

template <typename T>
Tensor<T> conv(const ad::ParamStore<T>& store, const std::string& name, const Tensor<T>& x,
               std::size_t stride) {
  return ad::conv2d(x, store.at(name + ".weight"), store.at(name + ".bias"), stride, 1);
}

// Rows `idx` of an [N,...] tensor as a new leaf.
template <typename T>
Tensor<T> gather(const Tensor<T>& src, const std::vector<std::size_t>& idx) {
  ad::Shape shape = src.shape();
  const std::size_t row = src.numel() / shape[0];
  shape[0] = idx.size();
  std::vector<T> data;
  data.reserve(idx.size() * row);
  const auto values = src.data();
  for (auto i : idx) data.insert(data.end(), values.begin() + i * row, values.begin() + (i + 1) * row);
  return Tensor<T>(shape, std::move(data));
}

std::vector<std::size_t> draw(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = rng.below(n);
  return idx;
}

template <typename T>
double mean_of(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data()) s += v;
  return s / static_cast<double>(t.numel());
}

}  // namespace

template <typename T>
ToyGenerator<T>::ToyGenerator(const ToyGanSpec& spec, Rng& rng) : spec_(spec) {
  add_conv(params_, "gen.conv0", spec.gen_hidden[0], spec.channels, rng, false);
  add_conv(params_, "gen.conv1", spec.gen_hidden[1], spec.gen_hidden[0], rng, false);
  add_conv(params_, "gen.conv2", spec.channels, spec.gen_hidden[1], rng, true);
}

template <typename T>
Tensor<T> ToyGenerator<T>::forward(const Tensor<T>& x) const {
  auto h = ad::relu(conv(params_, "gen.conv0", x, 1));
  h = ad::relu(conv(params_, "gen.conv1", h, 1));
  return ad::add(x, conv(params_, "gen.conv2", h, 1));
}

template <typename T>
ToyDiscriminator<T>::ToyDiscriminator(const ToyGanSpec& spec, Rng& rng) : spec_(spec) {
  add_conv(params_, "disc.conv0", spec.disc_hidden[0], spec.channels, rng, false);
  add_conv(params_, "disc.conv1", spec.disc_hidden[1], spec.disc_hidden[0], rng, false);
  add_conv(params_, "disc.conv2", 1, spec.disc_hidden[1], rng, false);
}

template <typename T>
Tensor<T> ToyDiscriminator<T>::forward(const Tensor<T>& x) const {
  const T slope = T(spec_.leaky_slope);
  auto h = ad::leaky_relu(conv(params_, "disc.conv0", x, 2), slope);
  h = ad::leaky_relu(conv(params_, "disc.conv1", h, 2), slope);
  h = ad::global_avg_pool2d(conv(params_, "disc.conv2", h, 2));
  return ad::reshape(ad::sigmoid(h), {x.dim(0)});
}

template <typename T>
GanResult<T> train_toy_gan(const DomainPair<T>& pair, const ToyGanSpec& spec,
                           const GanTrainOptions& options) {
  if (options.steps == 0) throw ParameterError("train_toy_gan: steps must be at least 1");
  if (options.batch == 0) throw ParameterError("train_toy_gan: batch must be at least 1");
  if (!pair.source.defined() || !pair.target.defined() || pair.source.rank() != 4 ||
      pair.target.rank() != 4 || pair.source.dim(0) == 0 || pair.target.dim(0) == 0) {
    throw UsageError("train_toy_gan: both domains need at least one [C,H,W] sample");
  }
  for (std::size_t d = 1; d < 4; ++d) {
    if (pair.source.dim(d) != pair.target.dim(d) || (d == 1 && pair.source.dim(1) != spec.channels)) {
      throw DimensionError("train_toy_gan: sample shapes differ: " + ad::to_string(pair.source.shape()) +
                           " vs " + ad::to_string(pair.target.shape()));
    }
  }

  Rng init(options.seed);
  GanResult<T> result{ToyGenerator<T>(spec, init), ToyDiscriminator<T>(spec, init), {}};
  auto& gen = result.generator;
  auto& disc = result.discriminator;
  auto g_params = gen.params().parameters();
  auto d_params = disc.params().parameters();
  ad::AdamConfig g_config = options.adam;
  g_config.lr *= options.gen_lr_scale;
  ad::AdamState<T> g_state(g_config), d_state(options.adam);

  for (std::size_t step = 0; step < options.steps; ++step) {
    Rng rng = Rng::derive(options.seed, step, 1);
    auto x = gather(pair.source, draw(pair.source.dim(0), options.batch, rng));
    auto y = gather(pair.target, draw(pair.target.dim(0), options.batch, rng));
    GanTraceRow row;
    row.step = step;

    // Discriminator step on a detached fake batch.
    Tensor<T> fake;
    {
      ad::NoGradGuard guard;
      fake = gen.forward(x);
    }
    disc.params().zero_grad();
    auto d_real = disc.forward(y);
    auto d_fake = disc.forward(fake);
    auto losses = adv_loss(d_real, d_fake, options.gen_loss);
    losses.disc.backward();
    ad::adam_step<T>(d_params, d_state);
    row.disc_loss = losses.disc.item();
    row.d_real = mean_of(d_real);
    row.d_fake = mean_of(d_fake);

    // Generator step against the updated discriminator.
    if (!options.freeze_generator) {
      gen.params().zero_grad();
      disc.params().zero_grad();
      auto d_gen = disc.forward(gen.forward(x));
      auto g_losses = adv_loss(d_real.detach(), d_gen, options.gen_loss);
      g_losses.gen.backward();
      ad::adam_step<T>(g_params, g_state);
      row.gen_loss = g_losses.gen.item();
    } else {
      row.gen_loss = losses.gen.item();
    }

    result.trace.push_back(row);
    if (!std::isfinite(row.disc_loss) || !std::isfinite(row.gen_loss)) {
      throw GanDivergence("toy GAN diverged at step " + std::to_string(step), result.trace);
    }
  }
  return result;
}

template <typename T>
Tensor<T> translate(const ToyGenerator<T>& generator, const Tensor<T>& batch) {
  if (!batch.defined() || batch.rank() != 4 || batch.dim(1) != generator.spec().channels) {
    throw DimensionError("translate: expected [N," + std::to_string(generator.spec().channels) +
                         ",H,W], got " + (batch.defined() ? ad::to_string(batch.shape()) : "none"));
  }
  ad::NoGradGuard guard;
  auto out = generator.forward(batch);
  std::vector<T> values(out.data().begin(), out.data().end());
  for (auto& v : values) v = std::clamp(v, T(0), T(1));
  return Tensor<T>(out.shape(), std::move(values));
}

VeilCorpus synthetic_veil_corpus(std::size_t count, std::size_t size, std::uint64_t seed, double gray,
                                 double strength) {
  // Smooth colour fields: a random base colour plus a few soft blobs, so the
  // veil shows up as lost contrast rather than as a shifted palette.
  std::vector<float> clean, veiled;
  const std::size_t plane = size * size;
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng = Rng::derive(seed, n, 7);
    std::vector<double> img(3 * plane);
    double base[3];
    for (auto& b : base) b = rng.uniform(0.1, 0.9);
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t c = 0; c < 3; ++c) img[c * plane + i] = base[c];
    }
    const std::size_t blobs = 2 + rng.below(3);
    for (std::size_t k = 0; k < blobs; ++k) {
      const double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
      const double radius = rng.uniform(0.15, 0.4) * size;
      double color[3];
      for (auto& c : color) c = rng.uniform(0.0, 1.0);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double w = std::exp(-(dx * dx + dy * dy) / (2 * radius * radius));
          for (std::size_t c = 0; c < 3; ++c) {
            double& v = img[c * plane + y * size + x];
            v = (1 - w) * v + w * color[c];
          }
        }
      }
    }
    for (double v : img) {
      clean.push_back(static_cast<float>(v));
      veiled.push_back(static_cast<float>((1.0 - strength) * v + strength * gray));
    }
  }
  const ad::Shape shape{count, 3, size, size};
  return {Tensor<float>(shape, std::move(clean)), Tensor<float>(shape, std::move(veiled))};
}

template <typename T>
double mean_abs_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw DimensionError("mean_abs_error: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(double(a.data()[i]) - double(b.data()[i]));
  return a.numel() == 0 ? 0.0 : s / static_cast<double>(a.numel());
}

#define FOGSIGHT_GAN_INSTANTIATE(T)                                                            \
  template AdvLoss<T> adv_loss(const Tensor<T>&, const Tensor<T>&, GeneratorLoss);             \
  template Tensor<T> joint_loss(const Tensor<T>&, const Tensor<T>&, double);                  \
  template class ToyGenerator<T>;                                                              \
  template class ToyDiscriminator<T>;                                                          \
  template GanResult<T> train_toy_gan(const DomainPair<T>&, const ToyGanSpec&,                 \
                                      const GanTrainOptions&);                                 \
  template Tensor<T> translate(const ToyGenerator<T>&, const Tensor<T>&);                      \
  template double mean_abs_error(const Tensor<T>&, const Tensor<T>&);

FOGSIGHT_GAN_INSTANTIATE(float)
FOGSIGHT_GAN_INSTANTIATE(double)

}  // namespace fogsight::gan
