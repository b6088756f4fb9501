#pragma once

// Adversarial losses and a small residual generator / discriminator pair
// that maps veiled (foggy) images towards clear ones.

#include <string>
#include <vector>

#include "fogsight/error.hpp"
#include "fogsight/ops.hpp"
#include "fogsight/optim.hpp"
#include "fogsight/params.hpp"
#include "fogsight/rng.hpp"

namespace fogsight::gan {

// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before the logs.
inline constexpr double kProbFloor = 1e-7;
inline constexpr double kDefaultLambdaSeg = 0.10;

enum class GeneratorLoss {
  non_saturating,  // -mean(log D(G(x)))
  literal,         // mean(log(1 - D(G(x)))), the minimax form
};

GeneratorLoss parse_generator_loss(const std::string& name);
std::string to_string(GeneratorLoss loss);

template <typename T>
struct AdvLoss {
  ad::Tensor<T> gen;
  ad::Tensor<T> disc;  // -mean(log d_real) - mean(log(1 - d_fake))
};

// d_real, d_fake: discriminator probabilities, any shape. Throws UsageError
// on an empty batch.
template <typename T>
AdvLoss<T> adv_loss(const ad::Tensor<T>& d_real, const ad::Tensor<T>& d_fake,
                    GeneratorLoss gen_form = GeneratorLoss::non_saturating);

// l_adv + lambda_seg * l_seg
template <typename T>
ad::Tensor<T> joint_loss(const ad::Tensor<T>& l_adv, const ad::Tensor<T>& l_seg,
                         double lambda_seg = kDefaultLambdaSeg);

struct ToyGanSpec {
  std::size_t channels = 3;
  std::size_t gen_hidden[2] = {8, 16};
  std::size_t disc_hidden[2] = {8, 16};
  double leaky_slope = 0.2;
};

// x + conv(relu(conv(relu(conv(x))))), 3x3 convolutions. The last layer
// starts at zero so a fresh generator is the identity.
template <typename T>
class ToyGenerator {
 public:
  ToyGenerator(const ToyGanSpec& spec, Rng& rng);

  const ToyGanSpec& spec() const { return spec_; }
  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }

  ad::Tensor<T> forward(const ad::Tensor<T>& x) const;

 private:
  ToyGanSpec spec_;
  ad::ParamStore<T> params_;
};

// Three stride-2 3x3 convolutions with leaky ReLU between them, global
// average, sigmoid. [N,C,H,W] -> [N] probabilities.
template <typename T>
class ToyDiscriminator {
 public:
  ToyDiscriminator(const ToyGanSpec& spec, Rng& rng);

  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }

  ad::Tensor<T> forward(const ad::Tensor<T>& x) const;

 private:
  ToyGanSpec spec_;
  ad::ParamStore<T> params_;
};

// Unpaired sample sets, each [N,C,H,W] with matching C,H,W.
template <typename T>
struct DomainPair {
  ad::Tensor<T> source;  // foggy
  ad::Tensor<T> target;  // clear
};

struct GanTrainOptions {
  std::size_t steps = 2000;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  ad::AdamConfig adam;
  // Generator learning rate as a multiple of adam.lr. The discriminator runs
  // at the full rate; at equal rates Adam's fixed-size steps on the zero-init
  // last layer move the generator output faster than D can respond and it
  // runs off to flat images.
  double gen_lr_scale = 0.01;
  GeneratorLoss gen_loss = GeneratorLoss::non_saturating;
  // Keep the generator at its initial (identity) weights; only D trains.
  bool freeze_generator = false;
};

struct GanTraceRow {
  std::size_t step = 0;
  double disc_loss = 0.0;
  double gen_loss = 0.0;
  double d_real = 0.0;  // mean discriminator output on the target batch
  double d_fake = 0.0;  // mean output on generated images, before the D step
};

// Thrown when a loss turns NaN or infinite; carries the trace up to and
// including the failing step.
class GanDivergence : public Error {
 public:
  GanDivergence(const std::string& what, std::vector<GanTraceRow> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<GanTraceRow>& trace() const { return trace_; }

 private:
  std::vector<GanTraceRow> trace_;
};

template <typename T>
struct GanResult {
  ToyGenerator<T> generator;
  ToyDiscriminator<T> discriminator;
  std::vector<GanTraceRow> trace;
};

// Each step draws a batch from both sets, updates D on (target, G(source))
// and then G against the updated D, both with Adam.
template <typename T>
GanResult<T> train_toy_gan(const DomainPair<T>& pair, const ToyGanSpec& spec,
                           const GanTrainOptions& options);

// Generator output clamped to [0,1], no graph recorded. Throws
// DimensionError unless the batch is [N, spec.channels, H, W].
template <typename T>
ad::Tensor<T> translate(const ToyGenerator<T>& generator, const ad::Tensor<T>& batch);

// Synthetic fog corpus: smooth random colour fields and the same scenes under a constant
// gray veil, out = (1 - strength) * clean + strength * gray.
struct VeilCorpus {
  ad::Tensor<float> clean;
  ad::Tensor<float> veiled;
};
VeilCorpus synthetic_veil_corpus(std::size_t count, std::size_t size, std::uint64_t seed,
                                 double gray = 0.75, double strength = 0.5);

template <typename T>
double mean_abs_error(const ad::Tensor<T>& a, const ad::Tensor<T>& b);

extern template class ToyGenerator<float>;
extern template class ToyGenerator<double>;
extern template class ToyDiscriminator<float>;
extern template class ToyDiscriminator<double>;

}  // namespace fogsight::gan
