#pragma once

// Orchestration behind the `fogsight` executable: run configuration,
// dataset assembly, training and evaluation loops, and the file-level
// commands. Every command takes its streams explicitly so tests can drive
// it in-process.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fogsight/dataio.hpp"
#include "fogsight/gan.hpp"
#include "fogsight/metrics.hpp"
#include "fogsight/segnet.hpp"

namespace fogsight::app {

namespace fs = std::filesystem;

// ---- configuration ----

// `key = value` lines, '#' starts a comment, keys are dotted
// ("model.growth"). Only known keys are accepted.
class RunConfig {
 public:
  // Every known key with its default.
  static RunConfig defaults();

  void load_file(const fs::path& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& key, const std::string& value);
  // "key=value"
  void apply_override(const std::string& assignment);
  // FOGSIGHT_SEED, when set, replaces run.seed.
  void apply_environment();

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t seed() const;

  // Sorted `key = value` lines.
  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// data.size "WxH"
std::pair<std::size_t, std::size_t> parse_size(const std::string& text);

segnet::NetworkSpec network_spec(const RunConfig& cfg);
data::BatchOptions batch_options(const RunConfig& cfg);
imaging::LuminanceWeights parse_luminance(const std::string& name);

// ---- datasets ----

struct SceneSet {
  std::vector<data::SceneSample> samples;
  // Identifies the source for the normalisation cache.
  std::string key;
};

// Training scenes from data.root (or data.synthetic generated scenes),
// resized to data.size.
SceneSet load_train_set(const RunConfig& cfg);
// data.eval_root / data.synthetic_eval, falling back to the training set.
SceneSet load_eval_set(const RunConfig& cfg);
// Clear-weather images for the joint adversarial term (joint.target_root
// or synthetic clean scenes), resized to data.size.
SceneSet load_target_set(const RunConfig& cfg);

// ---- trace ----

struct TraceRow {
  std::size_t step = 0;
  double seg_loss = 0.0;
  std::optional<double> adv_loss;
  std::optional<double> disc_loss;
  double total_loss = 0.0;
  double lr = 0.0;
};

// Tab-separated with a header line; absent values are written as "-".
// Numbers use the shortest round-trip form, so the file is bitwise stable.
std::string format_trace(const std::vector<TraceRow>& rows);
std::vector<TraceRow> parse_trace(const std::string& text);

// Line plot of every loss column against step: seg blue, adv red, disc
// green, total black (joint runs only).
void plot_trace(const std::vector<TraceRow>& rows, const fs::path& png);

struct Curve {
  std::array<std::uint16_t, 3> color;
  std::vector<std::pair<double, double>> points;  // (step, value)
};
// 720x400 RGB chart with a shared y range; non-finite values are skipped.
void plot_curves(const std::vector<Curve>& curves, const fs::path& png);

// ---- joint objective ----

template <typename T>
struct JointTerms {
  ad::Tensor<T> seg;
  ad::Tensor<T> adv;
  ad::Tensor<T> total;
};

// Segmentation of G(x): the generator output is normalised with
// `input_mean`/`input_std` (per channel) and fed to the network with `aux`.
// total = adv + lambda * seg, where adv is the generator's adversarial loss
// against `disc`.
template <typename T>
JointTerms<T> joint_objective(const segnet::SegNet<T>& net, const gan::ToyGenerator<T>& gen,
                              const gan::ToyDiscriminator<T>& disc, const ad::Tensor<T>& raw_rgb,
                              const ad::Tensor<T>& aux, const data::LabelTensor& labels,
                              const std::vector<double>& class_weights,
                              const std::vector<double>& input_mean,
                              const std::vector<double>& input_std, double lambda_seg,
                              gan::GeneratorLoss gen_form, Rng* dropout_rng);

// ---- commands ----

struct TrainRequest {
  fs::path out;
  std::optional<fs::path> resume;  // checkpoint file or run directory
};

struct TrainSummary {
  std::size_t steps = 0;
  double final_loss = 0.0;
  double best_miou = -1.0;
  std::optional<metrics::MetricReport> last_eval;
};

// Throws on failure; the CLI maps exceptions to exit codes.
TrainSummary run_training(const RunConfig& cfg, const TrainRequest& request, std::ostream& log);

struct EvalRequest {
  std::optional<fs::path> ckpt;
  fs::path out;                        // metrics.txt / metrics.csv
  std::optional<fs::path> pred_out;    // colourised predictions
  std::optional<double> min_miou;
  // "model", "oracle" (ground truth) or "constant:<class>".
  std::string predictor = "model";
};

struct EvalResult {
  metrics::MetricReport report;
  int exit_code = 0;  // 2 when min_miou is not met
};

EvalResult run_eval(const RunConfig& cfg, const EvalRequest& request, std::ostream& log);

// Standard street-scene colours, one per class; ignored pixels are black.
const std::array<std::array<std::uint8_t, 3>, data::kNumClasses>& class_palette();
RawImage colorize(const data::LabelMap& labels);

struct TransformRequest {
  fs::path in, out;
  std::string transform;  // iit | iab | ihs | luminance | fog
  double alpha = imaging::kDefaultAlpha;
  std::optional<fs::path> depth;
  imaging::FogParams fog;
  imaging::DepthDecode depth_decode = imaging::DepthDecode::disparity256;
};
int cmd_transform(const TransformRequest& request, std::ostream& out, std::ostream& err);

struct FogRequest {
  fs::path in, depth, out;
  std::vector<double> betas;  // more than one: one sibling directory per beta
  double atmospheric_light = 0.8;
  imaging::DepthDecode depth_decode = imaging::DepthDecode::disparity256;
};
int cmd_fog(const FogRequest& request, std::ostream& out, std::ostream& err);

// Toy GAN on gan.source_root / gan.target_root images, or on the synthetic
// veil corpus when gan.synthetic > 0. Writes generator.fogw, gan_trace.tsv,
// gan_loss.png and config.txt to `out`.
int cmd_gan_train(const RunConfig& cfg, const fs::path& out, std::ostream& log, std::ostream& err);

struct TranslateRequest {
  fs::path in, out, ckpt;
};
int cmd_translate(const TranslateRequest& request, std::ostream& out, std::ostream& err);

// Class frequencies and the derived loss weights of the training set.
int cmd_stats(const RunConfig& cfg, const std::optional<fs::path>& csv, std::ostream& out);

struct GradcheckRow {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string error;
};

std::vector<std::string> gradcheck_names();
// `scope` is "all" or one name. `inject_fault` swaps in a relu with a
// wrong backward rule (negative control). Throws ConfigError on an unknown
// scope.
std::vector<GradcheckRow> run_gradcheck_suite(const std::string& scope, bool inject_fault = false);
int cmd_gradcheck(const std::string& scope, bool inject_fault, std::ostream& out, std::ostream& err);

// Loads a generator from a gan-train checkpoint or a joint training checkpoint.
gan::ToyGenerator<float> load_generator(const fs::path& ckpt);

// PNG files directly inside `dir`, sorted by name.
std::vector<fs::path> list_pngs(const fs::path& dir);

}  // namespace fogsight::app
