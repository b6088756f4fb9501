#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fogsight/app.hpp"
#include "fogsight/checkpoint.hpp"
#include "fogsight/png.hpp"

namespace fogsight::app {

using ad::Tensor;

template <typename T>
JointTerms<T> joint_objective(const segnet::SegNet<T>& net, const gan::ToyGenerator<T>& gen,
                              const gan::ToyDiscriminator<T>& disc, const Tensor<T>& raw_rgb,
                              const Tensor<T>& aux, const data::LabelTensor& labels,
                              const std::vector<double>& class_weights,
                              const std::vector<double>& input_mean,
                              const std::vector<double>& input_std, double lambda_seg,
                              gan::GeneratorLoss gen_form, Rng* dropout_rng) {
  const auto fake = gen.forward(raw_rgb);
  const std::size_t n = fake.dim(0), c = fake.dim(1), plane = fake.dim(2) * fake.dim(3);
  std::vector<T> shift(fake.numel()), gain(fake.numel());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::fill_n(shift.begin() + (i * c + ch) * plane, plane, T(input_mean.at(ch)));
      std::fill_n(gain.begin() + (i * c + ch) * plane, plane, T(1.0 / input_std.at(ch)));
    }
  }
  const auto normalized = ad::mul(ad::sub(fake, Tensor<T>(fake.shape(), std::move(shift))),
                                  Tensor<T>(fake.shape(), std::move(gain)));
  JointTerms<T> terms;
  terms.seg = segnet::seg_loss(net.forward(normalized, aux, ad::Mode::train, dropout_rng).logits, labels,
                               class_weights);
  const auto d_fake = disc.forward(fake);
  terms.adv = gan::adv_loss(d_fake, d_fake, gen_form).gen;
  terms.total = gan::joint_loss(terms.adv, terms.seg, lambda_seg);
  return terms;
}

template JointTerms<float> joint_objective(const segnet::SegNet<float>&, const gan::ToyGenerator<float>&,
                                           const gan::ToyDiscriminator<float>&, const Tensor<float>&,
                                           const Tensor<float>&, const data::LabelTensor&,
                                           const std::vector<double>&, const std::vector<double>&,
                                           const std::vector<double>&, double, gan::GeneratorLoss, Rng*);
template JointTerms<double> joint_objective(const segnet::SegNet<double>&, const gan::ToyGenerator<double>&,
                                            const gan::ToyDiscriminator<double>&, const Tensor<double>&,
                                            const Tensor<double>&, const data::LabelTensor&,
                                            const std::vector<double>&, const std::vector<double>&,
                                            const std::vector<double>&, double, gan::GeneratorLoss, Rng*);

namespace {

using Entries = std::vector<CheckpointEntry>;

// Statistics are rounded to float so that a checkpoint (float32) carries
// exactly the values training used.
data::NormStats float_rounded(data::NormStats s) {
  for (auto* v : {&s.input_mean, &s.input_std, &s.aux_mean, &s.aux_std}) {
    for (auto& x : *v) x = static_cast<float>(x);
  }
  return s;
}

void put_vector(Entries& out, const std::string& name, const std::vector<double>& v) {
  out.push_back({name, {static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.begin(), v.end())});
}

void put_scalar(Entries& out, const std::string& name, double v) {
  out.push_back({name, {1}, {static_cast<float>(v)}});
}

const CheckpointEntry* find(const Entries& e, const std::string& name) {
  for (const auto& x : e) {
    if (x.name == name) return &x;
  }
  return nullptr;
}

const CheckpointEntry& require(const Entries& e, const std::string& name) {
  const auto* x = find(e, name);
  if (x == nullptr) throw ad::CheckpointMismatch(name, "missing from checkpoint");
  return *x;
}

std::vector<double> get_vector(const Entries& e, const std::string& name) {
  const auto& x = require(e, name);
  return {x.values.begin(), x.values.end()};
}

Entries with_prefix(const Entries& e, const std::string& prefix) {
  Entries out;
  for (const auto& x : e) {
    if (x.name.rfind(prefix, 0) == 0) out.push_back(x);
  }
  return out;
}

bool has_prefix(const Entries& e, const std::string& prefix) { return !with_prefix(e, prefix).empty(); }

void put_norm(Entries& out, const data::NormStats& s) {
  put_vector(out, "norm.input_mean", s.input_mean);
  put_vector(out, "norm.input_std", s.input_std);
  put_vector(out, "norm.aux_mean", s.aux_mean);
  put_vector(out, "norm.aux_std", s.aux_std);
}

data::NormStats get_norm(const Entries& e) {
  data::NormStats s;
  s.input_mean = get_vector(e, "norm.input_mean");
  s.input_std = get_vector(e, "norm.input_std");
  s.aux_mean = get_vector(e, "norm.aux_mean");
  s.aux_std = get_vector(e, "norm.aux_std");
  return s;
}

std::vector<std::string> trainable_names(const ad::ParamStore<float>& store) {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    if (!store.is_buffer(n)) out.push_back(n);
  }
  return out;
}

void put_adam(Entries& out, const std::string& prefix, const ad::AdamState<float>& st,
              const ad::ParamStore<float>& store) {
  put_scalar(out, prefix + "step", static_cast<double>(st.step_count));
  put_scalar(out, prefix + "zero_steps", static_cast<double>(st.zero_gradient_steps));
  if (st.step_count == 0) return;
  const auto names = trainable_names(store);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& t = store.at(names[i]);
    std::vector<std::uint32_t> dims(t.shape().begin(), t.shape().end());
    out.push_back({prefix + "m." + names[i], dims, st.first_moment.at(i)});
    out.push_back({prefix + "v." + names[i], dims, st.second_moment.at(i)});
  }
}

void get_adam(const Entries& e, const std::string& prefix, ad::AdamState<float>& st,
              const ad::ParamStore<float>& store) {
  st.step_count = static_cast<std::uint64_t>(require(e, prefix + "step").values.at(0));
  st.zero_gradient_steps = static_cast<std::uint64_t>(require(e, prefix + "zero_steps").values.at(0));
  st.first_moment.clear();
  st.second_moment.clear();
  if (st.step_count == 0) return;
  for (const auto& name : trainable_names(store)) {
    const auto& m = require(e, prefix + "m." + name);
    const auto& v = require(e, prefix + "v." + name);
    if (m.values.size() != store.at(name).numel() || v.values.size() != m.values.size()) {
      throw ad::CheckpointMismatch(prefix + "m." + name, "optimizer state has the wrong size");
    }
    st.first_moment.push_back(m.values);
    st.second_moment.push_back(v.values);
  }
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng = Rng::derive(seed, epoch, 0x9e1);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared by training-time evaluation and `eval`.
struct Predictor {
  const segnet::SegNet<float>* net = nullptr;
  const gan::ToyGenerator<float>* gen = nullptr;  // joint models translate live
  const data::NormStats* norm = nullptr;
};

std::vector<std::uint8_t> predict(const Predictor& p, std::span<const data::PreparedSample> samples) {
  ad::NoGradGuard guard;
  if (p.gen == nullptr) {
    const auto batch = data::make_batch<float>(samples, p.norm);
    return segnet::argmax_labels(p.net->forward(batch.input, batch.aux, ad::Mode::eval).logits);
  }
  data::NormStats raw = *p.norm;
  std::fill(raw.input_mean.begin(), raw.input_mean.end(), 0.0);
  std::fill(raw.input_std.begin(), raw.input_std.end(), 1.0);
  const auto batch = data::make_batch<float>(samples, &raw);
  const auto fake = p.gen->forward(batch.input);
  const std::size_t n = fake.dim(0), c = fake.dim(1), plane = fake.dim(2) * fake.dim(3);
  std::vector<float> v(fake.data().begin(), fake.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float mean = static_cast<float>(p.norm->input_mean[ch]);
      const float gain = static_cast<float>(1.0 / p.norm->input_std[ch]);
      for (std::size_t k = 0; k < plane; ++k) {
        float& x = v[(i * c + ch) * plane + k];
        x = (x - mean) * gain;
      }
    }
  }
  return segnet::argmax_labels(
      p.net->forward(Tensor<float>(fake.shape(), std::move(v)), batch.aux, ad::Mode::eval).logits);
}

metrics::ConfusionMatrix score(const Predictor& p, const std::vector<data::PreparedSample>& samples,
                               std::size_t batch, std::size_t classes) {
  metrics::ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < samples.size(); i += batch) {
    const auto span = std::span(samples).subspan(i, std::min(batch, samples.size() - i));
    const auto pred = predict(p, span);
    std::size_t offset = 0;
    for (const auto& s : span) {
      const auto n = s.label.ids.size();
      cm.accumulate(std::span<const std::uint8_t>(s.label.ids),
                    std::span<const std::uint8_t>(pred).subspan(offset, n));
      offset += n;
    }
  }
  return cm;
}

// Preparation options for the network input. Joint models see the raw
// image and translate inside the graph.
data::BatchOptions preparation(const RunConfig& cfg, bool joint) {
  auto opts = batch_options(cfg);
  if (joint) {
    if (opts.input != data::InputMode::rgb && opts.input != data::InputMode::gcs) {
      throw ConfigError("train.mode = joint feeds the generated image to the network; "
                        "data.input_mode must be rgb or gcs");
    }
    opts.input = data::InputMode::rgb;
  } else if (opts.input == data::InputMode::gcs) {
    const auto& ckpt = cfg.get("gan.generator");
    if (ckpt.empty()) throw ConfigError("data.input_mode = gcs needs gan.generator (a gan-train checkpoint)");
    auto gen = std::make_shared<gan::ToyGenerator<float>>(load_generator(ckpt));
    opts.translate = [gen](const imaging::PlanarImage& img) {
      const std::size_t plane = img.pixels();
      std::vector<float> v;
      v.reserve(3 * plane);
      for (const auto& p : img.planes) v.insert(v.end(), p.begin(), p.end());
      const auto out = gan::translate(*gen, Tensor<float>({1, 3, img.height, img.width}, std::move(v)));
      imaging::PlanarImage res(img.width, img.height, 3, imaging::ColorSpace::rgb);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) res.planes[c][i] = out.data()[c * plane + i];
      }
      return res;
    };
  }
  return opts;
}

std::string norm_cache_key(const RunConfig& cfg, const SceneSet& set, bool joint) {
  std::string key = set.key;
  for (const char* k : {"data.input_mode", "data.aux_mode", "data.size", "data.alpha", "data.luminance",
                        "data.depth_max_m", "gan.generator"}) {
    key += std::string(" ") + k + "=" + cfg.get(k);
  }
  return key + (joint ? " joint" : "");
}

bool is_run_directory(const fs::path& p) { return fs::is_directory(p); }

}  // namespace

gan::ToyGenerator<float> load_generator(const fs::path& ckpt) {
  const auto entries = read_checkpoint(ckpt);
  Rng rng(0);
  gan::ToyGenerator<float> gen({}, rng);
  if (has_prefix(entries, "gan.gen.")) {
    gen.params().load_checkpoint(with_prefix(entries, "gan.gen."), "gan.");
  } else {
    gen.params().load_checkpoint(with_prefix(entries, "gen."), "");
  }
  return gen;
}

TrainSummary run_training(const RunConfig& cfg, const TrainRequest& request, std::ostream& log) {
  const bool joint = cfg.get("train.mode") == "joint";
  if (!joint && cfg.get("train.mode") != "seg") {
    throw ConfigError("train.mode: expected seg or joint, got '" + cfg.get("train.mode") + "'");
  }
  const auto spec = network_spec(cfg);
  const auto opts = preparation(cfg, joint);
  const std::uint64_t seed = cfg.seed();
  const std::size_t batch = cfg.get_size("train.batch");
  if (batch == 0) throw ConfigError("train.batch must be at least 1");
  ad::AdamConfig adam{cfg.get_double("train.lr"), cfg.get_double("train.beta1"), cfg.get_double("train.beta2"),
                      cfg.get_double("train.eps")};
  const auto reduction = cfg.get("train.loss_reduction") == "sum" ? ad::Reduction::sum : ad::Reduction::mean;
  if (cfg.get("train.loss_reduction") != "sum" && cfg.get("train.loss_reduction") != "mean") {
    throw ConfigError("train.loss_reduction: expected mean or sum");
  }
  const bool hflip = cfg.get_bool("train.hflip");
  const double lambda = cfg.get_double("joint.lambda_seg");
  const auto gen_form = gan::parse_generator_loss(cfg.get("gan.gen_loss"));
  const auto metrics_absent = metrics::parse_absent_policy(cfg.get("metrics.absent"));
  const std::size_t ckpt_every = cfg.get_size("train.checkpoint_every");
  const std::size_t eval_every = cfg.get_size("train.eval_every");

  fs::create_directories(request.out / "checkpoints");
  write_text_atomic(request.out / "config.txt", cfg.to_text());

  // Data.
  const auto train_set = load_train_set(cfg);
  const auto eval_set = load_eval_set(cfg);
  std::vector<data::PreparedSample> plain, flipped, eval;
  for (const auto& s : train_set.samples) {
    plain.push_back(data::prepare_sample(s, opts));
    if (hflip) flipped.push_back(data::prepare_sample(data::hflip(s), opts));
  }
  for (const auto& s : eval_set.samples) eval.push_back(data::prepare_sample(s, opts));
  const fs::path cache =
      cfg.get("data.norm_cache").empty() ? request.out / "norm_stats.txt" : fs::path(cfg.get("data.norm_cache"));
  const auto norm = float_rounded(data::cached_norm_stats(cache, norm_cache_key(cfg, train_set, joint),
                                                          [&] { return data::compute_norm_stats(plain); }));
  data::NormStats batch_norm_stats = norm;  // joint: input stays raw, G output is normalised in the graph
  if (joint) {
    std::fill(batch_norm_stats.input_mean.begin(), batch_norm_stats.input_mean.end(), 0.0);
    std::fill(batch_norm_stats.input_std.begin(), batch_norm_stats.input_std.end(), 1.0);
  }
  std::vector<data::LabelMap> labels;
  for (const auto& p : plain) labels.push_back(p.label);
  const auto stats = data::compute_class_stats(labels, spec.classes);
  if (stats.empty()) throw ConfigError("training set has no labelled pixels");
  const auto weights = segnet::class_weights(stats, cfg.get_double("train.class_c"));

  std::vector<Tensor<float>> targets;  // joint: clear-weather images for D
  if (joint) {
    for (const auto& s : load_target_set(cfg).samples) {
      const auto& img = s.rgb;
      std::vector<float> v;
      for (const auto& p : img.planes) v.insert(v.end(), p.begin(), p.end());
      targets.emplace_back(ad::Shape{1, 3, img.height, img.width}, std::move(v));
    }
  }

  // Models.
  Rng init(seed);
  segnet::SegNet<float> net(spec, data::aux_channels(opts.aux), init);
  gan::ToyGenerator<float> gen({}, init);
  gan::ToyDiscriminator<float> disc({}, init);
  if (joint && !cfg.get("gan.generator").empty()) gen = load_generator(cfg.get("gan.generator"));
  ad::AdamState<float> opt_model(adam), opt_gen(adam), opt_disc(adam);
  opt_gen.config.lr *= cfg.get_double("gan.gen_lr_scale");
  auto model_params = net.params().parameters();
  auto gen_params = gen.params().parameters();
  auto disc_params = disc.params().parameters();

  const std::size_t n = plain.size();
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const std::size_t total = cfg.get_size("train.steps") > 0 ? cfg.get_size("train.steps")
                                                             : cfg.get_size("train.epochs") * per_epoch;
  if (total == 0) throw ConfigError("nothing to train: train.steps and train.epochs are both 0");

  std::size_t start = 0;
  float best = -1.0f;
  std::vector<TraceRow> trace;
  std::string timing = "step\twall_ms\n";
  std::string evals = "step\tglobal_acc\tclass_avg_acc\tmean_iou\n";
  if (request.resume) {
    fs::path ckpt = *request.resume;
    if (is_run_directory(ckpt)) ckpt /= "latest.fogw";
    const auto entries = read_checkpoint(ckpt);
    net.params().load_checkpoint(with_prefix(entries, "model."), "model.");
    get_adam(entries, "optim.model.", opt_model, net.params());
    if (joint) {
      if (!has_prefix(entries, "gan.gen.")) throw ad::CheckpointMismatch("gan.gen", "checkpoint is not from joint training");
      gen.params().load_checkpoint(with_prefix(entries, "gan.gen."), "gan.");
      disc.params().load_checkpoint(with_prefix(entries, "gan.disc."), "gan.");
      get_adam(entries, "optim.gen.", opt_gen, gen.params());
      get_adam(entries, "optim.disc.", opt_disc, disc.params());
    }
    start = static_cast<std::size_t>(require(entries, "train.step").values.at(0));
    best = require(entries, "train.best_miou").values.at(0);
    if (fs::exists(request.out / "trace.tsv")) {
      for (const auto& r : parse_trace(read_text(request.out / "trace.tsv"))) {
        if (r.step <= start) trace.push_back(r);
      }
    }
    if (fs::exists(request.out / "evals.tsv")) {
      std::istringstream in(read_text(request.out / "evals.tsv"));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (!line.empty() && std::stoull(line.substr(0, line.find('\t'))) <= start) evals += line + "\n";
      }
    }
    log << "resuming from " << ckpt.string() << " at step " << start << "\n";
  }

  const Predictor predictor{&net, joint ? &gen : nullptr, &norm};
  auto checkpoint = [&](std::size_t step) {
    Entries e = net.params().to_checkpoint("model.");
    put_adam(e, "optim.model.", opt_model, net.params());
    if (joint) {
      for (auto& x : gen.params().to_checkpoint("gan.")) e.push_back(std::move(x));
      for (auto& x : disc.params().to_checkpoint("gan.")) e.push_back(std::move(x));
      put_adam(e, "optim.gen.", opt_gen, gen.params());
      put_adam(e, "optim.disc.", opt_disc, disc.params());
    }
    put_norm(e, norm);
    put_scalar(e, "train.step", static_cast<double>(step));
    put_scalar(e, "train.best_miou", best);
    return e;
  };

  std::optional<metrics::MetricReport> last_eval;
  std::vector<std::size_t> perm;
  std::size_t perm_epoch = SIZE_MAX;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t step = start + 1; step <= total; ++step) {
    const std::size_t epoch = (step - 1) / per_epoch, offset = (step - 1) % per_epoch;
    if (epoch != perm_epoch) {
      perm = permutation(n, seed, epoch);
      perm_epoch = epoch;
    }
    Rng flip_rng = Rng::derive(seed, step, 1);
    Rng dropout_rng = Rng::derive(seed, step, 2);
    std::vector<data::PreparedSample> chosen;
    for (std::size_t i = offset * batch; i < std::min(n, (offset + 1) * batch); ++i) {
      const bool flip = hflip && flip_rng.bernoulli(0.5);
      chosen.push_back(flip ? flipped[perm[i]] : plain[perm[i]]);
    }
    const auto b = data::make_batch<float>(std::span<const data::PreparedSample>(chosen), &batch_norm_stats);

    TraceRow row;
    row.step = step;
    row.lr = adam.lr;
    if (!joint) {
      net.params().zero_grad();
      const auto logits = net.forward(b.input, b.aux, ad::Mode::train, &dropout_rng).logits;
      const auto loss = segnet::seg_loss(logits, b.labels, weights, reduction);
      row.seg_loss = row.total_loss = loss.item();
      if (std::isfinite(row.seg_loss)) {
        loss.backward();
        ad::adam_step<float>(model_params, opt_model);
      }
    } else {
      // Discriminator on clear targets against detached generator output.
      Rng target_rng = Rng::derive(seed, step, 3);
      std::vector<float> yv;
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        const auto& t = targets[target_rng.below(targets.size())];
        yv.insert(yv.end(), t.data().begin(), t.data().end());
      }
      const Tensor<float> y(b.input.shape(), std::move(yv));
      Tensor<float> fake;
      {
        ad::NoGradGuard guard;
        fake = gen.forward(b.input);
      }
      disc.params().zero_grad();
      const auto d = gan::adv_loss(disc.forward(y), disc.forward(fake), gen_form);
      row.disc_loss = d.disc.item();
      if (std::isfinite(*row.disc_loss)) {
        d.disc.backward();
        ad::adam_step<float>(disc_params, opt_disc);
      }
      net.params().zero_grad();
      gen.params().zero_grad();
      disc.params().zero_grad();
      const auto terms = joint_objective(net, gen, disc, b.input, b.aux, b.labels, weights, norm.input_mean,
                                         norm.input_std, lambda, gen_form, &dropout_rng);
      row.seg_loss = terms.seg.item();
      row.adv_loss = terms.adv.item();
      row.total_loss = terms.total.item();
      if (std::isfinite(row.total_loss)) {
        terms.total.backward();
        ad::adam_step<float>(model_params, opt_model);
        ad::adam_step<float>(gen_params, opt_gen);
      }
    }
    trace.push_back(row);
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    timing += std::to_string(step) + "\t" + std::to_string(static_cast<long long>(ms)) + "\n";

    const bool finite = std::isfinite(row.total_loss) && (!row.disc_loss || std::isfinite(*row.disc_loss));
    if (!finite) {
      write_text_atomic(request.out / "trace.tsv", format_trace(trace));
      throw Error("loss is not finite at step " + std::to_string(step) + "; trace written to " +
                  (request.out / "trace.tsv").string());
    }

    const bool last = step == total;
    if ((eval_every > 0 && step % eval_every == 0) || last) {
      const auto r = metrics::report(score(predictor, eval, batch, spec.classes), metrics_absent);
      std::ostringstream line;
      line << step << "\t" << r.global_acc << "\t" << r.class_avg_acc << "\t" << r.mean_iou << "\n";
      evals += line.str();
      log << "step " << step << " loss " << row.total_loss << " mIoU " << r.mean_iou << " global "
          << r.global_acc << "\n";
      last_eval = r;
      if (static_cast<float>(r.mean_iou) > best) {
        best = static_cast<float>(r.mean_iou);
        write_checkpoint(request.out / "best.fogw", checkpoint(step));
      }
    }
    if ((ckpt_every > 0 && step % ckpt_every == 0) || last) {
      const auto entries = checkpoint(step);
      char name[32];
      std::snprintf(name, sizeof name, "step_%06zu.fogw", step);
      write_checkpoint(request.out / "checkpoints" / name, entries);
      write_checkpoint(request.out / "latest.fogw", entries);
      write_text_atomic(request.out / "trace.tsv", format_trace(trace));
      write_text_atomic(request.out / "evals.tsv", evals);
    }
  }

  write_text_atomic(request.out / "trace.tsv", format_trace(trace));
  write_text_atomic(request.out / "timing.tsv", timing);
  write_text_atomic(request.out / "evals.tsv", evals);
  plot_trace(trace, request.out / "loss.png");
  if (last_eval) {
    write_text_atomic(request.out / "metrics.txt", metrics::format_text(*last_eval));
    write_text_atomic(request.out / "metrics.csv", metrics::format_csv(*last_eval));
  }
  TrainSummary summary;
  summary.steps = total;
  summary.final_loss = trace.empty() ? 0.0 : trace.back().total_loss;
  summary.best_miou = best;
  summary.last_eval = last_eval;
  return summary;
}

const std::array<std::array<std::uint8_t, 3>, data::kNumClasses>& class_palette() {
  static const std::array<std::array<std::uint8_t, 3>, data::kNumClasses> palette{{
      {128, 64, 128}, {244, 35, 232}, {70, 70, 70},   {102, 102, 156}, {190, 153, 153},
      {153, 153, 153}, {250, 170, 30}, {220, 220, 0}, {107, 142, 35},  {152, 251, 152},
      {70, 130, 180}, {220, 20, 60},   {255, 0, 0},    {0, 0, 142},     {0, 0, 70},
      {0, 60, 100},   {0, 80, 100},    {0, 0, 230},    {119, 11, 32},
  }};
  return palette;
}

RawImage colorize(const data::LabelMap& labels) {
  RawImage img;
  img.width = static_cast<std::uint32_t>(labels.width);
  img.height = static_cast<std::uint32_t>(labels.height);
  img.channels = 3;
  img.samples.assign(labels.ids.size() * 3, 0);
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    if (labels.ids[i] >= data::kNumClasses) continue;
    const auto& c = class_palette()[labels.ids[i]];
    for (int k = 0; k < 3; ++k) img.samples[i * 3 + k] = c[k];
  }
  return img;
}

EvalResult run_eval(const RunConfig& cfg, const EvalRequest& request, std::ostream& log) {
  const auto spec = network_spec(cfg);
  const auto eval_set = load_eval_set(cfg);
  const auto absent = metrics::parse_absent_policy(cfg.get("metrics.absent"));
  const std::size_t batch = std::max<std::size_t>(1, cfg.get_size("train.batch"));

  std::vector<data::LabelMap> gt;
  std::vector<std::string> ids;
  for (const auto& s : eval_set.samples) {
    if (!s.label) throw ConfigError("eval sample '" + s.id + "' has no label");
    gt.push_back(*s.label);
    ids.push_back(s.id);
  }
  std::vector<data::LabelMap> pred;
  if (request.predictor == "oracle") {
    for (auto m : gt) {
      for (auto& v : m.ids) v = v == data::kIgnore ? 0 : v;
      pred.push_back(std::move(m));
    }
  } else if (request.predictor.rfind("constant:", 0) == 0) {
    const auto k = std::stoul(request.predictor.substr(9));
    if (k >= spec.classes) throw ConfigError("constant predictor class out of range");
    for (const auto& m : gt) pred.emplace_back(m.width, m.height, static_cast<std::uint8_t>(k));
  } else if (request.predictor == "model") {
    if (!request.ckpt) throw ConfigError("eval needs --ckpt");
    const auto entries = read_checkpoint(*request.ckpt);
    const bool joint = has_prefix(entries, "gan.gen.");
    const auto opts = preparation(cfg, joint);
    Rng rng(0);
    segnet::SegNet<float> net(spec, data::aux_channels(opts.aux), rng);
    net.params().load_checkpoint(with_prefix(entries, "model."), "model.");
    gan::ToyGenerator<float> gen({}, rng);
    if (joint) gen.params().load_checkpoint(with_prefix(entries, "gan.gen."), "gan.");
    const auto norm = get_norm(entries);
    const Predictor p{&net, joint ? &gen : nullptr, &norm};
    std::vector<data::PreparedSample> prepared;
    for (const auto& s : eval_set.samples) prepared.push_back(data::prepare_sample(s, opts));
    for (std::size_t i = 0; i < prepared.size(); i += batch) {
      const auto span = std::span<const data::PreparedSample>(prepared).subspan(i, std::min(batch, prepared.size() - i));
      const auto labels = predict(p, span);
      std::size_t offset = 0;
      for (const auto& s : span) {
        data::LabelMap m(s.label.width, s.label.height, 0);
        std::copy_n(labels.begin() + offset, m.ids.size(), m.ids.begin());
        offset += m.ids.size();
        pred.push_back(std::move(m));
      }
    }
  } else {
    throw ConfigError("unknown predictor '" + request.predictor + "' (model, oracle or constant:<class>)");
  }

  metrics::ConfusionMatrix cm(spec.classes);
  for (std::size_t i = 0; i < gt.size(); ++i) cm.accumulate(gt[i], pred[i]);
  EvalResult result;
  result.report = metrics::report(cm, absent);
  fs::create_directories(request.out);
  write_text_atomic(request.out / "metrics.txt", metrics::format_text(result.report));
  write_text_atomic(request.out / "metrics.csv", metrics::format_csv(result.report));
  if (request.pred_out) {
    fs::create_directories(*request.pred_out);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      std::string stem = ids[i];
      std::replace(stem.begin(), stem.end(), '/', '_');
      write_png(*request.pred_out / (stem + ".png"), colorize(pred[i]));
    }
  }
  log << metrics::format_text(result.report);
  if (request.min_miou && result.report.mean_iou < *request.min_miou) {
    log << "mean IoU " << result.report.mean_iou << " is below the required " << *request.min_miou << "\n";
    result.exit_code = 2;
  }
  return result;
}

}  // namespace fogsight::app
