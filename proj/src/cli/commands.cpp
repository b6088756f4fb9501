#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fogsight/app.hpp"
#include "fogsight/checkpoint.hpp"

namespace fogsight::app {

using ad::Tensor;

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

imaging::PlanarImage as_rgb(imaging::PlanarImage img) {
  if (img.channels() == 1) {
    img.planes.resize(3, img.planes[0]);
    img.space = imaging::ColorSpace::rgb;
  }
  if (img.channels() != 3) throw DimensionError("expected a gray or RGB image");
  return img;
}

// A single file, or every PNG inside a directory.
std::vector<fs::path> inputs_of(const fs::path& in) {
  if (fs::is_directory(in)) return list_pngs(in);
  if (!fs::exists(in)) throw IoError("no such file or directory: " + in.string(), 0);
  return {in};
}

// Directory inputs write into `out` by file name; a single file input
// writes to `out` itself unless it names an existing directory.
fs::path output_for(const fs::path& in, const fs::path& file, const fs::path& out) {
  if (fs::is_directory(in) || fs::is_directory(out)) return out / file.filename();
  return out;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

fs::path depth_for(const fs::path& in, const fs::path& file, const fs::path& depth) {
  return fs::is_directory(in) || fs::is_directory(depth) ? depth / file.filename() : depth;
}

Tensor<float> stack(const std::vector<imaging::PlanarImage>& images) {
  if (images.empty()) throw ConfigError("no images to stack");
  const auto w = images[0].width, h = images[0].height;
  std::vector<float> v;
  v.reserve(images.size() * 3 * w * h);
  for (const auto& img : images) {
    for (const auto& p : img.planes) v.insert(v.end(), p.begin(), p.end());
  }
  return Tensor<float>({images.size(), 3, h, w}, std::move(v));
}

imaging::PlanarImage unstack(const Tensor<float>& t, std::size_t n) {
  const auto h = t.dim(2), w = t.dim(3), plane = h * w;
  imaging::PlanarImage img(w, h, 3, imaging::ColorSpace::rgb);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) img.planes[c][i] = t.data()[(n * 3 + c) * plane + i];
  }
  return img;
}

Tensor<float> load_domain(const fs::path& dir, std::size_t w, std::size_t h) {
  std::vector<imaging::PlanarImage> images;
  for (const auto& p : list_pngs(dir)) {
    images.push_back(data::resize_bilinear(as_rgb(imaging::load_png(p)), w, h));
  }
  if (images.empty()) throw ConfigError("no PNG images in " + dir.string());
  return stack(images);
}

}  // namespace

int cmd_transform(const TransformRequest& req, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> known{"iit", "iab", "ihs", "luminance", "fog"};
  if (std::find(known.begin(), known.end(), req.transform) == known.end()) {
    err << "error: unknown transform '" << req.transform << "' (iit, iab, ihs, luminance, fog)\n";
    return 1;
  }
  if (req.transform == "fog" && !req.depth) {
    err << "error: the fog transform needs --depth\n";
    return 1;
  }
  const auto files = inputs_of(req.in);
  if (files.empty()) {
    err << "warning: no PNG files in " << req.in.string() << "\n";
    return 0;
  }
  std::size_t failed = 0;
  for (const auto& file : files) {
    try {
      const RawImage raw = read_png(file);
      const auto rgb = as_rgb(imaging::to_planar(raw));
      imaging::PlanarImage result;
      unsigned bits = 16;
      if (req.transform == "iit") {
        result = imaging::illumination_invariant(rgb, req.alpha);
      } else if (req.transform == "iab") {
        result = imaging::compose_iab(rgb, req.alpha);
      } else if (req.transform == "ihs") {
        result = imaging::compose_ihs(rgb, req.alpha);
      } else if (req.transform == "luminance") {
        result = imaging::luminance(rgb);
      } else {
        const auto depth = imaging::decode_depth(read_png(depth_for(req.in, file, *req.depth)), req.depth_decode);
        if (depth.width != rgb.width || depth.height != rgb.height) {
          throw DimensionError("depth map is " + std::to_string(depth.width) + "x" +
                               std::to_string(depth.height) + ", image is " + std::to_string(rgb.width) +
                               "x" + std::to_string(rgb.height));
        }
        result = imaging::simulate_fog(rgb, depth, req.fog);
        bits = raw.bit_depth;
      }
      const auto dest = output_for(req.in, file, req.out);
      ensure_parent(dest);
      imaging::save_png(dest, result, bits);
      out << file.filename().string() << " -> " << dest.string() << "\n";
    } catch (const std::exception& e) {
      err << "error: " << file.string() << ": " << e.what() << "\n";
      ++failed;
    }
  }
  if (failed) err << failed << " of " << files.size() << " files failed\n";
  return failed ? 1 : 0;
}

int cmd_fog(const FogRequest& req, std::ostream& out, std::ostream& err) {
  if (req.betas.empty()) {
    err << "error: at least one --beta is required\n";
    return 1;
  }
  for (double b : req.betas) {
    if (!(b >= 0.0) || !std::isfinite(b)) {
      err << "error: beta must be a finite non-negative number, got " << b << "\n";
      return 1;
    }
  }
  const auto files = inputs_of(req.in);
  if (files.empty()) {
    err << "warning: no PNG files in " << req.in.string() << "\n";
    return 0;
  }
  // Every image needs its depth map before anything is written.
  std::vector<std::string> missing;
  for (const auto& f : files) {
    if (!fs::exists(depth_for(req.in, f, req.depth))) missing.push_back(f.stem().string());
  }
  if (!missing.empty()) {
    err << "error: no depth map for " << missing.size() << " image(s):";
    for (const auto& s : missing) err << " " << s;
    err << "\n";
    return 1;
  }
  std::size_t failed = 0;
  for (const auto& file : files) {
    try {
      const RawImage raw = read_png(file);
      const auto rgb = as_rgb(imaging::to_planar(raw));
      const auto depth = imaging::decode_depth(read_png(depth_for(req.in, file, req.depth)), req.depth_decode);
      if (depth.width != rgb.width || depth.height != rgb.height) {
        throw DimensionError("depth map size differs from the image");
      }
      for (double beta : req.betas) {
        const fs::path dir = req.betas.size() > 1 ? req.out / ("beta_" + shortest(beta)) : req.out;
        fs::create_directories(dir);
        imaging::save_png(dir / file.filename(), imaging::simulate_fog(rgb, depth, {beta, req.atmospheric_light}),
                          raw.bit_depth);
      }
      out << file.filename().string() << "\n";
    } catch (const std::exception& e) {
      err << "error: " << file.string() << ": " << e.what() << "\n";
      ++failed;
    }
  }
  for (double beta : req.betas) {
    const fs::path dir = req.betas.size() > 1 ? req.out / ("beta_" + shortest(beta)) : req.out;
    fs::create_directories(dir);
    write_text_atomic(dir / "fog.txt", "beta = " + shortest(beta) + "\natmospheric_light = " +
                                           shortest(req.atmospheric_light) + "\ndepth_decode = " +
                                           (req.depth_decode == imaging::DepthDecode::disparity256
                                                ? "disparity256"
                                                : "meters16") +
                                           "\n");
  }
  return failed ? 1 : 0;
}

int cmd_gan_train(const RunConfig& cfg, const fs::path& out, std::ostream& log, std::ostream& err) {
  const std::string size_text = cfg.get("gan.size");
  std::size_t w = 0, h = 0;
  if (size_text.find('x') != std::string::npos) {
    std::tie(w, h) = parse_size(size_text);
  } else {
    w = h = cfg.get_size("gan.size");
  }
  if (w == 0 || h == 0) throw ConfigError("gan.size must be positive");

  gan::DomainPair<float> pair;
  std::optional<gan::VeilCorpus> held_out;
  const std::size_t synthetic = cfg.get_size("gan.synthetic");
  if (synthetic > 0) {
    if (w != h) throw ConfigError("synthetic GAN images are square; set gan.size to one number");
    // Source and target come from different seeds so the pairs are unaligned.
    pair.source = gan::synthetic_veil_corpus(synthetic, w, 11).veiled;
    pair.target = gan::synthetic_veil_corpus(synthetic, w, 12).clean;
    held_out = gan::synthetic_veil_corpus(std::max<std::size_t>(16, synthetic / 4), w, 13);
  } else {
    if (cfg.get("gan.source_root").empty() || cfg.get("gan.target_root").empty()) {
      throw ConfigError("gan-train needs gan.source_root and gan.target_root, or gan.synthetic > 0");
    }
    pair.source = load_domain(cfg.get("gan.source_root"), w, h);
    pair.target = load_domain(cfg.get("gan.target_root"), w, h);
  }

  gan::GanTrainOptions opts;
  opts.steps = cfg.get_size("gan.steps");
  opts.batch = cfg.get_size("gan.batch");
  opts.seed = cfg.seed();
  opts.adam = {cfg.get_double("train.lr"), cfg.get_double("train.beta1"), cfg.get_double("train.beta2"),
               cfg.get_double("train.eps")};
  opts.gen_lr_scale = cfg.get_double("gan.gen_lr_scale");
  opts.gen_loss = gan::parse_generator_loss(cfg.get("gan.gen_loss"));

  fs::create_directories(out);
  write_text_atomic(out / "config.txt", cfg.to_text());

  auto write_trace = [&](const std::vector<gan::GanTraceRow>& rows) {
    std::string text = "step\tdisc_loss\tgen_loss\td_real\td_fake\n";
    std::vector<Curve> curves{{{214, 39, 40}, {}}, {{44, 160, 44}, {}}};
    for (const auto& r : rows) {
      text += std::to_string(r.step) + "\t" + shortest(r.disc_loss) + "\t" + shortest(r.gen_loss) + "\t" +
              shortest(r.d_real) + "\t" + shortest(r.d_fake) + "\n";
      curves[0].points.emplace_back(r.step, r.gen_loss);
      curves[1].points.emplace_back(r.step, r.disc_loss);
    }
    write_text_atomic(out / "gan_trace.tsv", text);
    plot_curves(curves, out / "gan_loss.png");
  };

  log << "gan-train: " << pair.source.dim(0) << " source, " << pair.target.dim(0) << " target images at " << w
      << "x" << h << ", " << opts.steps << " steps\n";
  try {
    auto result = gan::train_toy_gan(pair, gan::ToyGanSpec{}, opts);
    write_trace(result.trace);
    auto entries = result.generator.params().to_checkpoint();
    const auto disc = result.discriminator.params().to_checkpoint();
    entries.insert(entries.end(), disc.begin(), disc.end());
    write_checkpoint(out / "generator.fogw", entries);
    if (!result.trace.empty()) {
      const auto& last = result.trace.back();
      log << "final disc_loss " << last.disc_loss << ", gen_loss " << last.gen_loss << "\n";
    }
    if (held_out) {
      const double before = gan::mean_abs_error(held_out->veiled, held_out->clean);
      const double after = gan::mean_abs_error(gan::translate(result.generator, held_out->veiled), held_out->clean);
      const double reduction = 1.0 - after / before;
      write_text_atomic(out / "gan_eval.txt", "mae_before = " + shortest(before) + "\nmae_after = " +
                                                  shortest(after) + "\nreduction = " + shortest(reduction) +
                                                  "\n");
      log << "held-out MAE " << before << " -> " << after << " (" << std::fixed << std::setprecision(1)
          << 100.0 * reduction << "% lower)\n"
          << std::defaultfloat;
    }
  } catch (const gan::GanDivergence& e) {
    write_trace(e.trace());
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cmd_translate(const TranslateRequest& req, std::ostream& out, std::ostream& err) {
  const auto gen = load_generator(req.ckpt);
  const auto files = inputs_of(req.in);
  if (files.empty()) {
    err << "warning: no PNG files in " << req.in.string() << "\n";
    return 0;
  }
  std::size_t failed = 0;
  for (const auto& file : files) {
    try {
      const RawImage raw = read_png(file);
      const auto rgb = as_rgb(imaging::to_planar(raw));
      const auto result = unstack(gan::translate(gen, stack({rgb})), 0);
      const auto dest = output_for(req.in, file, req.out);
      ensure_parent(dest);
      imaging::save_png(dest, result, raw.bit_depth);
      out << file.filename().string() << " -> " << dest.string() << "\n";
    } catch (const std::exception& e) {
      err << "error: " << file.string() << ": " << e.what() << "\n";
      ++failed;
    }
  }
  return failed ? 1 : 0;
}

int cmd_stats(const RunConfig& cfg, const std::optional<fs::path>& csv, std::ostream& out) {
  const auto set = load_train_set(cfg);
  std::vector<data::LabelMap> labels;
  for (const auto& s : set.samples) {
    if (s.label) labels.push_back(*s.label);
  }
  const auto stats = data::compute_class_stats(labels);
  if (stats.empty()) throw StateError("the training set has no labelled pixels");
  const auto weights = segnet::class_weights(stats, cfg.get_double("train.class_c"));
  const auto probs = stats.probabilities();
  const auto& names = data::class_names();

  out << labels.size() << " labelled images, " << stats.total << " scored pixels\n";
  out << std::left << std::setw(16) << "class" << std::right << std::setw(12) << "pixels" << std::setw(11)
      << "frequency" << std::setw(9) << "weight" << "\n";
  std::string text = "class,pixels,frequency,weight\n";
  for (std::size_t k = 0; k < data::kNumClasses; ++k) {
    out << std::left << std::setw(16) << names[k] << std::right << std::setw(12) << stats.counts[k]
        << std::setw(10) << std::fixed << std::setprecision(2) << 100.0 * probs[k] << "%" << std::setw(9)
        << std::setprecision(3) << weights[k] << "\n";
    text += std::string(names[k]) + "," + std::to_string(stats.counts[k]) + "," + shortest(probs[k]) + "," +
            shortest(weights[k]) + "\n";
  }
  out << std::defaultfloat;
  if (csv) {
    ensure_parent(*csv);
    write_text_atomic(*csv, text);
  }
  return 0;
}

}  // namespace fogsight::app
