#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fogsight/checkpoint.hpp"
#include "fogsight/dataio.hpp"
#include "fogsight/error.hpp"

namespace fogsight::data {

InputMode parse_input_mode(const std::string& name) {
  if (name == "rgb") return InputMode::rgb;
  if (name == "iit") return InputMode::iit;
  if (name == "iab") return InputMode::iab;
  if (name == "ihs") return InputMode::ihs;
  if (name == "gcs") return InputMode::gcs;
  throw ConfigError("data.input_mode must be rgb, iit, iab, ihs or gcs, got '" + name + "'");
}

AuxMode parse_aux_mode(const std::string& name) {
  if (name == "dl") return AuxMode::dl;
  if (name == "l") return AuxMode::l;
  if (name == "none") return AuxMode::none;
  throw ConfigError("data.aux_mode must be dl, l or none, got '" + name + "'");
}

const char* to_string(InputMode mode) {
  switch (mode) {
    case InputMode::rgb: return "rgb";
    case InputMode::iit: return "iit";
    case InputMode::iab: return "iab";
    case InputMode::ihs: return "ihs";
    case InputMode::gcs: return "gcs";
  }
  return "?";
}

const char* to_string(AuxMode mode) {
  switch (mode) {
    case AuxMode::dl: return "dl";
    case AuxMode::l: return "l";
    case AuxMode::none: return "none";
  }
  return "?";
}

std::size_t aux_channels(AuxMode mode) {
  return mode == AuxMode::dl ? 2 : mode == AuxMode::l ? 1 : 0;
}

PreparedSample prepare_sample(const SceneSample& sample, const BatchOptions& options) {
  using imaging::PlanarImage;
  PreparedSample out;
  out.id = sample.id;
  PlanarImage rgb = resize_bilinear(sample.rgb, options.width, options.height);
  switch (options.input) {
    case InputMode::rgb:
      out.input = rgb.planes;
      break;
    case InputMode::iit: {
      const auto inv = imaging::illumination_invariant(rgb, options.alpha);
      out.input.assign(3, inv.planes[0]);
      break;
    }
    case InputMode::iab:
      out.input = imaging::compose_iab(rgb, options.alpha).planes;
      break;
    case InputMode::ihs:
      out.input = imaging::compose_ihs(rgb, options.alpha).planes;
      break;
    case InputMode::gcs:
      if (!options.translate) throw ConfigError("input mode gcs needs a trained generator");
      rgb = options.translate(rgb);
      out.input = rgb.planes;
      break;
  }

  if (options.aux == AuxMode::dl) {
    if (!sample.depth) {
      throw ConfigError("sample '" + sample.id + "' has no depth but data.aux_mode is dl");
    }
    const auto depth = resize_nearest(*sample.depth, options.width, options.height);
    std::vector<double> plane(depth.meters.size());
    for (std::size_t i = 0; i < plane.size(); ++i) {
      plane[i] = depth.is_valid(i) ? std::min(depth.meters[i], options.depth_max_m) / options.depth_max_m
                                   : 1.0;
    }
    out.aux.push_back(std::move(plane));
  }
  if (options.aux != AuxMode::none) {
    out.aux.push_back(imaging::luminance(rgb, options.luminance).planes[0]);
  }

  if (sample.label) {
    out.label = resize_nearest(*sample.label, options.width, options.height);
    out.labeled = true;
  } else {
    out.label = LabelMap(options.width, options.height);
  }
  return out;
}

namespace {

void plane_moments(std::span<const PreparedSample> samples,
                   const std::vector<std::vector<double>> PreparedSample::*member,
                   std::vector<double>& mean, std::vector<double>& stddev) {
  const std::size_t planes = (samples.front().*member).size();
  mean.assign(planes, 0.0);
  stddev.assign(planes, 1.0);
  for (std::size_t p = 0; p < planes; ++p) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : samples) {
      for (double v : (s.*member)[p]) sum += v;
      count += (s.*member)[p].size();
    }
    const double m = sum / count;
    double sq = 0.0;
    for (const auto& s : samples) {
      for (double v : (s.*member)[p]) sq += (v - m) * (v - m);
    }
    const double sd = std::sqrt(sq / count);
    mean[p] = m;
    stddev[p] = sd > 1e-12 ? sd : 1.0;
  }
}

std::string join(const std::vector<double>& values) {
  std::string out;
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %.17g", v);
    out += buf;
  }
  return out;
}

}  // namespace

NormStats compute_norm_stats(std::span<const PreparedSample> samples) {
  if (samples.empty()) throw UsageError("normalisation statistics need at least one sample");
  NormStats st;
  st.samples = samples.size();
  plane_moments(samples, &PreparedSample::input, st.input_mean, st.input_std);
  plane_moments(samples, &PreparedSample::aux, st.aux_mean, st.aux_std);
  return st;
}

std::string NormStats::to_text() const {
  std::ostringstream out;
  out << "samples " << samples << "\n";
  out << "input_mean" << join(input_mean) << "\n";
  out << "input_std" << join(input_std) << "\n";
  out << "aux_mean" << join(aux_mean) << "\n";
  out << "aux_std" << join(aux_std) << "\n";
  return out.str();
}

NormStats NormStats::from_text(const std::string& text) {
  NormStats st;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    std::vector<double>* target = nullptr;
    if (key == "samples") {
      fields >> st.samples;
      continue;
    }
    if (key == "input_mean") target = &st.input_mean;
    if (key == "input_std") target = &st.input_std;
    if (key == "aux_mean") target = &st.aux_mean;
    if (key == "aux_std") target = &st.aux_std;
    if (target == nullptr) continue;
    std::string token;
    while (fields >> token) target->push_back(std::strtod(token.c_str(), nullptr));
  }
  if (st.input_mean.size() != st.input_std.size() || st.aux_mean.size() != st.aux_std.size()) {
    throw ConfigError("malformed normalisation statistics");
  }
  return st;
}

NormStats cached_norm_stats(const std::filesystem::path& cache, const std::string& key,
                            const std::function<NormStats()>& compute) {
  if (std::filesystem::is_regular_file(cache)) {
    std::ifstream in(cache);
    std::string first;
    std::getline(in, first);
    if (first == "key " + key) {
      std::stringstream rest;
      rest << in.rdbuf();
      return NormStats::from_text(rest.str());
    }
  }
  NormStats st = compute();
  write_text_atomic(cache, "key " + key + "\n" + st.to_text());
  return st;
}

template <typename T>
Batch<T> make_batch(std::span<const PreparedSample> samples, const NormStats* norm) {
  if (samples.empty()) throw UsageError("make_batch: no samples");
  const std::size_t n = samples.size();
  const std::size_t h = samples.front().label.height, w = samples.front().label.width;
  const std::size_t in_c = samples.front().input.size(), aux_c = samples.front().aux.size();
  const std::size_t plane = h * w;
  for (const auto& s : samples) {
    if (s.input.size() != in_c || s.aux.size() != aux_c || s.label.width != w || s.label.height != h) {
      throw DimensionError("make_batch: sample '" + s.id + "' differs in shape from the first sample");
    }
  }
  if (norm != nullptr && (norm->input_mean.size() != in_c || norm->aux_mean.size() != aux_c)) {
    throw ConfigError("normalisation statistics do not match the input planes");
  }
  const auto fill = [&](std::size_t channels, auto member, const std::vector<double>* mean,
                        const std::vector<double>* stddev) {
    std::vector<T> values(n * channels * plane);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const auto& src = (samples[b].*member)[c];
        const double m = mean ? (*mean)[c] : 0.0;
        const double s = stddev ? (*stddev)[c] : 1.0;
        T* dst = values.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>((src[i] - m) / s);
      }
    }
    return ad::Tensor<T>({n, channels, h, w}, std::move(values));
  };
  Batch<T> batch;
  batch.input = fill(in_c, &PreparedSample::input, norm ? &norm->input_mean : nullptr,
                     norm ? &norm->input_std : nullptr);
  if (aux_c > 0) {
    batch.aux = fill(aux_c, &PreparedSample::aux, norm ? &norm->aux_mean : nullptr,
                     norm ? &norm->aux_std : nullptr);
  }
  batch.labels = {n, h, w, {}};
  batch.labels.ids.reserve(n * plane);
  for (const auto& s : samples) {
    batch.labels.ids.insert(batch.labels.ids.end(), s.label.ids.begin(), s.label.ids.end());
    batch.ids.push_back(s.id);
  }
  return batch;
}

template <typename T>
Batch<T> make_batch(std::span<const SceneSample> samples, const BatchOptions& options,
                    const NormStats* norm) {
  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) prepared.push_back(prepare_sample(s, options));
  return make_batch<T>(std::span<const PreparedSample>(prepared), norm);
}

template Batch<float> make_batch<float>(std::span<const PreparedSample>, const NormStats*);
template Batch<double> make_batch<double>(std::span<const PreparedSample>, const NormStats*);
template Batch<float> make_batch<float>(std::span<const SceneSample>, const BatchOptions&,
                                        const NormStats*);
template Batch<double> make_batch<double>(std::span<const SceneSample>, const BatchOptions&,
                                          const NormStats*);

}  // namespace fogsight::data
