#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fogsight/app.hpp"

namespace fogsight::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.values_ = {
      {"run.seed", "0"},
      {"data.layout", "flat"},
      {"data.root", ""},
      {"data.eval_root", ""},
      {"data.synthetic", "0"},
      {"data.synthetic_eval", "0"},
      {"data.synthetic_beta", "0"},
      {"data.size", "128x64"},
      {"data.depth_decode", "disparity256"},
      {"data.depth_max_m", "300"},
      {"data.input_mode", "rgb"},
      {"data.aux_mode", "dl"},
      {"data.alpha", "0.48"},
      {"data.luminance", "printed"},
      {"data.label_table", ""},
      {"data.norm_cache", ""},
      {"train.mode", "seg"},
      {"train.steps", "0"},
      {"train.epochs", "100"},
      {"train.batch", "4"},
      {"train.lr", "0.005"},
      {"train.beta1", "0.5"},
      {"train.beta2", "0.999"},
      {"train.eps", "1e-8"},
      {"train.class_c", "1.10"},
      {"train.hflip", "true"},
      {"train.loss_reduction", "mean"},
      {"train.checkpoint_every", "100"},
      {"train.eval_every", "100"},
      {"joint.lambda_seg", "0.10"},
      {"joint.target_root", ""},
      {"gan.generator", ""},
      {"gan.source_root", ""},
      {"gan.target_root", ""},
      {"gan.synthetic", "0"},
      {"gan.size", "16"},
      {"gan.steps", "2000"},
      {"gan.batch", "16"},
      {"gan.gen_lr_scale", "0.01"},
      {"gan.gen_loss", "non_saturating"},
      {"metrics.absent", "exclude"},
  };
  for (const auto& [k, v] : segnet::to_config(segnet::NetworkSpec{})) c.values_[k] = v;
  return c;
}

void RunConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::apply_environment() {
  if (const char* seed = std::getenv("FOGSIGHT_SEED"); seed != nullptr && *seed != '\0') {
    set("run.seed", seed);
    (void)this->seed();  // validate
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const auto i = get_int(key);
  if (i < 0) throw ConfigError(key + ": must not be negative");
  return static_cast<std::size_t>(i);
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  const auto& v = get("run.seed");
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return s;
  } catch (const std::exception&) {
  }
  throw ConfigError("run.seed: expected a non-negative integer, got '" + v + "'");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t a = 0, b = 0;
      const auto w = std::stoul(text.substr(0, x), &a);
      const auto h = std::stoul(text.substr(x + 1), &b);
      if (a == x && b == text.size() - x - 1 && w > 0 && h > 0) return {w, h};
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("data.size: expected WIDTHxHEIGHT, got '" + text + "'");
}

imaging::LuminanceWeights parse_luminance(const std::string& name) {
  if (name == "printed") return imaging::LuminanceWeights::printed;
  if (name == "standard") return imaging::LuminanceWeights::standard;
  throw ConfigError("data.luminance: expected printed or standard, got '" + name + "'");
}

segnet::NetworkSpec network_spec(const RunConfig& cfg) {
  segnet::NetworkSpec spec;
  for (const auto& key : segnet::model_keys()) segnet::set_model_key(spec, key, cfg.get(key));
  return spec;
}

data::BatchOptions batch_options(const RunConfig& cfg) {
  data::BatchOptions o;
  o.input = data::parse_input_mode(cfg.get("data.input_mode"));
  o.aux = data::parse_aux_mode(cfg.get("data.aux_mode"));
  std::tie(o.width, o.height) = parse_size(cfg.get("data.size"));
  o.alpha = cfg.get_double("data.alpha");
  o.luminance = parse_luminance(cfg.get("data.luminance"));
  o.depth_max_m = cfg.get_double("data.depth_max_m");
  if (!(o.depth_max_m > 0)) throw ConfigError("data.depth_max_m must be positive");
  return o;
}

}  // namespace fogsight::app
