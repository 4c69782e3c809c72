#include <cstdio>
#include <fstream>
#include <sstream>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

namespace m3sot {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos == v.size() && v[0] != '-') return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void apply_config(TrainConfig& cfg, const KeyValues& kv) {
  if (auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "desk") cfg = TrainConfig::desk();
    else if (it->second == "full") cfg = TrainConfig{};
    else throw ConfigError("unknown preset '" + it->second + "'");
  }
  ModelConfig& m = cfg.model;
  for (const auto& [k, v] : kv) {
    if (k == "preset" || k.rfind("syn.", 0) == 0) continue;
    if (k == "input_points") m.field.input_points = to_size(k, v);
    else if (k == "ratios") m.field.ratios = to_list(k, v);
    else if (k == "channels") m.field.channels = to_list(k, v);
    else if (k == "k") m.field.k = to_size(k, v);
    else if (k == "sampling") {
      if (v == "range") m.field.sampling = SamplingMode::kRange;
      else if (v == "random") m.field.sampling = SamplingMode::kRandom;
      else throw ConfigError("sampling must be range or random");
    } else if (k == "layers") m.layers = to_size(k, v);
    else if (k == "head_mode") {
      if (v == "fixed") m.head_mode = HeadMode::kFixed;
      else if (v == "variable") m.head_mode = HeadMode::kVariable;
      else throw ConfigError("head_mode must be fixed or variable");
    } else if (k == "ffn_hidden") m.ffn_hidden = to_size(k, v);
    else if (k == "head_hidden") m.head_hidden = to_size(k, v);
    else if (k == "templates") m.templates = to_size(k, v);
    else if (k == "paradigm") {
      if (v == "many_to_one") m.paradigm = Paradigm::kManyToOne;
      else if (v == "self_chain" || v == "a") m.paradigm = Paradigm::kSelfChain;
      else if (v == "cross_chain" || v == "b") m.paradigm = Paradigm::kCrossChain;
      else throw ConfigError("paradigm must be many_to_one, self_chain or cross_chain");
    } else if (k == "template_layers") m.template_layers = v.empty() ? std::vector<std::size_t>{} : to_list(k, v);
    else if (k == "crop_margin") m.crop_margin = to_double(k, v);
    else if (k == "epochs") cfg.epochs = to_size(k, v);
    else if (k == "batch_size") cfg.batch_size = to_size(k, v);
    else if (k == "learning_rate") cfg.learning_rate = to_double(k, v);
    else if (k == "lr_decay_factor") cfg.lr_decay_factor = to_double(k, v);
    else if (k == "lr_decay_every") cfg.lr_decay_every = to_size(k, v);
    else if (k == "seed") cfg.seed = to_size(k, v);
    else if (k == "max_steps") cfg.max_steps = to_size(k, v);
    else if (k == "augment") cfg.augment = to_bool(k, v);
    else if (k == "augment_translation") cfg.augment_range.translation = to_double(k, v);
    else if (k == "augment_rotation") cfg.augment_range.rotation = to_double(k, v);
    else if (k == "loss_mask") cfg.loss.mask = to_double(k, v);
    else if (k == "loss_center") cfg.loss.center = to_double(k, v);
    else if (k == "loss_box") cfg.loss.box = to_double(k, v);
    else if (k == "use_mask") cfg.loss.use_mask = to_bool(k, v);
    else if (k == "use_center") cfg.loss.use_center = to_bool(k, v);
    else if (k == "use_box") cfg.loss.use_box = to_bool(k, v);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  m.validate();
}

void apply_config(SyntheticSceneConfig& cfg, const KeyValues& kv) {
  for (const auto& [key, v] : kv) {
    if (key.rfind("syn.", 0) != 0) continue;
    const std::string k = key.substr(4);
    auto interval = [&](Interval& r) {
      const auto c = v.find(',');
      if (c == std::string::npos) throw ConfigError("key '" + key + "': expected lo,hi");
      r = {to_double(key, trim(v.substr(0, c))), to_double(key, trim(v.substr(c + 1)))};
    };
    if (k == "category") cfg.category = v;
    else if (k == "size") {
      std::stringstream ss(v);
      std::string a, b, c;
      std::getline(ss, a, ',');
      std::getline(ss, b, ',');
      std::getline(ss, c, ',');
      cfg.size = {to_double(key, trim(a)), to_double(key, trim(b)), to_double(key, trim(c))};
    } else if (k == "size_jitter") cfg.size_jitter = to_double(key, v);
    else if (k == "object_points") cfg.object_points = to_size(key, v);
    else if (k == "clutter_points") cfg.clutter_points = to_size(key, v);
    else if (k == "clutter_extent") cfg.clutter_extent = to_double(key, v);
    else if (k == "step_x") interval(cfg.step_x);
    else if (k == "step_y") interval(cfg.step_y);
    else if (k == "step_z") interval(cfg.step_z);
    else if (k == "step_yaw") interval(cfg.step_yaw);
    else if (k == "occlusion_prob") cfg.occlusion_prob = to_double(key, v);
    else if (k == "drop_fraction") cfg.drop_fraction = to_double(key, v);
    else if (k == "sparsity_ramp") cfg.sparsity_ramp = to_double(key, v);
    else if (k == "frames") cfg.frames = to_size(key, v);
    else if (k == "seed") cfg.seed = to_size(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.validate();
}

std::string format_config(const TrainConfig& cfg) {
  const ModelConfig& m = cfg.model;
  std::string s;
  auto put = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  put("input_points", std::to_string(m.field.input_points));
  put("ratios", join(m.field.ratios));
  put("channels", join(m.field.channels));
  put("k", std::to_string(m.field.k));
  put("sampling", m.field.sampling == SamplingMode::kRange ? "range" : "random");
  put("layers", std::to_string(m.layers));
  put("head_mode", m.head_mode == HeadMode::kFixed ? "fixed" : "variable");
  put("ffn_hidden", std::to_string(m.ffn_hidden));
  put("head_hidden", std::to_string(m.head_hidden));
  put("templates", std::to_string(m.templates));
  put("paradigm", paradigm_name(m.paradigm));
  put("template_layers", join(m.template_layers));
  put("crop_margin", num(m.crop_margin));
  put("epochs", std::to_string(cfg.epochs));
  put("batch_size", std::to_string(cfg.batch_size));
  put("learning_rate", num(cfg.learning_rate));
  put("lr_decay_factor", num(cfg.lr_decay_factor));
  put("lr_decay_every", std::to_string(cfg.lr_decay_every));
  put("seed", std::to_string(cfg.seed));
  put("max_steps", std::to_string(cfg.max_steps));
  put("augment", cfg.augment ? "true" : "false");
  put("augment_translation", num(cfg.augment_range.translation));
  put("augment_rotation", num(cfg.augment_range.rotation));
  put("loss_mask", num(cfg.loss.mask));
  put("loss_center", num(cfg.loss.center));
  put("loss_box", num(cfg.loss.box));
  put("use_mask", cfg.loss.use_mask ? "true" : "false");
  put("use_center", cfg.loss.use_center ? "true" : "false");
  put("use_box", cfg.loss.use_box ? "true" : "false");
  return s;
}

}  // namespace m3sot
