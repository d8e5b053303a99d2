#include "murax/config.h"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "murax/rng.h"

using nlohmann::json;

namespace murax {

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::runtime_error("config key " + key + ": expected boolean, got '" + s + "'");
}

void set_key(RunConfig& c, const std::string& key, const std::string& v) {
  try {
    if (key == "data.root") c.data.root = v;
    else if (key == "data.threads") c.data.threads = std::stoi(v);
    else if (key == "preprocess.side") c.preprocess.side = std::stoi(v);
    else if (key == "preprocess.margin_frac") c.preprocess.margin_frac = std::stod(v);
    else if (key == "preprocess.threshold_override") {
      int t = std::stoi(v);
      if (t < 0) c.preprocess.threshold_override.reset();
      else c.preprocess.threshold_override = t;
    }
    else if (key == "augment.flip_prob") c.augment.flip_prob = std::stod(v);
    else if (key == "augment.max_rotation") c.augment.max_rotation = std::stod(v);
    else if (key == "augment.scale_lo") c.augment.scale_lo = std::stod(v);
    else if (key == "augment.scale_hi") c.augment.scale_hi = std::stod(v);
    else if (key == "augment.brightness_lo") c.augment.brightness_lo = std::stod(v);
    else if (key == "augment.brightness_hi") c.augment.brightness_hi = std::stod(v);
    else if (key == "augment.enabled") c.augment.enabled = parse_bool(v, key);
    else if (key == "model.block_layers") c.model.block_layers = parse_ints(v);
    else if (key == "model.growth_rate") c.model.growth_rate = std::stoi(v);
    else if (key == "model.init_features") c.model.init_features = std::stoi(v);
    else if (key == "model.compression") c.model.compression = std::stod(v);
    else if (key == "model.bottleneck") c.model.bottleneck = parse_bool(v, key);
    else if (key == "model.input_side") c.model.input_side = std::stoi(v);
    else if (key == "model.stem") {
      if (v == "tiny") c.model.stem = StemKind::Tiny;
      else if (v == "full") c.model.stem = StemKind::Full;
      else throw std::runtime_error("config key model.stem: expected tiny|full, got '" + v + "'");
    }
    else if (key == "train.batch_size") c.train.batch_size = std::stoi(v);
    else if (key == "train.lr0") c.train.lr0 = std::stod(v);
    else if (key == "train.lr_decay_every") c.train.lr_decay_every = std::stoi(v);
    else if (key == "train.lr_decay_factor") c.train.lr_decay_factor = std::stod(v);
    else if (key == "train.warmup_epochs") c.train.warmup_epochs = std::stoi(v);
    else if (key == "train.finetune_epochs") c.train.finetune_epochs = std::stoi(v);
    else if (key == "train.optimizer") {
      if (v == "adam") c.train.optimizer = OptimizerKind::Adam;
      else if (v == "sgd_momentum") c.train.optimizer = OptimizerKind::SgdMomentum;
      else throw std::runtime_error("config key train.optimizer: expected adam|sgd_momentum, got '" + v + "'");
    }
    else if (key == "train.seed") c.train.seed = std::stoull(v);
    else if (key == "train.pos_weight") c.train.pos_weight = v == "auto" ? -1 : std::stod(v);
    else if (key == "train.neg_weight") c.train.neg_weight = v == "auto" ? -1 : std::stod(v);
    else if (key == "train.grad_clip_norm") c.train.grad_clip_norm = std::stod(v);
    else if (key == "eval.batch_size") c.eval.batch_size = std::stoi(v);
    else throw std::runtime_error("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("config key " + key + ": cannot parse value '" + v + "'");
  }
}

std::string json_to_string(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
  if (v.is_number_float()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  if (v.is_array()) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i)
      out += (i ? "," : "") + std::to_string(v[i].get<int64_t>());
    return out;
  }
  throw std::runtime_error("config key " + key + ": unsupported value type");
}

void validate(const RunConfig& c) {
  auto bad = [](const std::string& msg) { throw std::runtime_error("invalid config: " + msg); };
  if (c.augment.flip_prob < 0 || c.augment.flip_prob > 1) bad("augment.flip_prob not in [0,1]");
  if (c.augment.max_rotation < 0) bad("augment.max_rotation negative");
  if (c.augment.scale_lo <= 0 || c.augment.scale_lo > c.augment.scale_hi)
    bad("augment scale range must satisfy 0 < lo <= hi");
  if (c.augment.brightness_lo <= 0 || c.augment.brightness_lo > c.augment.brightness_hi)
    bad("augment brightness range must satisfy 0 < lo <= hi");
  if (c.train.batch_size < 1) bad("train.batch_size < 1");
  if (c.train.lr0 <= 0) bad("train.lr0 must be positive");
  if (c.train.lr_decay_every < 1) bad("train.lr_decay_every < 1");
  if (c.train.warmup_epochs < 0) bad("train.warmup_epochs negative");
  if (c.train.finetune_epochs < 0) bad("train.finetune_epochs negative");
  if (c.preprocess.side < 8) bad("preprocess.side too small");
  if (c.data.threads < 1) bad("data.threads < 1");
}

}  // namespace

RunConfig resolve_config(const std::string& profile, const std::string& config_file_path,
                         const std::map<std::string, std::string>& overrides) {
  RunConfig c;
  bool input_side_explicit = false;
  if (profile == "desk") {
    c.profile = "desk";
    c.model = DenseNetConfig::desk();
    c.preprocess.side = 64;
  } else if (profile == "full") {
    c.profile = "full";
    c.model = DenseNetConfig::full();
    c.preprocess.side = 224;
  } else {
    throw std::runtime_error("unknown profile: " + profile + " (expected desk|full)");
  }

  if (!config_file_path.empty()) {
    std::ifstream in(config_file_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_file_path);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw std::runtime_error("config file parse error: " + std::string(e.what()));
    }
    for (const auto& [section, body] : j.items()) {
      if (!body.is_object())
        throw std::runtime_error("config section " + section + " must be an object");
      for (const auto& [key, value] : body.items()) {
        const std::string full_key = section + "." + key;
        if (full_key == "model.input_side") input_side_explicit = true;
        set_key(c, full_key, json_to_string(value, full_key));
      }
    }
  }

  for (const auto& [key, value] : overrides) {
    if (key == "model.input_side") input_side_explicit = true;
    set_key(c, key, value);
  }
  validate(c);
  // model input follows the preprocessing resolution unless pinned by hand
  if (!input_side_explicit)
    c.model.input_side = c.preprocess.side;
  else if (c.model.input_side != c.preprocess.side)
    throw std::runtime_error("invalid config: model.input_side (" +
                             std::to_string(c.model.input_side) +
                             ") does not match preprocess.side (" +
                             std::to_string(c.preprocess.side) + ")");
  return c;
}

std::vector<std::string> resolved_lines(const RunConfig& c) {
  std::ostringstream mf, th;
  mf.precision(17);
  mf << c.preprocess.margin_frac;
  auto d = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::vector<std::string> lines = {
      "augment.brightness_hi=" + d(c.augment.brightness_hi),
      "augment.brightness_lo=" + d(c.augment.brightness_lo),
      "augment.enabled=" + std::string(c.augment.enabled ? "true" : "false"),
      "augment.flip_prob=" + d(c.augment.flip_prob),
      "augment.max_rotation=" + d(c.augment.max_rotation),
      "augment.scale_hi=" + d(c.augment.scale_hi),
      "augment.scale_lo=" + d(c.augment.scale_lo),
      "data.root=" + c.data.root,
      "data.threads=" + std::to_string(c.data.threads),
      "eval.batch_size=" + std::to_string(c.eval.batch_size),
      "model.block_layers=" + join_ints(c.model.block_layers),
      "model.bottleneck=" + std::string(c.model.bottleneck ? "true" : "false"),
      "model.compression=" + d(c.model.compression),
      "model.growth_rate=" + std::to_string(c.model.growth_rate),
      "model.init_features=" + std::to_string(c.model.init_features),
      "model.input_side=" + std::to_string(c.model.input_side),
      "model.stem=" + std::string(c.model.stem == StemKind::Full ? "full" : "tiny"),
      "preprocess.margin_frac=" + mf.str(),
      "preprocess.side=" + std::to_string(c.preprocess.side),
      "preprocess.threshold_override=" +
          (c.preprocess.threshold_override ? std::to_string(*c.preprocess.threshold_override)
                                           : std::string("-1")),
      "profile=" + c.profile,
      "train.batch_size=" + std::to_string(c.train.batch_size),
      "train.finetune_epochs=" + std::to_string(c.train.finetune_epochs),
      "train.grad_clip_norm=" + d(c.train.grad_clip_norm),
      "train.lr0=" + d(c.train.lr0),
      "train.lr_decay_every=" + std::to_string(c.train.lr_decay_every),
      "train.lr_decay_factor=" + d(c.train.lr_decay_factor),
      "train.neg_weight=" + (c.train.neg_weight < 0 ? std::string("auto") : d(c.train.neg_weight)),
      "train.optimizer=" +
          std::string(c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd_momentum"),
      "train.pos_weight=" + (c.train.pos_weight < 0 ? std::string("auto") : d(c.train.pos_weight)),
      "train.seed=" + std::to_string(c.train.seed),
      "train.warmup_epochs=" + std::to_string(c.train.warmup_epochs),
  };
  std::sort(lines.begin(), lines.end());
  return lines;
}

uint64_t config_hash(const RunConfig& c) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& line : resolved_lines(c))
    for (unsigned char ch : line) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  return h;
}

}  // namespace murax
