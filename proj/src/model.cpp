#include "murax/model.h"

#include <cmath>
#include <stdexcept>

#include "murax/rng.h"

namespace murax {

DenseNetConfig DenseNetConfig::desk() { return DenseNetConfig{}; }

DenseNetConfig DenseNetConfig::full() {
  DenseNetConfig c;
  c.block_layers = {6, 12, 32, 32};
  c.growth_rate = 32;
  c.init_features = 64;
  c.compression = 0.5;
  c.bottleneck = true;
  c.input_side = 224;
  c.stem = StemKind::Full;
  return c;
}

Tensor<float>& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const Tensor<float>& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

bool ModelParams::is_running_stat(const std::string& name) const {
  return name.ends_with("running_mean") || name.ends_with("running_var");
}

std::vector<std::string> ModelParams::param_names() const {
  std::vector<std::string> out;
  for (const auto& n : order)
    if (!is_running_stat(n)) out.push_back(n);
  return out;
}

int conv_layer_count(const DenseNetConfig& config) {
  int n = 1;  // stem conv
  for (int layers : config.block_layers) n += layers * (config.bottleneck ? 2 : 1);
  n += static_cast<int>(config.block_layers.size()) - 1;  // transitions
  n += 1;                                                 // classifier
  return n;
}

std::vector<int> channel_trace(const DenseNetConfig& config) {
  std::vector<int> trace;
  int c = config.init_features;
  trace.push_back(c);
  for (size_t b = 0; b < config.block_layers.size(); ++b) {
    c += config.block_layers[b] * config.growth_rate;
    trace.push_back(c);
    if (b + 1 < config.block_layers.size()) {
      c = static_cast<int>(std::floor(c * config.compression));
      trace.push_back(c);
    }
  }
  return trace;
}

int final_channels(const DenseNetConfig& config) { return channel_trace(config).back(); }

int feature_map_side(const DenseNetConfig& config) {
  int s = config.input_side;
  if (config.stem == StemKind::Full) s = conv_out_size(s, 7, 2, 3);      // stem conv
  if (config.stem == StemKind::Full) s = conv_out_size(s, 2, 2, 0);      // stem pool
  for (size_t b = 0; b + 1 < config.block_layers.size(); ++b)
    s = conv_out_size(s, 2, 2, 0);                                       // transition pool
  return s;
}

namespace {

void validate_config(const DenseNetConfig& c) {
  if (c.block_layers.empty()) throw std::invalid_argument("config: no dense blocks");
  for (int l : c.block_layers)
    if (l <= 0) throw std::invalid_argument("config: non-positive block layer count");
  if (c.growth_rate <= 0 || c.init_features <= 0)
    throw std::invalid_argument("config: growth_rate and init_features must be positive");
  if (c.compression <= 0.0 || c.compression > 1.0)
    throw std::invalid_argument("config: compression must be in (0,1]");
  int s = c.input_side;
  if (c.stem == StemKind::Full) {
    s = conv_out_size(s, 7, 2, 3);
    if (s < 2) throw std::invalid_argument("config: input_side too small at stem");
    s = conv_out_size(s, 2, 2, 0);
  }
  for (size_t b = 0; b + 1 < c.block_layers.size(); ++b) {
    if (s < 2)
      throw std::invalid_argument("config: feature map vanishes at transition " +
                                  std::to_string(b + 1));
    s = conv_out_size(s, 2, 2, 0);
  }
  if (s < 1) throw std::invalid_argument("config: feature map vanishes before head");
}

void add_param(ModelParams& p, const std::string& name, Tensor<float> t) {
  p.order.push_back(name);
  p.tensors.emplace(name, std::move(t));
}

void add_bn(ModelParams& p, const std::string& prefix, int channels) {
  add_param(p, prefix + ".gamma", Tensor<float>::full({channels}, 1.0f, true));
  add_param(p, prefix + ".beta", Tensor<float>::zeros({channels}, true));
  add_param(p, prefix + ".running_mean", Tensor<float>::zeros({channels}));
  add_param(p, prefix + ".running_var", Tensor<float>::full({channels}, 1.0f));
}

void add_conv(ModelParams& p, Rng& rng, const std::string& name, int out_c, int in_c,
              int k) {
  Tensor<float> w = Tensor<float>::zeros({out_c, in_c, k, k}, true);
  const float stddev = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
  for (int64_t i = 0; i < w.size(); ++i)
    w.data()[i] = stddev * static_cast<float>(rng.normal());
  add_param(p, name, std::move(w));
}

}  // namespace

ModelParams build(const DenseNetConfig& config, uint64_t seed) {
  validate_config(config);
  ModelParams p;
  p.config = config;
  Rng rng(hash_combine(0x6d757261ULL, seed));  // "mura"

  const int stem_k = config.stem == StemKind::Full ? 7 : 3;
  add_conv(p, rng, "stem.conv.weight", config.init_features, 3, stem_k);
  if (config.stem == StemKind::Full) add_bn(p, "stem.bn", config.init_features);

  int c = config.init_features;
  for (size_t b = 0; b < config.block_layers.size(); ++b) {
    const std::string bp = "block" + std::to_string(b + 1);
    for (int l = 0; l < config.block_layers[b]; ++l) {
      const std::string lp = bp + ".layer" + std::to_string(l + 1);
      if (config.bottleneck) {
        add_bn(p, lp + ".bn1", c);
        add_conv(p, rng, lp + ".conv1.weight", 4 * config.growth_rate, c, 1);
        add_bn(p, lp + ".bn2", 4 * config.growth_rate);
        add_conv(p, rng, lp + ".conv2.weight", config.growth_rate, 4 * config.growth_rate, 3);
      } else {
        add_bn(p, lp + ".bn1", c);
        add_conv(p, rng, lp + ".conv2.weight", config.growth_rate, c, 3);
      }
      c += config.growth_rate;
    }
    if (b + 1 < config.block_layers.size()) {
      const std::string tp = "transition" + std::to_string(b + 1);
      const int out_c = static_cast<int>(std::floor(c * config.compression));
      add_bn(p, tp + ".bn", c);
      add_conv(p, rng, tp + ".conv.weight", out_c, c, 1);
      c = out_c;
    }
  }

  add_bn(p, "head.bn", c);
  Tensor<float> hw = Tensor<float>::zeros({1, c}, true);
  const float stddev = std::sqrt(2.0f / static_cast<float>(c));
  for (int64_t i = 0; i < hw.size(); ++i)
    hw.data()[i] = stddev * static_cast<float>(rng.normal());
  add_param(p, "head.linear.weight", std::move(hw));
  add_param(p, "head.linear.bias", Tensor<float>::zeros({1}, true));
  return p;
}

ModelParams deep_copy(const ModelParams& src) {
  ModelParams out;
  out.config = src.config;
  out.order = src.order;
  for (const auto& name : src.order) out.tensors.emplace(name, src.at(name).clone());
  return out;
}

namespace {

// BN wrapper: frozen stages (gamma not trainable) also stop updating
// running statistics.
Tensor<float> bn(ModelParams& p, Tape<float>* tape, const std::string& prefix,
                 const Tensor<float>& x, BatchNormMode mode) {
  Tensor<float>& gamma = p.at(prefix + ".gamma");
  const bool update = gamma.requires_grad();
  return batch_norm2d(tape, x, gamma, p.at(prefix + ".beta"),
                      p.at(prefix + ".running_mean"), p.at(prefix + ".running_var"),
                      update ? mode : BatchNormMode::Eval, 0.1f, 1e-5f, update);
}

}  // namespace

FeatureForward feature_forward(ModelParams& p, Tape<float>* tape, const Tensor<float>& x,
                               BatchNormMode mode) {
  const DenseNetConfig& cfg = p.config;
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.input_side || x.dim(3) != cfg.input_side)
    throw std::invalid_argument("forward: expected input [N,3," +
                                std::to_string(cfg.input_side) + "," +
                                std::to_string(cfg.input_side) + "], got " +
                                shape_str(x.shape()));
  Tensor<float> none;

  Tensor<float> h;
  if (cfg.stem == StemKind::Full) {
    h = conv2d(tape, x, p.at("stem.conv.weight"), none, 2, 3);
    h = bn(p, tape, "stem.bn", h, mode);
    h = relu(tape, h);
    h = pool2d(tape, h, PoolKind::Max, 2, 2);
  } else {
    h = conv2d(tape, x, p.at("stem.conv.weight"), none, 1, 1);
  }

  for (size_t b = 0; b < cfg.block_layers.size(); ++b) {
    const std::string bp = "block" + std::to_string(b + 1);
    for (int l = 0; l < cfg.block_layers[b]; ++l) {
      const std::string lp = bp + ".layer" + std::to_string(l + 1);
      Tensor<float> y = bn(p, tape, lp + ".bn1", h, mode);
      y = relu(tape, y);
      if (cfg.bottleneck) {
        y = conv2d(tape, y, p.at(lp + ".conv1.weight"), none, 1, 0);
        y = bn(p, tape, lp + ".bn2", y, mode);
        y = relu(tape, y);
      }
      y = conv2d(tape, y, p.at(lp + ".conv2.weight"), none, 1, 1);
      h = concat_channels(tape, {h, y});
    }
    if (b + 1 < cfg.block_layers.size()) {
      const std::string tp = "transition" + std::to_string(b + 1);
      Tensor<float> y = bn(p, tape, tp + ".bn", h, mode);
      y = relu(tape, y);
      y = conv2d(tape, y, p.at(tp + ".conv.weight"), none, 1, 0);
      h = pool2d(tape, y, PoolKind::Avg, 2, 2);
    }
  }

  Tensor<float> feat = bn(p, tape, "head.bn", h, mode);
  feat = relu(tape, feat);

  Tensor<float> pooled = pool2d(tape, feat, PoolKind::GlobalAvg, 0, 0);
  const int N = pooled.dim(0), C = pooled.dim(1);
  // reshape [N,C,1,1] -> [N,C]
  Tensor<float> flat2d = Tensor<float>::zeros({N, C});
  std::copy(pooled.data(), pooled.data() + pooled.size(), flat2d.data());
  if (tape) {
    flat2d.ensure_grad();
    Tensor<float> pc = pooled, fc = flat2d;
    tape->record(flat2d, [pc, fc]() mutable {
      if (!pc.has_grad()) return;
      for (int64_t i = 0; i < pc.size(); ++i) pc.grad()[i] += fc.grad()[i];
    });
  }

  FeatureForward out;
  out.features = feat;
  out.logit = linear(tape, flat2d, p.at("head.linear.weight"), p.at("head.linear.bias"));
  out.prob = sigmoid(tape, out.logit);
  return out;
}

Tensor<float> forward(ModelParams& p, Tape<float>* tape, const Tensor<float>& x,
                      BatchNormMode mode) {
  return feature_forward(p, tape, x, mode).prob;
}

void set_trainable(ModelParams& p, TrainScope scope) {
  for (const auto& name : p.order) {
    if (p.is_running_stat(name)) continue;
    bool trainable = scope == TrainScope::All || name.starts_with("head.");
    Tensor<float>& t = p.at(name);
    t.set_requires_grad(trainable);
    if (!trainable) t.drop_grad();
  }
}

int64_t trainable_param_count(const ModelParams& p) {
  int64_t n = 0;
  for (const auto& name : p.param_names())
    if (p.at(name).requires_grad()) n += p.at(name).size();
  return n;
}

int64_t total_param_count(const ModelParams& p) {
  int64_t n = 0;
  for (const auto& name : p.param_names()) n += p.at(name).size();
  return n;
}

uint64_t params_hash(const ModelParams& p, bool trainable_only) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : p.order) {
    const Tensor<float>& t = p.at(name);
    if (trainable_only && !t.requires_grad()) continue;
    feed(name.data(), name.size());
    feed(t.data(), t.size() * sizeof(float));
  }
  return h;
}

uint64_t encoder_hash(const ModelParams& p) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : p.order) {
    if (name.starts_with("head.")) continue;
    const Tensor<float>& t = p.at(name);
    feed(name.data(), name.size());
    feed(t.data(), t.size() * sizeof(float));
  }
  return h;
}

}  // namespace murax
