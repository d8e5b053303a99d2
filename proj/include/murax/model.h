#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "murax/tensor.h"

namespace murax {

enum class StemKind { Full, Tiny };
enum class TrainScope { HeadOnly, All };

struct DenseNetConfig {
  std::vector<int> block_layers = {2, 4, 4};
  int growth_rate = 12;
  int init_features = 24;
  double compression = 0.5;
  bool bottleneck = true;
  int input_side = 64;
  StemKind stem = StemKind::Tiny;

  static DenseNetConfig desk();
  static DenseNetConfig full();  // the 169-layer configuration

  bool operator==(const DenseNetConfig&) const = default;
};

// Named parameters plus batch-norm running statistics. Iteration order is
// fixed by `order` so init, checkpoints and hashing are deterministic.
struct ModelParams {
  DenseNetConfig config;
  std::vector<std::string> order;
  std::unordered_map<std::string, Tensor<float>> tensors;

  Tensor<float>& at(const std::string& name);
  const Tensor<float>& at(const std::string& name) const;
  bool is_running_stat(const std::string& name) const;

  // Trainable (non-running-stat) entries, in order.
  std::vector<std::string> param_names() const;
};

// Convolution + linear layers implied by the config; the full profile
// counts 169.
int conv_layer_count(const DenseNetConfig& config);

// Channel count entering each block / leaving each transition, ending with
// the final feature channels.
std::vector<int> channel_trace(const DenseNetConfig& config);
int final_channels(const DenseNetConfig& config);
int feature_map_side(const DenseNetConfig& config);

ModelParams build(const DenseNetConfig& config, uint64_t seed);

// Deep copy (tensor storage is otherwise shared between ModelParams copies).
ModelParams deep_copy(const ModelParams& params);

Tensor<float> forward(ModelParams& params, Tape<float>* tape, const Tensor<float>& x,
                      BatchNormMode mode);

struct FeatureForward {
  Tensor<float> features;  // pre-global-pool activation [N, C, h, w]
  Tensor<float> logit;     // [N, 1]
  Tensor<float> prob;      // [N, 1]
};
FeatureForward feature_forward(ModelParams& params, Tape<float>* tape,
                               const Tensor<float>& x, BatchNormMode mode);

// HeadOnly: classifier head + final batch norm only; frozen batch norms
// also stop updating running statistics.
void set_trainable(ModelParams& params, TrainScope scope);

int64_t trainable_param_count(const ModelParams& params);
int64_t total_param_count(const ModelParams& params);

// FNV-1a over parameter bytes in fixed order (running stats excluded when
// trainable_only).
uint64_t params_hash(const ModelParams& params, bool trainable_only = false);

// Hash of everything outside the head; constant while the encoder is frozen.
uint64_t encoder_hash(const ModelParams& params);

}  // namespace murax
