#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "murax/dataset.h"
#include "murax/metrics.h"
#include "murax/model.h"

namespace murax {

enum class OptimizerKind { Adam, SgdMomentum };

struct TrainConfig {
  int batch_size = 8;
  double lr0 = 1e-4;
  int lr_decay_every = 6;       // valid 5..7
  double lr_decay_factor = 0.1;
  int warmup_epochs = 5;        // frozen encoder
  int finetune_epochs = 25;     // valid 20..30
  OptimizerKind optimizer = OptimizerKind::Adam;
  uint64_t seed = 7;
  double pos_weight = -1;       // < 0: auto = #neg / #total of train views
  double neg_weight = -1;       // < 0: auto = #pos / #total
  double grad_clip_norm = 0;    // 0 = off

  int total_epochs() const { return warmup_epochs + finetune_epochs; }
};

// lr0 * factor^floor(epoch / decay_every), epoch counted across
// warmup + finetune combined.
double lr_at(const TrainConfig& config, int epoch);

// Adam (beta 0.9/0.999, eps 1e-8, bias correction) or SGD + momentum 0.9.
// Only requires_grad parameters move; moments persist across freeze
// boundaries.
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind) : kind_(kind) {}
  void step(ModelParams& params, double lr);
  int64_t step_count() const { return t_; }

 private:
  OptimizerKind kind_;
  int64_t t_ = 0;
  std::unordered_map<std::string, std::pair<std::vector<float>, std::vector<float>>> moments_;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_accuracy = 0;  // view-level, from training-time outputs
  double valid_kappa = 0;
  double valid_accuracy = 0;
  std::optional<double> valid_auc;
  uint64_t encoder_hash = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_valid_kappa = -2;
  ModelParams best_params;  // deep snapshot of the best-kappa epoch
};

// Warmup epochs run head-only, then the whole network unfreezes. Writes
// epoch_NNN.ckpt, best.ckpt (by validation kappa) and history.json under
// out_dir when it is nonempty.
TrainResult train(ModelParams& model, const DatasetIndex& train_index,
                  const ViewCache& train_cache, const DatasetIndex& valid_index,
                  const ViewCache& valid_cache, const TrainConfig& config,
                  const AugmentConfig& aug, const NormStats& norm,
                  const std::string& out_dir = "");

struct EnsembleResult {
  std::vector<ModelParams> members;  // best checkpoints, one per member
  std::vector<TrainResult> results;
};

// n members identical except seeds config.seed + i, writing under
// out_dir/member_<i> when out_dir is nonempty.
EnsembleResult train_ensemble(int n_models, const DenseNetConfig& model_config,
                              const DatasetIndex& train_index, const ViewCache& train_cache,
                              const DatasetIndex& valid_index, const ViewCache& valid_cache,
                              const TrainConfig& config, const AugmentConfig& aug,
                              const NormStats& norm, const std::string& out_dir = "");

void write_history_json(const TrainResult& result, const std::string& path);

}  // namespace murax
