#include "murax/trainer.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "murax/checkpoint.h"

namespace fs = std::filesystem;

namespace murax {

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  return config.lr0 * std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

void Optimizer::step(ModelParams& params, double lr) {
  ++t_;
  const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f, sgd_momentum = 0.9f;
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  for (const auto& name : params.order) {
    if (params.is_running_stat(name)) continue;
    Tensor<float>& p = params.at(name);
    auto& [m, v] = moments_[name];
    if (m.empty()) m.assign(p.size(), 0.0f);
    if (kind_ == OptimizerKind::Adam && v.empty()) v.assign(p.size(), 0.0f);
    if (!p.requires_grad()) {
      // moments decay even while frozen only if the op saw gradients;
      // frozen parameters neither move nor decay their moments
      continue;
    }
    const float* g = p.grad();
    float* w = p.data();
    if (kind_ == OptimizerKind::Adam) {
      for (int64_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        const float mhat = m[i] / bias1;
        const float vhat = v[i] / bias2;
        w[i] -= static_cast<float>(lr) * mhat / (std::sqrt(vhat) + eps);
      }
    } else {
      for (int64_t i = 0; i < p.size(); ++i) {
        m[i] = sgd_momentum * m[i] + g[i];
        w[i] -= static_cast<float>(lr) * m[i];
      }
    }
  }
}

namespace {

void clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0;
  for (const auto& name : params.param_names()) {
    const Tensor<float>& p = params.at(name);
    if (!p.requires_grad()) continue;
    for (int64_t i = 0; i < p.size(); ++i)
      sq += static_cast<double>(p.grad()[i]) * p.grad()[i];
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float scale = static_cast<float>(max_norm / norm);
  for (const auto& name : params.param_names()) {
    Tensor<float>& p = params.at(name);
    if (!p.requires_grad()) continue;
    for (int64_t i = 0; i < p.size(); ++i) p.grad()[i] *= scale;
  }
}

void zero_trainable_grads(ModelParams& params) {
  for (const auto& name : params.param_names()) {
    Tensor<float>& p = params.at(name);
    if (p.requires_grad()) p.zero_grad();
  }
}

}  // namespace

TrainResult train(ModelParams& model, const DatasetIndex& train_index,
                  const ViewCache& train_cache, const DatasetIndex& valid_index,
                  const ViewCache& valid_cache, const TrainConfig& config,
                  const AugmentConfig& aug, const NormStats& norm,
                  const std::string& out_dir) {
  if (train_cache.views.empty()) throw std::invalid_argument("train: empty train split");
  (void)train_index;

  // class weights from inverse class frequency of the training views
  int64_t n_pos = 0;
  for (const auto& v : train_cache.views) n_pos += v.label;
  const int64_t n_total = static_cast<int64_t>(train_cache.views.size());
  float pos_w = static_cast<float>(config.pos_weight);
  float neg_w = static_cast<float>(config.neg_weight);
  if (config.pos_weight < 0)
    pos_w = static_cast<float>(n_total - n_pos) / static_cast<float>(n_total);
  if (config.neg_weight < 0)
    neg_w = static_cast<float>(n_pos) / static_cast<float>(n_total);
  if (pos_w <= 0) pos_w = 0.5f;  // single-class corpus; keep loss defined
  if (neg_w <= 0) neg_w = 0.5f;

  if (!out_dir.empty()) fs::create_directories(out_dir);

  Optimizer opt(config.optimizer);
  TrainResult result;
  int64_t global_step = 0;

  for (int epoch = 0; epoch < config.total_epochs(); ++epoch) {
    const TrainScope scope =
        epoch < config.warmup_epochs ? TrainScope::HeadOnly : TrainScope::All;
    set_trainable(model, scope);
    const double lr = lr_at(config, epoch);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;

    double loss_sum = 0;
    int64_t batches = 0, correct = 0, seen = 0;
    BatchStream stream(train_cache, config.batch_size, config.seed, epoch, &aug, norm);
    Batch batch;
    while (stream.next(batch)) {
      Tape<float> tape;
      Tensor<float> prob = forward(model, &tape, batch.x, BatchNormMode::Train);
      Tensor<float> loss = weighted_bce(&tape, prob, batch.y, pos_w, neg_w);
      const double loss_val = loss.data()[0];
      if (!std::isfinite(loss_val))
        throw std::runtime_error("training diverged: non-finite loss at step " +
                                 std::to_string(global_step) + " (lr " +
                                 std::to_string(lr) + ")");
      zero_trainable_grads(model);
      tape.backward(loss);
      if (config.grad_clip_norm > 0) clip_gradients(model, config.grad_clip_norm);
      opt.step(model, lr);

      loss_sum += loss_val;
      ++batches;
      ++global_step;
      for (int i = 0; i < prob.dim(0); ++i, ++seen)
        if ((prob.data()[i] > 0.5f ? 1.0f : 0.0f) == batch.y.data()[i]) ++correct;
    }
    stats.train_loss = loss_sum / static_cast<double>(batches);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    stats.encoder_hash = encoder_hash(model);

    if (!valid_cache.views.empty()) {
      std::vector<ModelParams> one{model};
      EvalOptions eo;
      eo.norm = norm;
      MetricsReport report = evaluate(one, valid_index, valid_cache, eo);
      stats.valid_kappa = report.overall.kappa;
      stats.valid_accuracy = report.overall.accuracy;
      stats.valid_auc = report.overall.auc;
      if (stats.valid_kappa > result.best_valid_kappa) {
        result.best_valid_kappa = stats.valid_kappa;
        result.best_epoch = epoch;
        result.best_params = deep_copy(model);
        if (!out_dir.empty()) save_checkpoint(model, (fs::path(out_dir) / "best.ckpt").string());
      }
    }
    result.history.push_back(stats);

    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
      save_checkpoint(model, (fs::path(out_dir) / name).string());
    }
  }

  // no validation split: the final model is the best one
  if (result.best_epoch < 0) {
    result.best_epoch = config.total_epochs() - 1;
    result.best_params = deep_copy(model);
    if (!out_dir.empty()) save_checkpoint(model, (fs::path(out_dir) / "best.ckpt").string());
  }
  if (!out_dir.empty())
    write_history_json(result, (fs::path(out_dir) / "history.json").string());
  return result;
}

EnsembleResult train_ensemble(int n_models, const DenseNetConfig& model_config,
                              const DatasetIndex& train_index, const ViewCache& train_cache,
                              const DatasetIndex& valid_index, const ViewCache& valid_cache,
                              const TrainConfig& config, const AugmentConfig& aug,
                              const NormStats& norm, const std::string& out_dir) {
  if (n_models < 1) throw std::invalid_argument("train_ensemble: need n >= 1");
  EnsembleResult out;
  for (int i = 0; i < n_models; ++i) {
    TrainConfig member_cfg = config;
    member_cfg.seed = config.seed + static_cast<uint64_t>(i);
    ModelParams model = build(model_config, member_cfg.seed);
    std::string member_dir;
    if (!out_dir.empty())
      member_dir = (fs::path(out_dir) / ("member_" + std::to_string(i))).string();
    try {
      out.results.push_back(train(model, train_index, train_cache, valid_index, valid_cache,
                                  member_cfg, aug, norm, member_dir));
    } catch (const std::exception& e) {
      throw std::runtime_error("ensemble member " + std::to_string(i) + ": " + e.what());
    }
    out.members.push_back(out.results.back().best_params);
  }
  return out;
}

void write_history_json(const TrainResult& result, const std::string& path) {
  nlohmann::ordered_json j;
  j["best_epoch"] = result.best_epoch;
  j["best_valid_kappa"] = result.best_valid_kappa;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : result.history) {
    nlohmann::ordered_json je;
    je["epoch"] = e.epoch;
    je["lr"] = e.lr;
    je["train_loss"] = e.train_loss;
    je["train_accuracy"] = e.train_accuracy;
    je["valid_kappa"] = e.valid_kappa;
    je["valid_accuracy"] = e.valid_accuracy;
    if (e.valid_auc)
      je["valid_auc"] = *e.valid_auc;
    else
      je["valid_auc"] = nullptr;
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(e.encoder_hash));
    je["encoder_hash"] = buf;
    j["epochs"].push_back(std::move(je));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write history: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace murax
