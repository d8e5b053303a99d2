#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "murax/dataset.h"
#include "murax/model.h"

namespace murax {

struct StudyPrediction {
  int study_idx = 0;
  std::vector<double> per_view_probs;
  double study_prob = 0;
  int predicted_label = 0;
};

struct Confusion {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int64_t total() const { return tp + fp + fn + tn; }
};

struct MetricsSummary {
  double kappa = 0;
  double accuracy = 0;
  std::optional<double> auc;  // undefined when one class is absent
  Confusion confusion;
  int64_t study_count = 0;
};

struct MetricsReport {
  MetricsSummary overall;
  std::map<std::string, MetricsSummary> per_part;
  double view_level_accuracy = 0;
  std::string config_fingerprint;
  std::vector<std::string> checkpoint_hashes;
};

// Mean of per-view probabilities; label by strict > 0.5 (tie -> negative).
std::pair<double, int> aggregate_study(const std::vector<double>& per_view_probs);

// Per-view arithmetic mean across ensemble members.
std::vector<double> ensemble_probs(const std::vector<std::vector<double>>& member_probs);

// kappa = (p_o - p_e) / (1 - p_e); 1 when p_e == 1 and pred == gold.
double cohen_kappa(const std::vector<int>& pred, const std::vector<int>& gold);

// Rank statistic: (concordant + 0.5 * tied) / (pos * neg). nullopt when a
// class is missing.
std::optional<double> roc_auc(const std::vector<double>& probs, const std::vector<int>& gold);

MetricsSummary summarize(const std::vector<int>& pred, const std::vector<int>& gold,
                         const std::vector<double>& probs);

struct EvalOptions {
  int batch_size = 16;
  NormStats norm;
};

// Eval-mode forwards (no augmentation) for every member over a prebuilt
// cache, ensemble across members, aggregate per study.
MetricsReport evaluate(std::vector<ModelParams>& members, const DatasetIndex& index,
                       const ViewCache& cache, const EvalOptions& opts = {});

// Per-view probabilities of a single model over the cache, in view order.
std::vector<double> predict_view_probs(ModelParams& model, const ViewCache& cache,
                                       const NormStats& norm, int batch_size = 16);

void write_report_json(const MetricsReport& report, const std::string& path);

}  // namespace murax
