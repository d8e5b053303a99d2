#include "murax/metrics.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace murax {

std::pair<double, int> aggregate_study(const std::vector<double>& per_view_probs) {
  if (per_view_probs.empty())
    throw std::invalid_argument("aggregate_study: empty probability list");
  double mean = std::accumulate(per_view_probs.begin(), per_view_probs.end(), 0.0) /
                static_cast<double>(per_view_probs.size());
  return {mean, mean > 0.5 ? 1 : 0};
}

std::vector<double> ensemble_probs(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw std::invalid_argument("ensemble_probs: no members");
  const size_t n_views = member_probs[0].size();
  for (const auto& m : member_probs)
    if (m.size() != n_views)
      throw std::invalid_argument("ensemble_probs: member view-count mismatch (" +
                                  std::to_string(m.size()) + " vs " +
                                  std::to_string(n_views) + ")");
  std::vector<double> out(n_views, 0.0);
  for (const auto& m : member_probs)
    for (size_t i = 0; i < n_views; ++i) out[i] += m[i];
  for (double& v : out) v /= static_cast<double>(member_probs.size());
  return out;
}

double cohen_kappa(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.size() != gold.size() || pred.empty())
    throw std::invalid_argument("cohen_kappa: label vectors must be nonempty and equal length");
  const double n = static_cast<double>(pred.size());
  double agree = 0, pred_pos = 0, gold_pos = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gold[i]) ++agree;
    pred_pos += pred[i];
    gold_pos += gold[i];
  }
  const double p_o = agree / n;
  const double pp = pred_pos / n, gp = gold_pos / n;
  const double p_e = pp * gp + (1 - pp) * (1 - gp);
  if (p_e >= 1.0) return p_o == 1.0 ? 1.0 : 0.0;  // both constant
  return (p_o - p_e) / (1 - p_e);
}

std::optional<double> roc_auc(const std::vector<double>& probs, const std::vector<int>& gold) {
  if (probs.size() != gold.size() || probs.empty())
    throw std::invalid_argument("roc_auc: score/label vectors must be nonempty and equal length");
  int64_t n_pos = 0, n_neg = 0;
  for (int g : gold) (g ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // rank-sum with midranks for ties
  std::vector<size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return probs[a] < probs[b]; });
  double rank_sum_pos = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && probs[idx[j]] == probs[idx[i]]) ++j;
    const double midrank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (size_t k = i; k < j; ++k)
      if (gold[idx[k]]) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsSummary summarize(const std::vector<int>& pred, const std::vector<int>& gold,
                         const std::vector<double>& probs) {
  MetricsSummary s;
  s.study_count = static_cast<int64_t>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    if (gold[i] == 1)
      (pred[i] == 1 ? s.confusion.tp : s.confusion.fn)++;
    else
      (pred[i] == 1 ? s.confusion.fp : s.confusion.tn)++;
  }
  s.accuracy = static_cast<double>(s.confusion.tp + s.confusion.tn) /
               static_cast<double>(s.study_count);
  s.kappa = cohen_kappa(pred, gold);
  s.auc = roc_auc(probs, gold);
  return s;
}

std::vector<double> predict_view_probs(ModelParams& model, const ViewCache& cache,
                                       const NormStats& norm, int batch_size) {
  std::vector<double> probs;
  probs.reserve(cache.views.size());
  const int side = cache.side;
  const int64_t chw = 3LL * side * side;
  for (size_t base = 0; base < cache.views.size(); base += batch_size) {
    const int n = static_cast<int>(std::min(static_cast<size_t>(batch_size),
                                            cache.views.size() - base));
    Tensor<float> x = Tensor<float>::zeros({n, 3, side, side});
    for (int i = 0; i < n; ++i) {
      Tensor<float> t = normalize_plane(cache.views[base + i].plane, side, norm);
      std::copy(t.data(), t.data() + chw, x.data() + i * chw);
    }
    Tensor<float> p = forward(model, nullptr, x, BatchNormMode::Eval);
    for (int i = 0; i < n; ++i) probs.push_back(static_cast<double>(p.data()[i]));
  }
  return probs;
}

MetricsReport evaluate(std::vector<ModelParams>& members, const DatasetIndex& index,
                       const ViewCache& cache, const EvalOptions& opts) {
  if (members.empty()) throw std::invalid_argument("evaluate: need at least one checkpoint");
  for (const auto& m : members)
    if (!(m.config == members[0].config) || m.config.input_side != cache.side)
      throw std::invalid_argument("evaluate: checkpoint/architecture mismatch");

  std::vector<std::vector<double>> member_probs;
  for (auto& m : members)
    member_probs.push_back(predict_view_probs(m, cache, opts.norm, opts.batch_size));
  const std::vector<double> view_probs = ensemble_probs(member_probs);

  // regroup views by study (cache order is view order)
  std::vector<std::vector<double>> per_study(index.studies.size());
  for (size_t v = 0; v < cache.views.size(); ++v)
    per_study[cache.views[v].study_idx].push_back(view_probs[v]);

  std::vector<int> pred, gold;
  std::vector<double> study_probs;
  std::vector<std::string> parts;
  int64_t view_correct = 0;
  for (size_t v = 0; v < cache.views.size(); ++v)
    if ((view_probs[v] > 0.5 ? 1 : 0) == cache.views[v].label) ++view_correct;

  for (size_t s = 0; s < index.studies.size(); ++s) {
    auto [prob, label] = aggregate_study(per_study[s]);
    study_probs.push_back(prob);
    pred.push_back(label);
    gold.push_back(index.studies[s].label);
    parts.push_back(index.studies[s].body_part);
  }

  MetricsReport report;
  report.overall = summarize(pred, gold, study_probs);
  report.view_level_accuracy =
      static_cast<double>(view_correct) / static_cast<double>(cache.views.size());

  std::map<std::string, std::vector<size_t>> by_part;
  for (size_t s = 0; s < parts.size(); ++s) by_part[parts[s]].push_back(s);
  for (const auto& [part, ids] : by_part) {
    std::vector<int> pp, gg;
    std::vector<double> qq;
    for (size_t s : ids) {
      pp.push_back(pred[s]);
      gg.push_back(gold[s]);
      qq.push_back(study_probs[s]);
    }
    report.per_part[part] = summarize(pp, gg, qq);
  }

  char buf[32];
  for (auto& m : members) {
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(params_hash(m)));
    report.checkpoint_hashes.push_back(buf);
  }
  return report;
}

namespace {

nlohmann::ordered_json summary_json(const MetricsSummary& s) {
  nlohmann::ordered_json j;
  j["study_count"] = s.study_count;
  j["kappa"] = s.kappa;
  j["accuracy"] = s.accuracy;
  if (s.auc)
    j["auc"] = *s.auc;
  else
    j["auc"] = nullptr;
  j["confusion"] = {{"tp", s.confusion.tp},
                    {"fp", s.confusion.fp},
                    {"fn", s.confusion.fn},
                    {"tn", s.confusion.tn}};
  return j;
}

}  // namespace

void write_report_json(const MetricsReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["overall"] = summary_json(report.overall);
  j["per_part"] = nlohmann::ordered_json::object();
  for (const auto& [part, s] : report.per_part) j["per_part"][part] = summary_json(s);
  j["view_level_accuracy"] = report.view_level_accuracy;
  j["config_fingerprint"] = report.config_fingerprint;
  j["checkpoint_hashes"] = report.checkpoint_hashes;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write report: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace murax
