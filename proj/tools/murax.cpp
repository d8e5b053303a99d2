#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "murax/cam.h"
#include "murax/checkpoint.h"
#include "murax/config.h"
#include "murax/dataset.h"
#include "murax/metrics.h"
#include "murax/model.h"
#include "murax/preprocess.h"
#include "murax/rng.h"
#include "murax/synth.h"
#include "murax/trainer.h"

namespace fs = std::filesystem;
using namespace murax;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string profile = "desk";
  std::vector<std::string> sets;  // section.key=value overrides
  int threads = 0;                // 0 = from config
  long long seed = -1;            // -1 = from config
};

RunConfig resolve(const GlobalOpts& g) {
  std::map<std::string, std::string> overrides;
  for (const auto& kv : g.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects section.key=value, got: " + kv);
    overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (g.seed >= 0) overrides["train.seed"] = std::to_string(g.seed);
  if (g.threads > 0) overrides["data.threads"] = std::to_string(g.threads);
  if (overrides.find("data.root") == overrides.end()) {
    if (const char* env = std::getenv("MURAX_DATA_ROOT"))
      if (*env) overrides["data.root"] = env;
  }
  RunConfig cfg = resolve_config(g.profile, g.config_path, overrides);
  for (const auto& line : resolved_lines(cfg)) std::cerr << line << "\n";
  std::fprintf(stderr, "config_hash=%016llx\n",
               static_cast<unsigned long long>(config_hash(cfg)));
  return cfg;
}

std::string require_root(const RunConfig& cfg, const std::string& flag_root) {
  if (!flag_root.empty()) return flag_root;
  if (!cfg.data.root.empty()) return cfg.data.root;
  throw std::runtime_error("no data root given (use --data, data.root or MURAX_DATA_ROOT)");
}

void print_report(const MetricsReport& r) {
  auto line = [](const std::string& name, const MetricsSummary& s) {
    const std::string auc = s.auc ? std::to_string(*s.auc) : "undefined";
    std::printf("%-10s studies=%-5lld kappa=%.4f accuracy=%.4f auc=%s\n", name.c_str(),
                static_cast<long long>(s.study_count), s.kappa, s.accuracy, auc.c_str());
  };
  line("overall", r.overall);
  for (const auto& [part, s] : r.per_part) line(part, s);
  std::printf("view-level accuracy=%.4f\n", r.view_level_accuracy);
}

int run_gradcheck();

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radiograph abnormality detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // let global options appear after the subcommand name

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON run-config file");
  app.add_option("--profile", g.profile, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--seed", g.seed, "override train.seed");
  app.add_option("--threads", g.threads, "worker pool cap (1 = serial)");
  app.add_option("--set", g.sets, "override a config key, section.key=value")->take_all();

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset tree");
  std::string gen_out;
  SynthSpec spec;
  bool overwrite = false;
  gen->add_option("--out", gen_out, "output root")->required();
  gen->add_option("--n-studies", spec.n_studies);
  gen->add_option("--positive-fraction", spec.positive_fraction);
  gen->add_option("--views-min", spec.views_min);
  gen->add_option("--views-max", spec.views_max);
  gen->add_option("--image-side", spec.image_side);
  gen->add_option("--gen-seed", spec.seed, "generator seed");
  gen->add_option("--body-part", spec.body_part);
  gen->add_option("--valid-fraction", spec.valid_fraction);
  gen->add_flag("--overwrite", overwrite);

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "write the cropped ROI of a PNG for inspection");
  std::string prep_in, prep_out;
  prep->add_option("--in", prep_in)->required();
  prep->add_option("--out", prep_out)->required();

  // train / train-ensemble
  auto* tr = app.add_subcommand("train", "train a single model");
  auto* tre = app.add_subcommand("train-ensemble", "train an ensemble of models");
  std::string tr_data, tr_out;
  int members = 4;
  for (auto* c : {tr, tre}) {
    c->add_option("--data", tr_data, "dataset root (MURA layout)");
    c->add_option("--out", tr_out, "run output directory")->required();
  }
  tre->add_option("--members", members, "ensemble size");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on the valid split");
  std::vector<std::string> ev_models;
  std::string ev_data, ev_report, ev_split = "valid";
  ev->add_option("--models", ev_models, "checkpoint paths")->required()->take_all();
  ev->add_option("--data", ev_data, "dataset root");
  ev->add_option("--report", ev_report, "metrics report output path");
  ev->add_option("--split", ev_split, "train or valid");

  // predict
  auto* pr = app.add_subcommand("predict", "predict abnormality probability for views");
  std::vector<std::string> pr_models;
  std::vector<std::string> pr_inputs;
  pr->add_option("--models", pr_models, "checkpoint paths")->required()->take_all();
  pr->add_option("--in", pr_inputs, "view PNGs (one study)")->required()->take_all();

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "render an abnormality heatmap overlay");
  std::string hm_model, hm_in, hm_out;
  hm->add_option("--model", hm_model)->required();
  hm->add_option("--in", hm_in)->required();
  hm->add_option("--out", hm_out)->required();

  // gradcheck
  app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    RunConfig cfg = resolve(g);

    if (gen->parsed()) {
      SynthManifest m = generate(spec, gen_out, overwrite);
      std::printf("generated %zu studies under %s (train %d+/%d-, valid %d+/%d-)\n",
                  m.studies.size(), gen_out.c_str(), m.count("train", 1), m.count("train", 0),
                  m.count("valid", 1), m.count("valid", 0));
      std::printf("manifest: %s\n", (fs::path(gen_out) / "manifest.json").string().c_str());
      return 0;
    }

    if (prep->parsed()) {
      ImageU8 img = read_png(prep_in);
      PreprocessedView pv = preprocess_view(img, cfg.preprocess);
      write_png(prep_out, from_plane(pv.plane, cfg.preprocess.side, cfg.preprocess.side));
      std::printf("roi box (%d,%d,%d,%d)%s -> %s\n", pv.box.x0, pv.box.y0, pv.box.x1,
                  pv.box.y1, pv.full_frame_fallback ? " [full-frame fallback]" : "",
                  prep_out.c_str());
      return 0;
    }

    if (tr->parsed() || tre->parsed()) {
      const std::string root = require_root(cfg, tr_data);
      DatasetIndex train_idx = scan_tree(root, "train");
      DatasetIndex valid_idx = scan_tree(root, "valid");
      check_patient_disjoint(train_idx, valid_idx);
      for (const auto& w : train_idx.warnings) std::cerr << "warning: " << w << "\n";
      ViewCache train_cache = build_view_cache(train_idx, cfg.preprocess, cfg.data.threads);
      ViewCache valid_cache = build_view_cache(valid_idx, cfg.preprocess, cfg.data.threads);

      if (tr->parsed()) {
        ModelParams model = build(cfg.model, cfg.train.seed);
        TrainResult res = train(model, train_idx, train_cache, valid_idx, valid_cache,
                                cfg.train, cfg.augment, cfg.preprocess.norm, tr_out);
        std::printf("best epoch %d, valid kappa %.4f\n", res.best_epoch, res.best_valid_kappa);
        std::printf("checkpoint hash %016llx\n",
                    static_cast<unsigned long long>(params_hash(res.best_params)));
        std::printf("best checkpoint: %s\n", (fs::path(tr_out) / "best.ckpt").string().c_str());
      } else {
        EnsembleResult res =
            train_ensemble(members, cfg.model, train_idx, train_cache, valid_idx, valid_cache,
                           cfg.train, cfg.augment, cfg.preprocess.norm, tr_out);
        for (int i = 0; i < members; ++i)
          std::printf("member %d: best epoch %d, valid kappa %.4f, hash %016llx\n", i,
                      res.results[i].best_epoch, res.results[i].best_valid_kappa,
                      static_cast<unsigned long long>(params_hash(res.members[i])));
        MetricsReport rep = evaluate(res.members, valid_idx, valid_cache,
                                     {cfg.eval.batch_size, cfg.preprocess.norm});
        print_report(rep);
      }
      return 0;
    }

    if (ev->parsed()) {
      const std::string root = require_root(cfg, ev_data);
      DatasetIndex idx = scan_tree(root, ev_split);
      std::vector<ModelParams> models;
      for (const auto& p : ev_models) models.push_back(load_checkpoint(p));
      ViewCache cache = build_view_cache(idx, cfg.preprocess, cfg.data.threads);
      MetricsReport rep = evaluate(models, idx, cache, {cfg.eval.batch_size, cfg.preprocess.norm});
      char buf[24];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
      rep.config_fingerprint = buf;
      print_report(rep);
      if (!ev_report.empty()) {
        write_report_json(rep, ev_report);
        std::printf("report: %s\n", ev_report.c_str());
      }
      if (!rep.overall.auc) {
        std::cerr << "error: AUC undefined (single-class gold labels)\n";
        return 1;
      }
      return 0;
    }

    if (pr->parsed()) {
      std::vector<ModelParams> models;
      for (const auto& p : pr_models) models.push_back(load_checkpoint(p));
      std::vector<std::vector<double>> member_probs(models.size());
      for (size_t m = 0; m < models.size(); ++m) {
        for (const auto& in_path : pr_inputs) {
          ImageU8 img = read_png(in_path);
          PreprocessedView pv = preprocess_view(img, cfg.preprocess);
          Tensor<float> t = normalize_plane(pv.plane, cfg.preprocess.side, cfg.preprocess.norm);
          Tensor<float> x = Tensor<float>::zeros({1, 3, cfg.preprocess.side, cfg.preprocess.side});
          std::copy(t.data(), t.data() + t.size(), x.data());
          Tensor<float> prob = forward(models[m], nullptr, x, BatchNormMode::Eval);
          member_probs[m].push_back(prob.data()[0]);
        }
      }
      std::vector<double> view_probs = ensemble_probs(member_probs);
      for (size_t i = 0; i < pr_inputs.size(); ++i)
        std::printf("%s: %.4f\n", pr_inputs[i].c_str(), view_probs[i]);
      auto [study_prob, label] = aggregate_study(view_probs);
      std::printf("study probability %.4f -> %s\n", study_prob,
                  label ? "positive" : "negative");
      return 0;
    }

    if (hm->parsed()) {
      ModelParams model = load_checkpoint(hm_model);
      ImageU8 img = read_png(hm_in);
      PreprocessConfig pc = cfg.preprocess;
      pc.side = model.config.input_side;
      PreprocessedView pv = preprocess_view(img, pc);
      Tensor<float> t = normalize_plane(pv.plane, pc.side, pc.norm);
      Tensor<float> x = Tensor<float>::zeros({1, 3, pc.side, pc.side});
      std::copy(t.data(), t.data() + t.size(), x.data());
      FeatureForward ff = feature_forward(model, nullptr, x, BatchNormMode::Eval);
      RawCam map = cam(ff.features, model.at("head.linear.weight"));
      ImageU8 roi = from_plane(pv.plane, pc.side, pc.side);
      render_overlay(roi, map, hm_out);
      std::printf("probability %.4f, overlay -> %s\n", ff.prob.data()[0], hm_out.c_str());
      return 0;
    }

    if (app.get_subcommand("gradcheck")->parsed()) return run_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

namespace {

int run_gradcheck() {
  using T = Tensor<double>;
  Rng rng(20240811);
  auto randn = [&rng](std::vector<int> shape) {
    T t = T::zeros(shape);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
  };
  struct Case {
    std::string name;
    GradCheckFn fn;
    std::vector<T> inputs;
  };
  std::vector<Case> cases;

  cases.push_back({"conv2d", [](Tape<double>& tp, std::vector<T>& in) {
                     T none;
                     return sum(&tp, conv2d(&tp, in[0], in[1], in[2], 1, 1));
                   },
                   {randn({2, 3, 5, 5}), randn({4, 3, 3, 3}), randn({4})}});
  cases.push_back({"linear", [](Tape<double>& tp, std::vector<T>& in) {
                     return sum(&tp, linear(&tp, in[0], in[1], in[2]));
                   },
                   {randn({4, 3}), randn({2, 3}), randn({2})}});
  {
    // random linear functional: keeps all gradients O(1) so finite
    // differences stay above the noise floor
    T w = randn({2, 3, 4, 4});
    cases.push_back({"batch_norm2d", [w](Tape<double>& tp, std::vector<T>& in) mutable {
                       T rm = T::zeros({3}), rv = T::full({3}, 1.0);
                       T y = batch_norm2d(&tp, in[0], in[1], in[2], rm, rv,
                                          BatchNormMode::Train, 0.1, 1e-5, false);
                       return sum(&tp, mul(&tp, y, w));
                     },
                     {randn({2, 3, 4, 4}), randn({3}), randn({3})}});
  }
  cases.push_back({"sigmoid", [](Tape<double>& tp, std::vector<T>& in) {
                     return sum(&tp, sigmoid(&tp, in[0]));
                   },
                   {randn({3, 7})}});
  cases.push_back({"avg_pool", [](Tape<double>& tp, std::vector<T>& in) {
                     T y = pool2d(&tp, in[0], PoolKind::Avg, 2, 2);
                     return sum(&tp, mul(&tp, y, y));
                   },
                   {randn({2, 2, 4, 4})}});

  bool ok = true;
  for (auto& c : cases) {
    double err = grad_check(c.fn, c.inputs, 1e-5);
    std::printf("%-14s max relative error %.3e %s\n", c.name.c_str(), err,
                err < 1e-4 ? "ok" : "FAIL");
    if (err >= 1e-4) ok = false;
  }
  return ok ? 0 : 1;
}

}  // namespace
