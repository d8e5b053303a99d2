// Acceptance gate: one pass/fail line per criterion, tolerances pinned here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "murax/augment.h"
#include "murax/cam.h"
#include "murax/checkpoint.h"
#include "murax/dataset.h"
#include "murax/metrics.h"
#include "murax/model.h"
#include "murax/preprocess.h"
#include "murax/rng.h"
#include "murax/synth.h"
#include "murax/tensor.h"
#include "murax/trainer.h"

namespace fs = std::filesystem;
using namespace murax;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& what, double secs) {
  std::printf("[%s] criterion %2d: %s (%.1fs)\n", pass ? "PASS" : "FAIL", criterion,
              what.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Tensor<double> randn(Rng& rng, std::vector<int> shape) {
  Tensor<double> t = Tensor<double>::zeros(shape);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

// --------------------------------------------------------------------------
// Criterion 1: finite-difference gradient check of every differentiable op,
// double precision, eps = 1e-5, max relative error < 1e-4, 10 seeds, < 2 min.

bool criterion1(std::string& what) {
  constexpr double kEps = 1e-5;
  constexpr double kTol = 1e-4;
  double worst = 0;
  std::string worst_op;

  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(hash_combine(0xacce97, seed));
    struct Case {
      const char* name;
      GradCheckFn fn;
      std::vector<Tensor<double>> inputs;
    };
    std::vector<Case> cases;

    cases.push_back({"conv2d",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = conv2d(&tp, v[0], v[1], v[2], 1, 1);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {2, 3, 5, 5}), randn(rng, {4, 3, 3, 3}), randn(rng, {4})}});
    cases.push_back({"conv2d_stride2",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> none;
                       Tensor<double> y = conv2d(&tp, v[0], v[1], none, 2, 0);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {1, 2, 6, 6}), randn(rng, {3, 2, 2, 2})}});
    {
      // a fixed random linear functional keeps every input gradient O(1);
      // a quadratic loss leaves near-zero gradients that drown in
      // finite-difference noise without indicating a wrong derivative
      Tensor<double> w = randn(rng, {2, 3, 4, 4});
      cases.push_back({"batch_norm2d",
                       [w](Tape<double>& tp, std::vector<Tensor<double>>& v) mutable {
                         Tensor<double> rm = Tensor<double>::zeros({3});
                         Tensor<double> rv = Tensor<double>::full({3}, 1.0);
                         Tensor<double> y =
                             batch_norm2d(&tp, v[0], v[1], v[2], rm, rv,
                                          BatchNormMode::Train, 0.1, 1e-5, false);
                         return sum(&tp, mul(&tp, y, w));
                       },
                       {randn(rng, {2, 3, 4, 4}), randn(rng, {3}), randn(rng, {3})}});
    }
    {
      // relu away from its kink
      Tensor<double> x = Tensor<double>::zeros({4, 5});
      for (int64_t i = 0; i < x.size(); ++i) {
        double v = rng.normal();
        x.data()[i] = v < 0 ? v - 0.1 : v + 0.1;
      }
      cases.push_back({"relu",
                       [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                         Tensor<double> y = relu(&tp, v[0]);
                         return sum(&tp, mul(&tp, y, y));
                       },
                       {x}});
    }
    cases.push_back({"sigmoid",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = sigmoid(&tp, v[0]);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {3, 4})}});
    cases.push_back({"avg_pool",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = pool2d(&tp, v[0], PoolKind::Avg, 2, 2);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {2, 2, 4, 4})}});
    cases.push_back({"max_pool",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = pool2d(&tp, v[0], PoolKind::Max, 2, 2);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {1, 2, 4, 4})}});
    cases.push_back({"global_avg_pool",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = pool2d(&tp, v[0], PoolKind::GlobalAvg, 0, 0);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {2, 3, 3, 3})}});
    cases.push_back({"concat_slice",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> cat = concat_channels(&tp, {v[0], v[1]});
                       Tensor<double> s = slice_channels(&tp, cat, 1, 4);
                       return sum(&tp, mul(&tp, s, s));
                     },
                     {randn(rng, {1, 2, 3, 3}), randn(rng, {1, 3, 3, 3})}});
    cases.push_back({"linear",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = linear(&tp, v[0], v[1], v[2]);
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {4, 3}), randn(rng, {2, 3}), randn(rng, {2})}});
    {
      // bce probabilities away from the clamp boundary; targets captured
      // (not differentiated)
      Tensor<double> prob = Tensor<double>::zeros({4, 1});
      Tensor<double> target = Tensor<double>::zeros({4, 1});
      for (int i = 0; i < 4; ++i) {
        prob.data()[i] = 0.1 + 0.8 * rng.uniform();
        target.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
      }
      cases.push_back({"weighted_bce",
                       [target](Tape<double>& tp, std::vector<Tensor<double>>& v) mutable {
                         return weighted_bce(&tp, v[0], target, 1.7, 0.6);
                       },
                       {prob}});
    }
    cases.push_back({"add_mul_scale_sum",
                     [](Tape<double>& tp, std::vector<Tensor<double>>& v) {
                       Tensor<double> y = add(&tp, scale(&tp, v[0], 1.7), mul(&tp, v[0], v[1]));
                       return sum(&tp, mul(&tp, y, y));
                     },
                     {randn(rng, {3, 3}), randn(rng, {3, 3})}});

    for (auto& c : cases) {
      const double err = grad_check(c.fn, c.inputs, kEps);
      if (err > worst) {
        worst = err;
        worst_op = c.name;
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "gradient check over all ops, 10 seeds: worst %.2e (%s), tolerance %.0e",
                worst, worst_op.c_str(), kTol);
  what = buf;
  return worst < kTol;
}

// --------------------------------------------------------------------------
// Criterion 2: the full configuration counts exactly 169 layers.

bool criterion2(std::string& what) {
  DenseNetConfig full;
  full.block_layers = {6, 12, 32, 32};
  full.bottleneck = true;
  full.compression = 0.5;
  const int got = conv_layer_count(full);
  what = "conv_layer_count(blocks 6,12,32,32, bottleneck) = " + std::to_string(got) +
         ", expected 169";
  return got == 169;
}

// --------------------------------------------------------------------------
// Criterion 3: kappa vs confusion-matrix formula on 1000 random vectors and
// AUC vs O(n^2) pair-count oracle, both within 1e-12, < 1 min.

bool criterion3(std::string& what) {
  constexpr double kTol = 1e-12;
  double worst_kappa = 0, worst_auc = 0;
  Rng rng(0xbeef);

  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(499));
    std::vector<int> pred(n), gold(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = rng.uniform() < 0.5 ? 1 : 0;
      gold[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < n; ++i) {
      if (pred[i] && gold[i]) ++tp;
      else if (pred[i]) ++fp;
      else if (gold[i]) ++fn;
      else ++tn;
    }
    const double nn = tp + fp + fn + tn;
    const double po = (tp + tn) / nn;
    const double pe =
        ((tp + fp) / nn) * ((tp + fn) / nn) + ((fn + tn) / nn) * ((fp + tn) / nn);
    const double expect = pe >= 1.0 ? (po == 1.0 ? 1.0 : 0.0) : (po - pe) / (1.0 - pe);
    worst_kappa = std::max(worst_kappa, std::abs(cohen_kappa(pred, gold) - expect));
  }

  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(499));
    std::vector<double> probs(n);
    std::vector<int> gold(n);
    const bool tie_heavy = trial % 2 == 0;
    for (int i = 0; i < n; ++i) {
      probs[i] = tie_heavy ? rng.index(4) / 3.0 : rng.uniform();
      gold[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    if (std::count(gold.begin(), gold.end(), 1) == 0) gold[0] = 1;
    if (std::count(gold.begin(), gold.end(), 0) == 0) gold[0] = 0;
    double score = 0;
    int64_t pos = 0, neg = 0;
    for (int i = 0; i < n; ++i) {
      if (gold[i] != 1) continue;
      ++pos;
      for (int j = 0; j < n; ++j) {
        if (gold[j] != 0) continue;
        if (probs[i] > probs[j]) score += 1.0;
        else if (probs[i] == probs[j]) score += 0.5;
      }
    }
    for (int g : gold) neg += g == 0;
    const double expect = score / (static_cast<double>(pos) * static_cast<double>(neg));
    worst_auc = std::max(worst_auc, std::abs(*roc_auc(probs, gold) - expect));
  }

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "kappa err %.2e (1000 vectors), auc err %.2e vs pair oracle, tolerance 1e-12",
                worst_kappa, worst_auc);
  what = buf;
  return worst_kappa < kTol && worst_auc < kTol;
}

// --------------------------------------------------------------------------
// Criterion 4: overfit a 32-image synthetic set, desk model, 60 epochs,
// batch 8, lr 1e-4 -> train accuracy >= 0.95, < 10 min.

bool criterion4(std::string& what) {
  SynthSpec spec;
  spec.n_studies = 32;
  spec.views_min = spec.views_max = 1;  // exactly 32 images
  spec.valid_fraction = 0.0;
  spec.seed = 4;
  fs::path root = fresh_dir("murax_acc_overfit");
  generate(spec, root.string());

  DatasetIndex train_idx = scan_tree(root.string(), "train", false);
  PreprocessConfig pc;
  pc.side = 64;
  ViewCache cache = build_view_cache(train_idx, pc);

  TrainConfig tc;
  tc.batch_size = 8;
  tc.lr0 = 1e-4;
  tc.lr_decay_every = 1000;  // constant lr for the overfit run
  tc.warmup_epochs = 0;
  tc.finetune_epochs = 60;
  tc.seed = 4;
  AugmentConfig aug;
  aug.enabled = false;

  ModelParams model = build(DenseNetConfig::desk(), tc.seed);
  DatasetIndex empty_idx;
  ViewCache empty_cache;
  TrainResult res =
      train(model, train_idx, cache, empty_idx, empty_cache, tc, aug, pc.norm);
  const double acc = res.history.back().train_accuracy;
  char buf[120];
  std::snprintf(buf, sizeof buf,
                "overfit 32 images / 60 epochs: final train accuracy %.3f, threshold 0.95",
                acc);
  what = buf;
  return acc >= 0.95;
}

// --------------------------------------------------------------------------
// Shared state for criteria 5, 6, 7, 12: the default synthetic dataset and
// the 4-member ensemble trained on it (member 0 is the single-model run).

struct MainRun {
  fs::path data_root;
  SynthManifest manifest;
  DatasetIndex valid_idx;
  ViewCache valid_cache;
  EnsembleResult ensemble;
  TrainConfig tc;
  MetricsReport single_report;                // member 0 alone
  std::vector<MetricsReport> member_reports;  // each member alone
  MetricsReport ensemble_report;
  double single_seconds = 0;  // wall time of the member-0 (seed 7) training alone
};

MainRun run_main_training() {
  MainRun r;
  SynthSpec spec;  // 500 studies, 400 train / 100 valid, 50% positive
  spec.seed = 7;
  r.data_root = fresh_dir("murax_acc_main");
  r.manifest = generate(spec, r.data_root.string());

  DatasetIndex train_idx = scan_tree(r.data_root.string(), "train", false);
  r.valid_idx = scan_tree(r.data_root.string(), "valid", false);
  check_patient_disjoint(train_idx, r.valid_idx);

  PreprocessConfig pc;
  pc.side = 64;
  ViewCache train_cache = build_view_cache(train_idx, pc);
  r.valid_cache = build_view_cache(r.valid_idx, pc);

  r.tc = TrainConfig{};  // batch 8, lr 1e-4, decay x0.1 every 6, 5 warmup + 25 finetune
  r.tc.seed = 7;
  AugmentConfig aug;

  std::printf("  training 4-member ensemble (criteria 5-7, 12)...\n");
  std::fflush(stdout);
  // Members trained one by one (seeds tc.seed + i, exactly what train_ensemble
  // does) so that member 0 -- the criterion-5 single model -- gets its own
  // wall-clock measurement instead of being charged for the whole ensemble.
  for (int i = 0; i < 4; ++i) {
    TrainConfig member_cfg = r.tc;
    member_cfg.seed = r.tc.seed + static_cast<uint64_t>(i);
    ModelParams model = build(DenseNetConfig::desk(), member_cfg.seed);
    const auto m0 = Clock::now();
    r.ensemble.results.push_back(train(model, train_idx, train_cache, r.valid_idx,
                                       r.valid_cache, member_cfg, aug, pc.norm));
    if (i == 0) r.single_seconds = seconds_since(m0);
    r.ensemble.members.push_back(r.ensemble.results.back().best_params);
  }

  EvalOptions eo;
  eo.norm = pc.norm;
  for (int i = 0; i < 4; ++i) {
    std::vector<ModelParams> one{r.ensemble.members[i]};
    r.member_reports.push_back(evaluate(one, r.valid_idx, r.valid_cache, eo));
  }
  r.single_report = r.member_reports[0];
  r.ensemble_report = evaluate(r.ensemble.members, r.valid_idx, r.valid_cache, eo);
  return r;
}

bool criterion5(const MainRun& r, std::string& what) {
  const double kappa = r.single_report.overall.kappa;
  const double auc = r.single_report.overall.auc.value_or(-1);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "single model on 400/100 synthetic studies: valid kappa %.3f (>= 0.6), "
                "AUC %.3f (>= 0.85)",
                kappa, auc);
  what = buf;
  return kappa >= 0.6 && auc >= 0.85;
}

bool criterion6(const MainRun& r, std::string& what) {
  double max_single = -1;
  for (const auto& rep : r.member_reports)
    max_single = std::max(max_single, rep.overall.auc.value_or(-1));
  const double ens = r.ensemble_report.overall.auc.value_or(-1);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "ensemble AUC %.4f vs best single %.4f (allowed drop 0.02); regression "
                "baseline: ensemble kappa %.4f accuracy %.4f",
                ens, max_single, r.ensemble_report.overall.kappa,
                r.ensemble_report.overall.accuracy);
  what = buf;
  return ens >= max_single - 0.02;
}

bool criterion7(const MainRun& r, std::string& what) {
  const auto& hist = r.ensemble.results[0].history;
  bool ok = static_cast<int>(hist.size()) == r.tc.total_epochs();
  // encoder hash constant through the 5 warmup epochs, then it moves
  for (int e = 1; e < r.tc.warmup_epochs && ok; ++e)
    ok = hist[e].encoder_hash == hist[0].encoder_hash;
  bool switched = hist[r.tc.warmup_epochs].encoder_hash != hist[0].encoder_hash;
  // lr matches the closed form at every epoch
  double worst_lr = 0;
  for (const auto& e : hist)
    worst_lr = std::max(worst_lr, std::abs(e.lr - lr_at(r.tc, e.epoch)));
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "schedule: encoder frozen epochs 0-4 %s, unfreeze at epoch 5 %s, lr "
                "closed-form err %.1e",
                ok ? "yes" : "NO", switched ? "yes" : "NO", worst_lr);
  what = buf;
  return ok && switched && worst_lr == 0.0;
}

// --------------------------------------------------------------------------
// Criterion 8: bitwise determinism of training across runs and across
// --threads 1 vs 4 (threads only parallelize cache building).

bool criterion8(std::string& what) {
  SynthSpec spec;
  spec.n_studies = 16;
  spec.seed = 88;
  spec.valid_fraction = 0.25;
  fs::path root = fresh_dir("murax_acc_det");
  generate(spec, root.string());
  DatasetIndex train_idx = scan_tree(root.string(), "train", false);
  DatasetIndex valid_idx = scan_tree(root.string(), "valid", false);
  PreprocessConfig pc;
  pc.side = 64;
  TrainConfig tc;
  tc.warmup_epochs = 2;
  tc.finetune_epochs = 2;
  tc.seed = 88;
  AugmentConfig aug;

  auto run = [&](int threads, const std::string& out) {
    ViewCache train_cache = build_view_cache(train_idx, pc, threads);
    ViewCache valid_cache = build_view_cache(valid_idx, pc, threads);
    ModelParams model = build(DenseNetConfig::desk(), tc.seed);
    fs::path dir = fresh_dir(out);
    train(model, train_idx, train_cache, valid_idx, valid_cache, tc, aug, pc.norm,
          dir.string());
    return dir;
  };

  fs::path a = run(1, "murax_acc_det_t1a");
  fs::path b = run(1, "murax_acc_det_t1b");
  fs::path c = run(4, "murax_acc_det_t4");

  bool ok = true;
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    const std::string bytes = slurp(e.path());
    ok = ok && bytes == slurp(b / name) && bytes == slurp(c / name);
    ++compared;
  }
  what = "two identical runs and --threads 1 vs 4: " + std::to_string(compared) +
         " artifacts compared, " + (ok ? "all bitwise identical" : "MISMATCH");
  return ok && compared >= 5;
}

// --------------------------------------------------------------------------
// Criterion 9: ROI box covers 100% of largest-component foreground on 200
// random masks; normalize round trip < 1e-6; constant image -> full frame.

bool criterion9(std::string& what) {
  Rng rng(0x901);
  int covered = 0;
  int tested = 0;
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask m;
    m.width = 24 + static_cast<int>(rng.index(40));
    m.height = 24 + static_cast<int>(rng.index(40));
    m.bits.assign(static_cast<size_t>(m.width) * m.height, 0);
    const int blobs = 1 + static_cast<int>(rng.index(4));
    for (int bl = 0; bl < blobs; ++bl) {
      const int cx = static_cast<int>(rng.index(m.width));
      const int cy = static_cast<int>(rng.index(m.height));
      const int rad = 1 + static_cast<int>(rng.index(6));
      for (int dy = -rad; dy <= rad; ++dy)
        for (int dx = -rad; dx <= rad; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x >= 0 && x < m.width && y >= 0 && y < m.height && rng.uniform() < 0.8)
            m.bits[static_cast<size_t>(y) * m.width + x] = 1;
        }
    }
    auto box = largest_contour_bbox(m, 0.02);
    if (!box) continue;
    ++tested;

    // independent 8-connected labeling to find the largest component
    std::vector<int> label(m.bits.size(), -1);
    std::vector<int> sizes;
    for (size_t s = 0; s < m.bits.size(); ++s) {
      if (!m.bits[s] || label[s] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      std::vector<size_t> stack = {s};
      label[s] = id;
      while (!stack.empty()) {
        const size_t i = stack.back();
        stack.pop_back();
        ++sizes[id];
        const int y = static_cast<int>(i) / m.width, x = static_cast<int>(i) % m.width;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= m.height || nx < 0 || nx >= m.width) continue;
            const size_t ni = static_cast<size_t>(ny) * m.width + nx;
            if (m.bits[ni] && label[ni] < 0) {
              label[ni] = id;
              stack.push_back(ni);
            }
          }
      }
    }
    const int largest =
        static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    bool all_in = true;
    for (size_t i = 0; i < m.bits.size(); ++i) {
      if (label[i] != largest) continue;
      const int y = static_cast<int>(i) / m.width, x = static_cast<int>(i) % m.width;
      if (x < box->x0 || x >= box->x1 || y < box->y0 || y >= box->y1) all_in = false;
    }
    if (all_in) ++covered;
  }

  // normalize round trip
  Rng rng2(0x902);
  double worst_rt = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> plane(32 * 32);
    for (auto& v : plane) v = static_cast<float>(rng2.uniform());
    std::vector<float> back = denormalize(normalize_plane(plane, 32, NormStats{}));
    for (size_t i = 0; i < plane.size(); ++i)
      worst_rt = std::max(worst_rt, static_cast<double>(std::abs(back[i] - plane[i])));
  }

  // constant image -> full-frame fallback
  ImageU8 flat = make_image(50, 40, 1, 123);
  PreprocessConfig pc;
  pc.side = 32;
  PreprocessedView pv = preprocess_view(flat, pc);
  const bool fallback = pv.full_frame_fallback && pv.box == RoiBox{0, 0, 50, 40};

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "roi coverage %d/%d masks, normalize round trip %.1e (< 1e-6), constant "
                "image full-frame fallback %s",
                covered, tested, worst_rt, fallback ? "yes" : "NO");
  what = buf;
  return covered == tested && tested >= 150 && worst_rt < 1e-6 && fallback;
}

// --------------------------------------------------------------------------
// Criterion 10: augmentation invariants.

bool criterion10(std::string& what) {
  Rng rng(0xa10);
  const int side = 20;
  std::vector<float> plane(static_cast<size_t>(side) * side);
  for (auto& v : plane) v = static_cast<float>(rng.uniform());

  AugmentParams flip = AugmentParams::identity();
  flip.flip = true;
  const bool involution = apply_augment(apply_augment(plane, side, flip), side, flip) == plane;

  double ident_err = 0;
  std::vector<float> ident = apply_augment(plane, side, AugmentParams::identity());
  for (size_t i = 0; i < plane.size(); ++i)
    ident_err = std::max(ident_err, static_cast<double>(std::abs(ident[i] - plane[i])));

  AugmentConfig cfg;
  bool ranges_ok = true;
  for (int i = 0; i < 10000; ++i) {
    AugmentParams p = sample_params(cfg, 10, 3, i);
    ranges_ok = ranges_ok && p.angle_deg >= -30.0 && p.angle_deg <= 30.0 &&
                p.scale >= 0.95 && p.scale <= 1.30 && p.brightness >= 0.80 &&
                p.brightness <= 1.20;
  }

  bool range01 = true;
  for (int i = 0; i < 100; ++i) {
    std::vector<float> out = apply_augment(plane, side, sample_params(cfg, 11, 0, i));
    for (float v : out) range01 = range01 && v >= 0.0f && v <= 1.0f;
  }

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "flip involution %s, identity err %.1e (< 1e-6), 1e4 params in range %s, "
                "outputs in [0,1] %s",
                involution ? "exact" : "NO", ident_err, ranges_ok ? "yes" : "NO",
                range01 ? "yes" : "NO");
  what = buf;
  return involution && ident_err < 1e-6 && ranges_ok && range01;
}

// --------------------------------------------------------------------------
// Criterion 11: synthetic tree vs manifest, error paths, disjointness.

bool criterion11(std::string& what) {
  SynthSpec spec;
  spec.n_studies = 40;
  spec.seed = 111;
  fs::path root = fresh_dir("murax_acc_tree");
  SynthManifest m = generate(spec, root.string());

  bool counts_ok = true;
  for (const std::string split : {"train", "valid"}) {
    DatasetIndex idx = scan_tree(root.string(), split, false);
    auto [neg, pos] = idx.label_counts();
    int manifest_views = 0;
    for (const auto& s : m.studies)
      if (s.split == split) manifest_views += static_cast<int>(s.views.size());
    counts_ok = counts_ok && idx.warnings.empty() && pos == m.count(split, 1) &&
                neg == m.count(split, 0) && idx.total_views() == manifest_views;
  }

  DatasetIndex train = scan_tree(root.string(), "train", false);
  DatasetIndex valid = scan_tree(root.string(), "valid", false);
  bool disjoint = true;
  try {
    check_patient_disjoint(train, valid);
  } catch (...) {
    disjoint = false;
  }

  bool suffix_error = false;
  {
    fs::path bad = fresh_dir("murax_acc_badsuffix");
    fs::create_directories(bad / "train/XR_WRIST/patient00001/study1_positiv");
    write_png((bad / "train/XR_WRIST/patient00001/study1_positiv/image1.png").string(),
              make_image(32, 32, 1, 50));
    try {
      scan_tree(bad.string(), "train");
    } catch (const std::exception& e) {
      suffix_error = std::string(e.what()).find("study1_positiv") != std::string::npos;
    }
  }

  bool missing_error = false;
  {
    fs::path csv_dir = fresh_dir("murax_acc_missing");
    fs::create_directories(csv_dir);
    std::ofstream(csv_dir / "imgs.csv") << "train/XR_WRIST/patient00001/study1_positive/x.png\n";
    std::ofstream(csv_dir / "labels.csv");
    try {
      load_csv_index(csv_dir.string(), (csv_dir / "imgs.csv").string(),
                     (csv_dir / "labels.csv").string());
    } catch (const std::exception& e) {
      missing_error = std::string(e.what()).find("x.png") != std::string::npos;
    }
  }

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "manifest counts %s, patient disjoint %s, malformed-suffix error %s, "
                "missing-file error %s",
                counts_ok ? "exact" : "NO", disjoint ? "yes" : "NO",
                suffix_error ? "yes" : "NO", missing_error ? "yes" : "NO");
  what = buf;
  return counts_ok && disjoint && suffix_error && missing_error;
}

// --------------------------------------------------------------------------
// Criterion 12: CAM/GAP identity within 1e-5 on 50 random inputs; heatmap
// peak within 8 px of the manifest abnormality for >= 70% of true-positive
// validation studies under the criterion-5 model.

bool criterion12(MainRun& r, std::string& what) {
  // identity part
  ModelParams probe = build(DenseNetConfig::desk(), 12);
  Rng rng(0xc12);
  double worst_ident = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<float> x = Tensor<float>::zeros({1, 3, 64, 64});
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
    FeatureForward ff = feature_forward(probe, nullptr, x, BatchNormMode::Eval);
    RawCam map = cam(ff.features, probe.at("head.linear.weight"));
    double mean = 0;
    for (float v : map.values) mean += v;
    mean /= static_cast<double>(map.values.size());
    const double logit = mean + probe.at("head.linear.bias").data()[0];
    worst_ident = std::max(worst_ident, std::abs(logit - ff.logit.data()[0]));
  }

  // localization part, with the trained criterion-5 model
  ModelParams& model = r.ensemble.members[0];
  std::map<std::string, const SynthView*> view_by_suffix;
  std::map<std::string, const SynthStudy*> study_by_view;
  for (const auto& s : r.manifest.studies)
    if (s.split == "valid")
      for (const auto& v : s.views) {
        view_by_suffix[v.path] = &v;
        study_by_view[v.path] = &s;
      }

  auto rel_of = [&](const std::string& abs_path) {
    for (const auto& [rel, v] : view_by_suffix)
      if (abs_path.size() >= rel.size() &&
          abs_path.compare(abs_path.size() - rel.size(), rel.size(), rel) == 0)
        return rel;
    return std::string();
  };

  // study-level predictions of the single model
  std::vector<double> probs = predict_view_probs(model, r.valid_cache, NormStats{});
  std::map<int, std::vector<double>> per_study;
  for (size_t i = 0; i < r.valid_cache.views.size(); ++i)
    per_study[r.valid_cache.views[i].study_idx].push_back(probs[i]);

  int tp_studies = 0, localized = 0;
  for (const auto& [study_idx, view_probs] : per_study) {
    const Study& st = r.valid_idx.studies[study_idx];
    auto [study_prob, pred] = aggregate_study(view_probs);
    if (!(st.label == 1 && pred == 1)) continue;
    ++tp_studies;

    bool hit = false;
    for (size_t i = 0; i < r.valid_cache.views.size() && !hit; ++i) {
      const CachedView& cv = r.valid_cache.views[i];
      if (cv.study_idx != study_idx) continue;
      const std::string rel = rel_of(cv.path);
      if (rel.empty()) continue;
      const SynthView* sv = view_by_suffix[rel];
      if (sv->gap_x < 0) continue;  // pose jitter can drop the gap marker

      Tensor<float> t = normalize_plane(cv.plane, r.valid_cache.side, NormStats{});
      Tensor<float> x = Tensor<float>::zeros({1, 3, r.valid_cache.side, r.valid_cache.side});
      std::copy(t.data(), t.data() + t.size(), x.data());
      FeatureForward ff = feature_forward(model, nullptr, x, BatchNormMode::Eval);
      RawCam map = cam(ff.features, model.at("head.linear.weight"));
      double px = 0, py = 0;
      cam_peak(map, r.valid_cache.side, r.valid_cache.side, &px, &py);
      double gx = 0, gy = 0;
      map_to_preprocessed(sv->gap_x, sv->gap_y, cv.box, r.valid_cache.side, &gx, &gy);
      if (std::hypot(px - gx, py - gy) <= 8.0) hit = true;
    }
    if (hit) ++localized;
  }
  const double frac = tp_studies ? static_cast<double>(localized) / tp_studies : 0.0;

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "cam/gap identity err %.1e (< 1e-5); peak within 8 px on %d/%d TP studies "
                "(%.0f%%, need >= 70%%)",
                worst_ident, localized, tp_studies, 100.0 * frac);
  what = buf;
  return worst_ident < 1e-5 && tp_studies > 0 && frac >= 0.70;
}

// --------------------------------------------------------------------------
// Criterion 13: checkpoint round trip bitwise; corrupted CRC rejected.

bool criterion13(std::string& what) {
  ModelParams m = build(DenseNetConfig::desk(), 13);
  Rng rng(0xd13);
  Tensor<float> x = Tensor<float>::zeros({2, 3, 64, 64});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  const fs::path path = fs::temp_directory_path() / "murax_acc_ckpt.ckpt";
  save_checkpoint(m, path.string());
  ModelParams loaded = load_checkpoint(path.string());

  Tensor<float> a = forward(m, nullptr, x, BatchNormMode::Eval);
  Tensor<float> b = forward(loaded, nullptr, x, BatchNormMode::Eval);
  const bool bitwise = a.values() == b.values() && params_hash(m) == params_hash(loaded);

  // flip one payload byte; CRC must catch it
  std::string bytes = slurp(path);
  bytes[bytes.size() / 2] ^= 0x40;
  const fs::path bad = fs::temp_directory_path() / "murax_acc_ckpt_bad.ckpt";
  std::ofstream(bad, std::ios::binary) << bytes;
  bool rejected = false;
  try {
    load_checkpoint(bad.string());
  } catch (const std::exception& e) {
    rejected = std::string(e.what()).find("CRC") != std::string::npos;
  }

  what = std::string("save->load->eval bitwise ") + (bitwise ? "identical" : "MISMATCH") +
         ", corrupted CRC " + (rejected ? "rejected" : "NOT rejected");
  return bitwise && rejected;
}

}  // namespace

int main() {
  struct Timed {
    int criterion;
    double limit;  // seconds; 0 = no stated limit
    bool (*fn)(std::string&);
  };

  // criteria without shared training state
  const std::vector<Timed> simple = {
      {1, 120, criterion1}, {2, 0, criterion2},   {3, 60, criterion3},
      {4, 600, criterion4}, {8, 0, criterion8},   {9, 0, criterion9},
      {10, 0, criterion10}, {11, 0, criterion11}, {13, 0, criterion13},
  };

  for (const auto& t : simple) {
    const auto t0 = Clock::now();
    std::string what;
    bool ok = false;
    try {
      ok = t.fn(what);
    } catch (const std::exception& e) {
      what = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (t.limit > 0 && secs > t.limit) {
      ok = false;
      what += " [over time budget " + std::to_string(static_cast<int>(t.limit)) + "s]";
    }
    report(t.criterion, ok, what, secs);
  }

  // criteria 5, 6, 7, 12 share the main synthetic training run
  const auto t0 = Clock::now();
  try {
    MainRun run = run_main_training();
    const double train_secs = seconds_since(t0);

    std::string what;
    bool ok5 = criterion5(run, what);
    if (run.single_seconds > 3600) {
      ok5 = false;
      what += " [over 60 min budget]";
    }
    char tbuf[64];
    std::snprintf(tbuf, sizeof tbuf, "; single-model train %.0fs (< 3600s)",
                  run.single_seconds);
    what += tbuf;
    report(5, ok5, what, train_secs);
    report(6, criterion6(run, what), what, seconds_since(t0));
    report(7, criterion7(run, what), what, seconds_since(t0));

    const auto t12 = Clock::now();
    bool ok12 = criterion12(run, what);
    report(12, ok12, what, seconds_since(t12));
  } catch (const std::exception& e) {
    const double secs = seconds_since(t0);
    for (int c : {5, 6, 7, 12})
      report(c, false, std::string("exception: ") + e.what(), secs);
  }

  std::printf("%s: %d criteria failed\n", g_failures ? "FAIL" : "PASS", g_failures);
  return g_failures ? 1 : 0;
}
