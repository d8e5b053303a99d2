#include "murax/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "murax/rng.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace murax {

int SynthManifest::count(const std::string& split, int label) const {
  int n = 0;
  for (const auto& s : studies)
    if (s.split == split && s.label == label) ++n;
  return n;
}

namespace {

struct CapsulePose {
  double cx, cy;       // center, px
  double angle;        // radians
  double half_len;     // axial half-length, px
  double radius;       // px
  bool has_gap = false;
  double gap_t = 0;    // axial offset of the gap center
  double gap_w = 0;    // gap width, px
};

constexpr double kBackground = 30.0;
constexpr double kBone = 200.0;
// Kept above any plausible foreground threshold so the bone stays a single
// connected component through the gap; the dip (bone - gap = 70) is still
// well above the separability self-check margin.
constexpr double kGapIntensity = 130.0;
constexpr double kNoiseSigma = 8.0;

ImageU8 render_capsule(int side, const CapsulePose& p, uint64_t noise_seed) {
  ImageU8 img = make_image(side, side, 1);
  Rng noise(noise_seed);
  const double ux = std::cos(p.angle), uy = std::sin(p.angle);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double dx = x - p.cx, dy = y - p.cy;
      const double a = dx * ux + dy * uy;  // axial coordinate
      const double ac = std::clamp(a, -p.half_len, p.half_len);
      const double px = p.cx + ac * ux, py = p.cy + ac * uy;
      const double dist = std::hypot(x - px, y - py);

      double local = kBone;
      if (p.has_gap) {
        // 1 px soft axial edge on the gap
        double g = std::clamp(std::abs(a - p.gap_t) - p.gap_w / 2 + 0.5, 0.0, 1.0);
        local = kGapIntensity + g * (kBone - kGapIntensity);
      }
      const double alpha = std::clamp(p.radius - dist + 0.5, 0.0, 1.0);
      double v = kBackground + alpha * (local - kBackground) + kNoiseSigma * noise.normal();
      img.at(y, x) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

}  // namespace

double axial_dip_depth(const ImageU8& view, double cx, double cy, double angle,
                       double half_len, double radius) {
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double vx = -uy, vy = ux;
  std::vector<double> profile;
  const int steps = static_cast<int>(2 * half_len);
  for (int i = 0; i <= steps; ++i) {
    const double a = -half_len + i * (2 * half_len / steps);
    double sum = 0;
    int cnt = 0;
    for (double d = -radius / 2; d <= radius / 2; d += 0.5) {
      int x = static_cast<int>(std::lround(cx + a * ux + d * vx));
      int y = static_cast<int>(std::lround(cy + a * uy + d * vy));
      if (x < 0 || x >= view.width || y < 0 || y >= view.height) continue;
      sum += view.at(y, x);
      ++cnt;
    }
    if (cnt) profile.push_back(sum / cnt);
  }
  if (profile.size() < 5) return 0;
  // interior minimum vs. median level
  std::vector<double> sorted = profile;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  double min_interior = profile[2];
  for (size_t i = 2; i + 2 < profile.size(); ++i)
    min_interior = std::min(min_interior, profile[i]);
  return median - min_interior;
}

SynthManifest generate(const SynthSpec& spec, const std::string& out_root, bool overwrite) {
  if (spec.positive_fraction < 0 || spec.positive_fraction > 1)
    throw std::invalid_argument("positive_fraction must be in [0,1]");
  if (spec.image_side < 32) throw std::invalid_argument("image_side must be >= 32");
  if (spec.views_min < 1 || spec.views_max < spec.views_min)
    throw std::invalid_argument("invalid views_per_study range");

  const fs::path root(out_root);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!overwrite)
      throw std::runtime_error("output directory is not empty (use overwrite): " + out_root);
    fs::remove_all(root);
  }
  fs::create_directories(root);

  const int n = spec.n_studies;
  const int n_valid = static_cast<int>(std::lround(n * spec.valid_fraction));
  const int n_train = n - n_valid;

  // largest-remainder positive counts, exact per split and in total
  const int pos_total = static_cast<int>(std::lround(n * spec.positive_fraction));
  int pos_train = static_cast<int>(std::lround(n_train * spec.positive_fraction));
  pos_train = std::clamp(pos_train, std::max(0, pos_total - n_valid), std::min(n_train, pos_total));
  const int pos_valid = pos_total - pos_train;

  // label assignment: deterministic shuffle within each split
  std::vector<int> labels(n, 0);
  auto assign = [&](int lo, int hi, int pos_count, uint64_t salt) {
    std::vector<int> idx;
    for (int i = lo; i < hi; ++i) idx.push_back(i);
    Rng rng(hash_combine(spec.seed, salt));
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    for (int i = 0; i < pos_count; ++i) labels[idx[i]] = 1;
  };
  assign(0, n_train, pos_train, 0x747261696eULL);
  assign(n_train, n, pos_valid, 0x76616c6964ULL);

  SynthManifest manifest;
  manifest.spec = spec;

  std::vector<std::string> image_rows;
  std::vector<std::string> study_rows;

  for (int i = 0; i < n; ++i) {
    const std::string split = i < n_train ? "train" : "valid";
    Rng rng(hash_combine(hash_combine(spec.seed, 0x73747564ULL), static_cast<uint64_t>(i)));
    const double S = spec.image_side;

    CapsulePose base;
    base.cx = rng.uniform(0.42, 0.58) * S;
    base.cy = rng.uniform(0.42, 0.58) * S;
    base.angle = rng.uniform(0.0, M_PI);
    base.half_len = rng.uniform(0.20, 0.28) * S;
    base.radius = rng.uniform(0.06, 0.09) * S;
    base.has_gap = labels[i] == 1;
    if (base.has_gap) {
      base.gap_t = rng.uniform(-0.6, 0.6) * base.half_len;
      base.gap_w = rng.uniform(2.0, 6.0);
    }

    SynthStudy study;
    study.patient_id = "patient" + std::string(5 - std::to_string(i + 1).size(), '0') +
                       std::to_string(i + 1);
    study.split = split;
    study.label = labels[i];
    const std::string suffix = labels[i] ? "positive" : "negative";
    study.study_id = "study1_" + suffix;

    const fs::path study_dir = root / split / ("XR_" + spec.body_part) / study.patient_id /
                               study.study_id;
    fs::create_directories(study_dir);

    const int n_views = spec.views_min +
                        static_cast<int>(rng.index(spec.views_max - spec.views_min + 1));
    for (int v = 0; v < n_views; ++v) {
      CapsulePose pose = base;
      pose.angle += rng.uniform(-15.0, 15.0) * M_PI / 180.0;
      pose.cx += rng.uniform(-2.0, 2.0);
      pose.cy += rng.uniform(-2.0, 2.0);

      const uint64_t noise_seed =
          hash_combine(hash_combine(spec.seed, static_cast<uint64_t>(i) * 1000 + v),
                       0x6e6f6973ULL);
      ImageU8 img = render_capsule(spec.image_side, pose, noise_seed);

      // generator self-check: separability of positives from negatives
      const double dip = axial_dip_depth(img, pose.cx, pose.cy, pose.angle, pose.half_len,
                                         pose.radius);
      if (pose.has_gap && dip < 40.0)
        throw std::runtime_error("synth self-check failed: positive view dip " +
                                 std::to_string(dip) + " < 40 in study " + study.patient_id);
      if (!pose.has_gap && dip >= 40.0)
        throw std::runtime_error("synth self-check failed: negative view dip " +
                                 std::to_string(dip) + " >= 40 in study " + study.patient_id);

      SynthView sv;
      const std::string file = "image" + std::to_string(v + 1) + ".png";
      sv.path = (fs::path(split) / ("XR_" + spec.body_part) / study.patient_id /
                 study.study_id / file)
                    .generic_string();
      if (pose.has_gap) {
        sv.gap_x = pose.cx + pose.gap_t * std::cos(pose.angle);
        sv.gap_y = pose.cy + pose.gap_t * std::sin(pose.angle);
      }
      write_png((study_dir / file).string(), img);
      image_rows.push_back(sv.path);
      study.views.push_back(std::move(sv));
    }
    study_rows.push_back(
        (fs::path(split) / ("XR_" + spec.body_part) / study.patient_id / study.study_id)
            .generic_string() +
        "," + std::to_string(labels[i]));
    manifest.studies.push_back(std::move(study));
  }

  // index CSVs per split
  for (const std::string split : {"train", "valid"}) {
    std::ofstream imgs(root / (split + std::string("_image_paths.csv")));
    for (const auto& r : image_rows)
      if (r.starts_with(split)) imgs << r << "\n";
    std::ofstream studies(root / (split + std::string("_labeled_studies.csv")));
    for (const auto& r : study_rows)
      if (r.starts_with(split)) studies << r << "\n";
  }

  // manifest
  json j;
  j["spec"] = {{"n_studies", spec.n_studies},
               {"positive_fraction", spec.positive_fraction},
               {"views_min", spec.views_min},
               {"views_max", spec.views_max},
               {"image_side", spec.image_side},
               {"seed", spec.seed},
               {"body_part", spec.body_part},
               {"valid_fraction", spec.valid_fraction}};
  j["studies"] = json::array();
  for (const auto& s : manifest.studies) {
    json js = {{"patient_id", s.patient_id},
               {"study_id", s.study_id},
               {"split", s.split},
               {"label", s.label},
               {"views", json::array()}};
    for (const auto& v : s.views)
      js["views"].push_back({{"path", v.path}, {"gap_x", v.gap_x}, {"gap_y", v.gap_y}});
    j["studies"].push_back(std::move(js));
  }
  std::ofstream mf(root / "manifest.json");
  mf << j.dump(2) << "\n";
  return manifest;
}

SynthManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j;
  in >> j;
  SynthManifest m;
  const json& sp = j.at("spec");
  m.spec.n_studies = sp.at("n_studies");
  m.spec.positive_fraction = sp.at("positive_fraction");
  m.spec.views_min = sp.at("views_min");
  m.spec.views_max = sp.at("views_max");
  m.spec.image_side = sp.at("image_side");
  m.spec.seed = sp.at("seed");
  m.spec.body_part = sp.at("body_part");
  m.spec.valid_fraction = sp.at("valid_fraction");
  for (const auto& js : j.at("studies")) {
    SynthStudy s;
    s.patient_id = js.at("patient_id");
    s.study_id = js.at("study_id");
    s.split = js.at("split");
    s.label = js.at("label");
    for (const auto& jv : js.at("views")) {
      SynthView v;
      v.path = jv.at("path");
      v.gap_x = jv.at("gap_x");
      v.gap_y = jv.at("gap_y");
      s.views.push_back(std::move(v));
    }
    m.studies.push_back(std::move(s));
  }
  return m;
}

}  // namespace murax
