#include "murax/dataset.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include "murax/image.h"
#include "murax/rng.h"

namespace fs = std::filesystem;

namespace murax {

const std::vector<std::string> kBodyParts = {"ELBOW",   "FINGER",   "FOREARM", "HAND",
                                             "HUMERUS", "SHOULDER", "WRIST"};

int DatasetIndex::total_views() const {
  int n = 0;
  for (const auto& s : studies) n += static_cast<int>(s.view_paths.size());
  return n;
}

std::pair<int, int> DatasetIndex::label_counts() const {
  int neg = 0, pos = 0;
  for (const auto& s : studies) (s.label ? pos : neg)++;
  return {neg, pos};
}

std::map<std::string, int> DatasetIndex::part_counts() const {
  std::map<std::string, int> out;
  for (const auto& s : studies) ++out[s.body_part];
  return out;
}

namespace {

int parse_study_label(const std::string& dir_name, const std::string& full_path) {
  auto pos = dir_name.rfind('_');
  std::string suffix = pos == std::string::npos ? "" : dir_name.substr(pos + 1);
  if (suffix == "positive") return 1;
  if (suffix == "negative") return 0;
  throw std::runtime_error("malformed study directory suffix (expected _positive or _negative): " +
                           full_path);
}

void sort_studies(DatasetIndex& index) {
  std::sort(index.studies.begin(), index.studies.end(), [](const Study& a, const Study& b) {
    return std::tie(a.body_part, a.patient_id, a.study_id) <
           std::tie(b.body_part, b.patient_id, b.study_id);
  });
}

}  // namespace

DatasetIndex scan_tree(const std::string& root, const std::string& split,
                       bool validate_images) {
  DatasetIndex index;
  index.split = split;
  const fs::path split_dir = fs::path(root) / split;
  if (!fs::is_directory(split_dir))
    throw std::runtime_error("dataset split directory not found: " + split_dir.string());

  std::vector<fs::path> part_dirs;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) part_dirs.push_back(e.path());
  std::sort(part_dirs.begin(), part_dirs.end());

  for (const auto& part_dir : part_dirs) {
    std::string name = part_dir.filename().string();
    if (!name.starts_with("XR_") ||
        std::find(kBodyParts.begin(), kBodyParts.end(), name.substr(3)) == kBodyParts.end()) {
      index.warnings.push_back("skipping unknown body-part directory: " + part_dir.string());
      continue;
    }
    const std::string part = name.substr(3);

    std::vector<fs::path> patient_dirs;
    for (const auto& e : fs::directory_iterator(part_dir))
      if (e.is_directory()) patient_dirs.push_back(e.path());
    std::sort(patient_dirs.begin(), patient_dirs.end());

    for (const auto& patient_dir : patient_dirs) {
      std::vector<fs::path> study_dirs;
      for (const auto& e : fs::directory_iterator(patient_dir))
        if (e.is_directory()) study_dirs.push_back(e.path());
      std::sort(study_dirs.begin(), study_dirs.end());

      for (const auto& study_dir : study_dirs) {
        Study s;
        s.patient_id = patient_dir.filename().string();
        s.body_part = part;
        s.study_id = study_dir.filename().string();
        s.label = parse_study_label(s.study_id, study_dir.string());
        for (const auto& e : fs::directory_iterator(study_dir))
          if (e.is_regular_file() && e.path().extension() == ".png")
            s.view_paths.push_back(e.path().string());
        std::sort(s.view_paths.begin(), s.view_paths.end());
        if (s.view_paths.empty())
          throw std::runtime_error("study has no images: " + study_dir.string());
        if (validate_images)
          for (const auto& vp : s.view_paths) read_png(vp);  // throws listing the path
        index.studies.push_back(std::move(s));
      }
    }
  }
  sort_studies(index);
  return index;
}

DatasetIndex load_csv_index(const std::string& root, const std::string& image_paths_csv,
                            const std::string& labeled_studies_csv) {
  std::ifstream labels_in(labeled_studies_csv);
  if (!labels_in) throw std::runtime_error("cannot open CSV: " + labeled_studies_csv);
  std::map<std::string, int> study_labels;  // normalized study dir -> label
  std::string line;
  while (std::getline(labels_in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw std::runtime_error("malformed labeled-studies row: " + line);
    std::string dir = line.substr(0, comma);
    std::string lab = line.substr(comma + 1);
    while (!dir.empty() && dir.back() == '/') dir.pop_back();
    if (lab != "0" && lab != "1")
      throw std::runtime_error("label must be 0 or 1, got '" + lab + "' in row: " + line);
    study_labels[dir] = lab == "1" ? 1 : 0;
  }

  std::ifstream imgs_in(image_paths_csv);
  if (!imgs_in) throw std::runtime_error("cannot open CSV: " + image_paths_csv);
  DatasetIndex index;
  std::map<std::string, Study> by_study_dir;
  std::set<std::string> seen;
  while (std::getline(imgs_in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    if (!seen.insert(line).second) {
      index.warnings.push_back("duplicate image row: " + line);
      continue;
    }
    const fs::path rel(line);
    const fs::path abs = fs::path(root) / rel;
    if (!fs::is_regular_file(abs))
      throw std::runtime_error("CSV references missing file: " + abs.string());

    // <split>/XR_<PART>/<patient>/<study>/<image>
    std::vector<std::string> parts;
    for (const auto& c : rel) parts.push_back(c.string());
    if (parts.size() < 5)
      throw std::runtime_error("image path too shallow for MURA layout: " + line);
    const size_t n = parts.size();
    const std::string study_dir = (rel.parent_path()).generic_string();
    Study& s = by_study_dir[study_dir];
    if (s.view_paths.empty()) {
      s.patient_id = parts[n - 3];
      s.body_part = parts[n - 4].starts_with("XR_") ? parts[n - 4].substr(3) : parts[n - 4];
      s.study_id = parts[n - 2];
      s.label = parse_study_label(s.study_id, study_dir);
      auto it = study_labels.find(study_dir);
      if (it != study_labels.end() && it->second != s.label)
        throw std::runtime_error("label mismatch between CSV (" + std::to_string(it->second) +
                                 ") and directory suffix for " + study_dir);
    }
    s.view_paths.push_back(abs.string());
    if (index.split.empty()) index.split = parts[n - 5];
  }

  for (auto& [dir, s] : by_study_dir) {
    std::sort(s.view_paths.begin(), s.view_paths.end());
    index.studies.push_back(std::move(s));
  }
  sort_studies(index);
  return index;
}

void check_patient_disjoint(const DatasetIndex& train, const DatasetIndex& valid) {
  std::set<std::string> train_patients;
  for (const auto& s : train.studies) train_patients.insert(s.patient_id);
  for (const auto& s : valid.studies)
    if (train_patients.count(s.patient_id))
      throw std::runtime_error("patient appears in both train and valid splits: " +
                               s.patient_id);
}

ViewCache build_view_cache(const DatasetIndex& index, const PreprocessConfig& cfg,
                           int threads) {
  ViewCache cache;
  cache.side = cfg.side;
  std::vector<std::pair<int, std::string>> jobs;  // (study_idx, path)
  for (size_t i = 0; i < index.studies.size(); ++i)
    for (const auto& vp : index.studies[i].view_paths)
      jobs.emplace_back(static_cast<int>(i), vp);
  cache.views.resize(jobs.size());

  auto work = [&](size_t lo, size_t hi) {
    for (size_t j = lo; j < hi; ++j) {
      const ImageU8 img = read_png(jobs[j].second);
      PreprocessedView pv = preprocess_view(img, cfg);
      CachedView& cv = cache.views[j];
      cv.study_idx = jobs[j].first;
      cv.label = index.studies[jobs[j].first].label;
      cv.plane = std::move(pv.plane);
      cv.box = pv.box;
      cv.path = jobs[j].second;
    }
  };

  threads = std::max(1, threads);
  if (threads == 1 || jobs.size() < 2) {
    work(0, jobs.size());
  } else {
    // fixed index partitioning; output slots are disjoint
    std::vector<std::thread> pool;
    const size_t chunk = (jobs.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      size_t lo = t * chunk, hi = std::min(jobs.size(), lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return cache;
}

BatchStream::BatchStream(const ViewCache& cache, int batch_size, uint64_t seed, int epoch,
                         const AugmentConfig* aug, const NormStats& norm)
    : cache_(cache), batch_size_(batch_size), seed_(seed), epoch_(epoch),
      aug_(aug && aug->enabled ? aug : nullptr), norm_(norm) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  perm_.resize(cache.views.size());
  for (size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<int>(i);
  Rng rng(hash_combine(hash_combine(seed, 0x62617463ULL), static_cast<uint64_t>(epoch)));
  for (size_t i = perm_.size(); i > 1; --i)
    std::swap(perm_[i - 1], perm_[rng.index(i)]);
}

bool BatchStream::next(Batch& out) {
  if (pos_ >= perm_.size()) return false;
  const size_t n = std::min(static_cast<size_t>(batch_size_), perm_.size() - pos_);
  const int side = cache_.side;
  const int64_t chw = 3LL * side * side;
  out.x = Tensor<float>::zeros({static_cast<int>(n), 3, side, side});
  out.y = Tensor<float>::zeros({static_cast<int>(n), 1});
  out.view_ids.assign(perm_.begin() + pos_, perm_.begin() + pos_ + n);
  for (size_t i = 0; i < n; ++i) {
    const CachedView& cv = cache_.views[out.view_ids[i]];
    std::vector<float> plane = cv.plane;
    if (aug_) {
      AugmentParams p = sample_params(*aug_, seed_, epoch_, out.view_ids[i]);
      plane = apply_augment(plane, side, p);
    }
    Tensor<float> t = normalize_plane(plane, side, norm_);
    std::copy(t.data(), t.data() + chw, out.x.data() + i * chw);
    out.y.data()[i] = static_cast<float>(cv.label);
  }
  pos_ += n;
  return true;
}

}  // namespace murax
