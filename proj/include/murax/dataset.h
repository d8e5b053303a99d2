#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "murax/augment.h"
#include "murax/preprocess.h"
#include "murax/tensor.h"

namespace murax {

extern const std::vector<std::string> kBodyParts;  // ELBOW..WRIST

// One patient examination: several views sharing a single binary label.
struct Study {
  std::string patient_id;
  std::string body_part;
  std::string study_id;
  std::vector<std::string> view_paths;  // absolute, lexicographically sorted
  int label = 0;                        // 1 = abnormal
};

struct DatasetIndex {
  std::string split;  // "train" or "valid"
  std::vector<Study> studies;
  std::vector<std::string> warnings;

  int total_views() const;
  // {negative, positive} study counts
  std::pair<int, int> label_counts() const;
  std::map<std::string, int> part_counts() const;
};

// Walks <root>/<split>/XR_<PART>/patientN/studyK_<positive|negative>/*.png.
// Unknown body-part directories are skipped with a warning; malformed study
// suffixes, empty studies and undecodable PNGs are errors.
DatasetIndex scan_tree(const std::string& root, const std::string& split,
                       bool validate_images = true);

// MURA CSV convention: one image path per row, plus `study_dir,label` rows.
// Paths are relative to root. Directory-suffix labels are cross-checked;
// a mismatch is a hard error.
DatasetIndex load_csv_index(const std::string& root, const std::string& image_paths_csv,
                            const std::string& labeled_studies_csv);

// Both splits must not share a patient_id.
void check_patient_disjoint(const DatasetIndex& train, const DatasetIndex& valid);

// Decoded and ROI-preprocessed views, flattened to image level. Built once;
// augmentation happens per epoch on top of these planes.
struct CachedView {
  int study_idx = 0;
  int label = 0;
  std::vector<float> plane;  // side x side, [0,1]
  RoiBox box;
  std::string path;
};

struct ViewCache {
  int side = 0;
  std::vector<CachedView> views;
};

ViewCache build_view_cache(const DatasetIndex& index, const PreprocessConfig& cfg,
                           int threads = 1);

struct Batch {
  Tensor<float> x;             // [N, 3, side, side]
  Tensor<float> y;             // [N, 1]
  std::vector<int> view_ids;   // indices into the cache
};

// Image-level batches with a per-epoch shuffle keyed by (seed, epoch); the
// final short batch is emitted. Augmentation only when aug != nullptr.
class BatchStream {
 public:
  BatchStream(const ViewCache& cache, int batch_size, uint64_t seed, int epoch,
              const AugmentConfig* aug, const NormStats& norm);
  bool next(Batch& out);
  const std::vector<int>& permutation() const { return perm_; }

 private:
  const ViewCache& cache_;
  int batch_size_;
  uint64_t seed_;
  int epoch_;
  const AugmentConfig* aug_;
  NormStats norm_;
  std::vector<int> perm_;
  size_t pos_ = 0;
};

}  // namespace murax
