#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "murax/image.h"

namespace murax {

struct SynthSpec {
  int n_studies = 500;
  double positive_fraction = 0.5;
  int views_min = 1, views_max = 3;
  int image_side = 64;
  uint64_t seed = 7;
  std::string body_part = "WRIST";
  double valid_fraction = 0.2;
};

struct SynthView {
  std::string path;  // relative to out_root
  double gap_x = -1, gap_y = -1;  // abnormality center, -1 on negatives
};

struct SynthStudy {
  std::string patient_id;
  std::string study_id;
  std::string split;  // "train" or "valid"
  int label = 0;
  std::vector<SynthView> views;
};

struct SynthManifest {
  SynthSpec spec;
  std::vector<SynthStudy> studies;

  int count(const std::string& split, int label) const;
};

// Renders the MURA directory layout under out_root: one bright capsule per
// study on a noisy dark background; positive studies carry a transverse
// dark gap shared (up to view pose) across views. Deterministic under
// spec.seed. Also writes manifest.json and the two index CSVs.
SynthManifest generate(const SynthSpec& spec, const std::string& out_root,
                       bool overwrite = false);

SynthManifest load_manifest(const std::string& path);

// Generator self-check: the mean intensity profile along the capsule axis
// has a local minimum at least `min_depth` units deep iff the view carries
// a gap. Returns the measured dip depth.
double axial_dip_depth(const ImageU8& view, double cx, double cy, double angle,
                       double half_len, double radius);

}  // namespace murax
