#pragma once

#include <cstdint>
#include <vector>

namespace murax {

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_rotation = 30.0;          // degrees
  double scale_lo = 0.95, scale_hi = 1.30;
  double brightness_lo = 0.80, brightness_hi = 1.20;
  bool enabled = true;
};

struct AugmentParams {
  bool flip = false;
  double angle_deg = 0.0;
  double scale = 1.0;
  double brightness = 1.0;

  static AugmentParams identity() { return {}; }
};

// Counter-based draw keyed by (seed, epoch, sample_index); independent of
// worker scheduling.
AugmentParams sample_params(const AugmentConfig& config, uint64_t seed, int epoch,
                            int sample_index);

// flip -> rotate about center -> scale about center -> brightness.
// Bilinear resampling, zero fill, output clamped to [0,1]. Square input.
std::vector<float> apply_augment(const std::vector<float>& plane, int side,
                                 const AugmentParams& params);

}  // namespace murax
