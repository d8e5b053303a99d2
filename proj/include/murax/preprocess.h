#pragma once

#include <optional>
#include <vector>

#include "murax/image.h"
#include "murax/tensor.h"

namespace murax {

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // 0/1, row-major

  uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x]; }
};

// Half-open pixel box.
struct RoiBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const RoiBox&) const = default;
};

struct ThresholdResult {
  int threshold = 0;  // mask = pixel >= threshold
  BinaryMask mask;
};

// ImageNet channel statistics; configurable.
struct NormStats {
  float mean[3] = {0.485f, 0.456f, 0.406f};
  float std[3] = {0.229f, 0.224f, 0.225f};
};

struct PreprocessConfig {
  int side = 64;
  double margin_frac = 0.02;                  // bbox expansion per dimension
  std::optional<int> threshold_override;      // fixed threshold instead of Otsu
  NormStats norm;
};

// Otsu's between-class-variance threshold over the 256-bin histogram.
// nullopt on a constant image (degenerate; caller falls back to full frame).
std::optional<ThresholdResult> binary_threshold(const ImageU8& gray);

// Tight bbox of the largest 8-connected foreground component, expanded by
// margin_frac of each dimension and clamped. nullopt on an all-zero mask.
std::optional<RoiBox> largest_contour_bbox(const BinaryMask& mask, double margin_frac);

// Crop to box, letterbox to square with zero padding, bilinear resize.
ImageU8 crop_resize(const ImageU8& img, const RoiBox& box, int side);

// [0,1] gray plane replicated to 3 channels, (v - mean) / std per channel.
Tensor<float> normalize_plane(const std::vector<float>& plane, int side, const NormStats& stats);
Tensor<float> normalize(const ImageU8& img, const NormStats& stats = {});
std::vector<float> denormalize(const Tensor<float>& t, const NormStats& stats = {});

struct PreprocessedView {
  std::vector<float> plane;  // side x side, values in [0,1]
  RoiBox box;                // ROI used (full frame on fallback)
  bool full_frame_fallback = false;
};

// threshold -> largest component -> crop/resize. Never fails on degenerate
// input; falls back to the full frame.
PreprocessedView preprocess_view(const ImageU8& img, const PreprocessConfig& cfg);

// Maps a point in original image coordinates through crop + letterbox +
// resize into preprocessed coordinates.
void map_to_preprocessed(double x, double y, const RoiBox& box, int side,
                         double* out_x, double* out_y);

}  // namespace murax
