#pragma once

#include <string>
#include <vector>

#include "murax/image.h"
#include "murax/tensor.h"

namespace murax {

struct RawCam {
  int h = 0, w = 0;
  std::vector<float> values;  // unnormalized
};

// map(y,x) = sum_c head_weight[c] * features[c,y,x]. With a GAP head,
// mean(map) + head bias equals the pre-sigmoid logit.
RawCam cam(const Tensor<float>& features, const Tensor<float>& head_weight);

// Min-max normalize (constant map -> all 0.5), bilinear upsample to the
// image size, blend as alpha-weighted red over the grayscale radiograph.
ImageU8 overlay_heatmap(const ImageU8& img, const RawCam& map);
void render_overlay(const ImageU8& img, const RawCam& map, const std::string& out_path);

// Peak location in upsampled (image-resolution) coordinates.
void cam_peak(const RawCam& map, int image_w, int image_h, double* peak_x, double* peak_y);

}  // namespace murax
