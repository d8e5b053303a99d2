#include "murax/cam.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace murax {

RawCam cam(const Tensor<float>& features, const Tensor<float>& head_weight) {
  if (features.ndim() != 4 || features.dim(0) != 1)
    throw std::invalid_argument("cam: expected features [1,C,h,w], got " +
                                shape_str(features.shape()));
  const int C = features.dim(1), h = features.dim(2), w = features.dim(3);
  if (head_weight.size() != C)
    throw std::invalid_argument("cam: head weight has " + std::to_string(head_weight.size()) +
                                " channels, features have " + std::to_string(C));
  RawCam out;
  out.h = h;
  out.w = w;
  out.values.assign(static_cast<size_t>(h) * w, 0.0f);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int c = 0; c < C; ++c) {
    const float wc = head_weight.data()[c];
    const float* f = features.data() + c * plane;
    for (int64_t i = 0; i < plane; ++i) out.values[i] += wc * f[i];
  }
  return out;
}

namespace {

std::vector<float> normalize_map(const RawCam& map) {
  float lo = map.values[0], hi = map.values[0];
  for (float v : map.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<float> out(map.values.size());
  if (hi - lo <= 0.0f) {
    std::fill(out.begin(), out.end(), 0.5f);
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = (map.values[i] - lo) / (hi - lo);
  }
  return out;
}

float sample_map(const std::vector<float>& m, int w, int h, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  double fx = x - x0, fy = y - y0;
  return static_cast<float>(
      (1 - fy) * ((1 - fx) * m[static_cast<size_t>(y0) * w + x0] + fx * m[static_cast<size_t>(y0) * w + x1]) +
      fy * ((1 - fx) * m[static_cast<size_t>(y1) * w + x0] + fx * m[static_cast<size_t>(y1) * w + x1]));
}

// heatmap cell (i) center maps to image coordinate (i + 0.5) * side/w - 0.5
double up_coord(int i, int cells, int image_len) {
  return (i + 0.5) * static_cast<double>(image_len) / cells - 0.5;
}

double down_coord(double v, int cells, int image_len) {
  return (v + 0.5) * static_cast<double>(cells) / image_len - 0.5;
}

}  // namespace

ImageU8 overlay_heatmap(const ImageU8& img, const RawCam& map) {
  const std::vector<float> norm = normalize_map(map);
  const ImageU8 gray = to_gray(img);
  ImageU8 out = make_image(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double mx = down_coord(x, map.w, img.width);
      const double my = down_coord(y, map.h, img.height);
      const float v = sample_map(norm, map.w, map.h, mx, my);
      const float alpha = 0.4f * v;
      const float base = gray.at(y, x);
      out.at(y, x, 0) = static_cast<uint8_t>(std::clamp(base + alpha * (255.0f - base), 0.0f, 255.0f));
      out.at(y, x, 1) = static_cast<uint8_t>(std::clamp(base * (1.0f - alpha), 0.0f, 255.0f));
      out.at(y, x, 2) = static_cast<uint8_t>(std::clamp(base * (1.0f - alpha), 0.0f, 255.0f));
    }
  return out;
}

void render_overlay(const ImageU8& img, const RawCam& map, const std::string& out_path) {
  write_png(out_path, overlay_heatmap(img, map));
}

void cam_peak(const RawCam& map, int image_w, int image_h, double* peak_x, double* peak_y) {
  size_t best = 0;
  for (size_t i = 1; i < map.values.size(); ++i)
    if (map.values[i] > map.values[best]) best = i;
  const int by = static_cast<int>(best) / map.w;
  const int bx = static_cast<int>(best) % map.w;
  *peak_x = up_coord(bx, map.w, image_w);
  *peak_y = up_coord(by, map.h, image_h);
}

}  // namespace murax
