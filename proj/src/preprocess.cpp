#include "murax/preprocess.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace murax {

std::optional<ThresholdResult> binary_threshold(const ImageU8& gray) {
  if (gray.channels != 1)
    throw std::invalid_argument("binary_threshold: expected single-channel image");
  const size_t n = gray.pixels.size();
  int64_t hist[256] = {0};
  for (uint8_t v : gray.pixels) ++hist[v];

  int lo = 0, hi = 255;
  while (lo < 256 && hist[lo] == 0) ++lo;
  while (hi >= 0 && hist[hi] == 0) --hi;
  if (lo >= hi) return std::nullopt;  // constant image

  // Maximize omega0*omega1*(mu0-mu1)^2 over the split [0..t] | [t+1..255].
  double total_sum = 0;
  for (int v = 0; v < 256; ++v) total_sum += static_cast<double>(v) * hist[v];
  double best = -1;
  int best_t = 0;
  double w0 = 0, sum0 = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += static_cast<double>(t) * hist[t];
    double w1 = static_cast<double>(n) - w0;
    if (w0 == 0 || w1 == 0) continue;
    double mu0 = sum0 / w0, mu1 = (total_sum - sum0) / w1;
    double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best) {
      best = var;
      best_t = t;
    }
  }

  ThresholdResult res;
  res.threshold = best_t + 1;
  res.mask.width = gray.width;
  res.mask.height = gray.height;
  res.mask.bits.resize(n);
  for (size_t i = 0; i < n; ++i) res.mask.bits[i] = gray.pixels[i] >= res.threshold ? 1 : 0;
  return res;
}

std::optional<RoiBox> largest_contour_bbox(const BinaryMask& mask, double margin_frac) {
  const int W = mask.width, H = mask.height;
  std::vector<int32_t> label(static_cast<size_t>(W) * H, -1);
  int best_count = 0;
  RoiBox best_box;
  int next_label = 0;

  std::deque<int> queue;
  for (int y0 = 0; y0 < H; ++y0) {
    for (int x0 = 0; x0 < W; ++x0) {
      const size_t i0 = static_cast<size_t>(y0) * W + x0;
      if (!mask.bits[i0] || label[i0] >= 0) continue;
      // BFS flood fill, 8-connected
      int count = 0;
      int minx = x0, maxx = x0, miny = y0, maxy = y0;
      label[i0] = next_label;
      queue.push_back(static_cast<int>(i0));
      while (!queue.empty()) {
        int i = queue.front();
        queue.pop_front();
        int y = i / W, x = i % W;
        ++count;
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dy && !dx) continue;
            int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            size_t ni = static_cast<size_t>(ny) * W + nx;
            if (mask.bits[ni] && label[ni] < 0) {
              label[ni] = next_label;
              queue.push_back(static_cast<int>(ni));
            }
          }
      }
      if (count > best_count) {
        best_count = count;
        best_box = {minx, miny, maxx + 1, maxy + 1};
      }
      ++next_label;
    }
  }
  if (best_count == 0) return std::nullopt;

  int mx = static_cast<int>(std::lround(margin_frac * best_box.width()));
  int my = static_cast<int>(std::lround(margin_frac * best_box.height()));
  RoiBox b;
  b.x0 = std::max(0, best_box.x0 - mx);
  b.y0 = std::max(0, best_box.y0 - my);
  b.x1 = std::min(W, best_box.x1 + mx);
  b.y1 = std::min(H, best_box.y1 + my);
  return b;
}

namespace {

// Bilinear sample with zero outside, pixel-center convention.
float sample_bilinear(const std::vector<float>& src, int W, int H, double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= W || yy < 0 || yy >= H) return 0.0;
    return src[static_cast<size_t>(yy) * W + xx];
  };
  double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
             fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
  return static_cast<float>(v);
}

}  // namespace

ImageU8 crop_resize(const ImageU8& img, const RoiBox& box, int side) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img.width || box.y1 > img.height ||
      box.x0 >= box.x1 || box.y0 >= box.y1)
    throw std::invalid_argument("crop_resize: invalid box");
  ImageU8 gray = to_gray(img);

  const int cw = box.width(), ch = box.height();
  const int sq = std::max(cw, ch);
  const int pad_x = (sq - cw) / 2, pad_y = (sq - ch) / 2;

  // crop into zero-padded square
  std::vector<float> square(static_cast<size_t>(sq) * sq, 0.0f);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      square[static_cast<size_t>(y + pad_y) * sq + (x + pad_x)] =
          static_cast<float>(gray.at(box.y0 + y, box.x0 + x));

  ImageU8 out = make_image(side, side, 1);
  const double scale = static_cast<double>(sq) / side;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double sx = (x + 0.5) * scale - 0.5;
      double sy = (y + 0.5) * scale - 0.5;
      float v = sample_bilinear(square, sq, sq, sx, sy);
      v = std::clamp(v, 0.0f, 255.0f);
      out.at(y, x) = static_cast<uint8_t>(std::lround(v));
    }
  return out;
}

Tensor<float> normalize_plane(const std::vector<float>& plane, int side,
                              const NormStats& stats) {
  Tensor<float> t = Tensor<float>::zeros({3, side, side});
  const int64_t n = static_cast<int64_t>(side) * side;
  for (int c = 0; c < 3; ++c)
    for (int64_t i = 0; i < n; ++i)
      t.data()[c * n + i] = (plane[i] - stats.mean[c]) / stats.std[c];
  return t;
}

Tensor<float> normalize(const ImageU8& img, const NormStats& stats) {
  ImageU8 gray = to_gray(img);
  return normalize_plane(to_plane(gray), img.width, stats);
}

std::vector<float> denormalize(const Tensor<float>& t, const NormStats& stats) {
  const int side = t.dim(1);
  const int64_t n = static_cast<int64_t>(side) * t.dim(2);
  std::vector<float> plane(n);
  for (int64_t i = 0; i < n; ++i) plane[i] = t.data()[i] * stats.std[0] + stats.mean[0];
  return plane;
}

PreprocessedView preprocess_view(const ImageU8& img, const PreprocessConfig& cfg) {
  ImageU8 gray = to_gray(img);
  PreprocessedView out;
  out.box = {0, 0, img.width, img.height};
  out.full_frame_fallback = true;

  std::optional<BinaryMask> mask;
  if (cfg.threshold_override) {
    BinaryMask m;
    m.width = gray.width;
    m.height = gray.height;
    m.bits.resize(gray.pixels.size());
    for (size_t i = 0; i < gray.pixels.size(); ++i)
      m.bits[i] = gray.pixels[i] >= *cfg.threshold_override ? 1 : 0;
    mask = std::move(m);
  } else if (auto thr = binary_threshold(gray)) {
    mask = std::move(thr->mask);
  }
  if (mask) {
    if (auto box = largest_contour_bbox(*mask, cfg.margin_frac)) {
      out.box = *box;
      out.full_frame_fallback = false;
    }
  }
  ImageU8 resized = crop_resize(gray, out.box, cfg.side);
  out.plane = to_plane(resized);
  return out;
}

void map_to_preprocessed(double x, double y, const RoiBox& box, int side,
                         double* out_x, double* out_y) {
  const int sq = std::max(box.width(), box.height());
  const double pad_x = (sq - box.width()) / 2;
  const double pad_y = (sq - box.height()) / 2;
  const double scale = static_cast<double>(side) / sq;
  *out_x = (x - box.x0 + pad_x + 0.5) * scale - 0.5;
  *out_y = (y - box.y0 + pad_y + 0.5) * scale - 0.5;
}

}  // namespace murax
