#include "murax/augment.h"

#include <algorithm>
#include <cmath>

#include "murax/rng.h"

namespace murax {

AugmentParams sample_params(const AugmentConfig& config, uint64_t seed, int epoch,
                            int sample_index) {
  Rng rng(hash_combine(hash_combine(seed, static_cast<uint64_t>(epoch)),
                       static_cast<uint64_t>(sample_index)));
  AugmentParams p;
  p.flip = rng.uniform() < config.flip_prob;
  p.angle_deg = rng.uniform(-config.max_rotation, config.max_rotation);
  p.scale = rng.uniform(config.scale_lo, config.scale_hi);
  p.brightness = rng.uniform(config.brightness_lo, config.brightness_hi);
  return p;
}

namespace {

float sample_bilinear(const std::vector<float>& src, int side, double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= side || yy < 0 || yy >= side) return 0.0;
    return src[static_cast<size_t>(yy) * side + xx];
  };
  return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

// Inverse-mapped resample: dst(x,y) = src(cx + a*(x-cx) + b*(y-cy), ...).
std::vector<float> warp(const std::vector<float>& src, int side, double m00, double m01,
                        double m10, double m11) {
  std::vector<float> dst(src.size());
  const double c = (side - 1) / 2.0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double dx = x - c, dy = y - c;
      double sx = c + m00 * dx + m01 * dy;
      double sy = c + m10 * dx + m11 * dy;
      dst[static_cast<size_t>(y) * side + x] = sample_bilinear(src, side, sx, sy);
    }
  return dst;
}

}  // namespace

std::vector<float> apply_augment(const std::vector<float>& plane, int side,
                                 const AugmentParams& params) {
  std::vector<float> img = plane;

  if (params.flip) {
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side / 2; ++x)
        std::swap(img[static_cast<size_t>(y) * side + x],
                  img[static_cast<size_t>(y) * side + (side - 1 - x)]);
  }

  if (params.angle_deg != 0.0) {
    const double th = params.angle_deg * M_PI / 180.0;
    // inverse rotation
    img = warp(img, side, std::cos(th), std::sin(th), -std::sin(th), std::cos(th));
  }

  if (params.scale != 1.0) {
    const double inv = 1.0 / params.scale;
    img = warp(img, side, inv, 0.0, 0.0, inv);
  }

  if (params.brightness != 1.0)
    for (float& v : img) v = std::clamp(v * static_cast<float>(params.brightness), 0.0f, 1.0f);
  else
    for (float& v : img) v = std::clamp(v, 0.0f, 1.0f);

  return img;
}

}  // namespace murax
