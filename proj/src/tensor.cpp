#include "murax/tensor.h"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace murax {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_nchw(const std::vector<int>& s, const char* what) {
  if (s.size() != 4) fail(std::string(what) + ": expected NCHW tensor, got shape " + shape_str(s));
}

// Unpacks padded windows of one NCHW sample into a (C*kh*kw) x (H'*W')
// column matrix so conv becomes a single gemm.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* cols) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols + static_cast<int64_t>((c * kh + ky) * kw + kx) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) row[oy * Wo + ox] = T(0);
            continue;
          }
          const T* src = x + static_cast<int64_t>(c) * H * W + static_cast<int64_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride - pad + kx;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accum(const T* cols, int C, int H, int W, int kh, int kw, int stride,
                  int pad, int Ho, int Wo, T* dx) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols + static_cast<int64_t>((c * kh + ky) * kw + kx) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = dx + static_cast<int64_t>(c) * H * W + static_cast<int64_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

int conv_out_size(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->shape = std::move(shape);
  t.d_->data.assign(numel(t.d_->shape), T(0));
  t.d_->requires_grad = requires_grad;
  if (requires_grad) t.d_->grad.assign(t.d_->data.size(), T(0));
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<int> shape, T value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.d_->data.begin(), t.d_->data.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(std::vector<int> shape, std::vector<T> values,
                          bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(values.size()))
    fail("Tensor::from: shape " + shape_str(shape) + " does not match " +
         std::to_string(values.size()) + " values");
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->shape = std::move(shape);
  t.d_->data = std::move(values);
  t.d_->requires_grad = requires_grad;
  if (requires_grad) t.d_->grad.assign(t.d_->data.size(), T(0));
  return t;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool v) {
  d_->requires_grad = v;
  if (v && d_->grad.empty()) d_->grad.assign(d_->data.size(), T(0));
}

template <typename T>
void Tensor<T>::ensure_grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->data.size(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::drop_grad() {
  d_->grad.clear();
  d_->grad.shrink_to_fit();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t;
  t.d_ = std::make_shared<Data>(*d_);
  return t;
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
void Tape<T>::record(Tensor<T> output, std::function<void()> backward_fn) {
  nodes_.push_back({std::move(output), std::move(backward_fn)});
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (loss.size() != 1)
    fail("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  bool found = false;
  for (auto& n : nodes_)
    if (n.output.id() == loss.id()) found = true;
  if (!found) fail("backward: loss was not produced on this tape");
  // Non-leaf grads are recomputed each call; leaves keep accumulating.
  for (auto& n : nodes_) n.output.zero_grad();
  loss.grad()[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->backward_fn) it->backward_fn();
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  check_nchw(x.shape(), "conv2d input");
  check_nchw(weight.shape(), "conv2d weight");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C)
    fail("conv2d: input has " + std::to_string(C) + " channels but weight expects " +
         std::to_string(weight.dim(1)));
  if (H + 2 * padding < kh || W + 2 * padding < kw)
    fail("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
         " exceeds padded input " + std::to_string(H + 2 * padding) + "x" +
         std::to_string(W + 2 * padding));
  if (bias.valid() && (bias.ndim() != 1 || bias.dim(0) != F))
    fail("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
         std::to_string(F) + " filters");
  const int Ho = conv_out_size(H, kh, stride, padding);
  const int Wo = conv_out_size(W, kw, stride, padding);
  const int K = C * kh * kw, P = Ho * Wo;

  Tensor<T> out = Tensor<T>::zeros({N, F, Ho, Wo});
  std::vector<T> cols(static_cast<size_t>(K) * P);
  ConstMatMap<T> wmat(weight.data(), F, K);
  for (int n = 0; n < N; ++n) {
    im2col(x.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw, stride,
           padding, Ho, Wo, cols.data());
    ConstMatMap<T> cmat(cols.data(), K, P);
    MatMap<T> omat(out.data() + static_cast<int64_t>(n) * F * P, F, P);
    omat.noalias() = wmat * cmat;
    if (bias.valid())
      for (int f = 0; f < F; ++f) omat.row(f).array() += bias.data()[f];
  }

  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, wc = weight, bc = bias, oc = out;
    tape->record(out, [xc, wc, bc, oc, stride, padding, N, C, H, W, F, kh, kw, Ho, Wo,
                       K, P]() mutable {
      std::vector<T> cols(static_cast<size_t>(K) * P);
      ConstMatMap<T> wmat(wc.data(), F, K);
      for (int n = 0; n < N; ++n) {
        ConstMatMap<T> gmat(oc.grad() + static_cast<int64_t>(n) * F * P, F, P);
        if (wc.has_grad()) {
          im2col(xc.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw,
                 stride, padding, Ho, Wo, cols.data());
          ConstMatMap<T> cmat(cols.data(), K, P);
          MatMap<T> wg(wc.grad(), F, K);
          wg.noalias() += gmat * cmat.transpose();
        }
        if (bc.valid() && bc.has_grad())
          for (int f = 0; f < F; ++f) bc.grad()[f] += gmat.row(f).sum();
        if (xc.has_grad()) {
          MatMap<T> cmat(cols.data(), K, P);
          cmat.noalias() = wmat.transpose() * gmat;
          col2im_accum(cols.data(), C, H, W, kh, kw, stride, padding, Ho, Wo,
                       xc.grad() + static_cast<int64_t>(n) * C * H * W);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch_norm2d

template <typename T>
Tensor<T> batch_norm2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, BatchNormMode mode, T momentum,
                       T epsilon, bool update_running_stats) {
  check_nchw(x.shape(), "batch_norm2d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.dim(0) != C || beta.dim(0) != C)
    fail("batch_norm2d: gamma/beta length must equal " + std::to_string(C) + " channels");
  if (epsilon <= T(0)) fail("batch_norm2d: epsilon must be positive");
  const int64_t m = static_cast<int64_t>(N) * H * W;
  if (mode == BatchNormMode::Train && m < 2)
    fail("batch_norm2d: train mode needs at least 2 elements per channel, got " +
         std::to_string(m));

  std::vector<T> mean(C), invstd(C);
  const int64_t plane = static_cast<int64_t>(H) * W;
  if (mode == BatchNormMode::Train) {
    for (int c = 0; c < C; ++c) {
      T s = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x.data() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
      }
      T mu = s / static_cast<T>(m);
      T v = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x.data() + (static_cast<int64_t>(n) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      mean[c] = mu;
      T var_biased = v / static_cast<T>(m);
      invstd[c] = T(1) / std::sqrt(var_biased + epsilon);
      if (update_running_stats) {
        T var_unbiased = v / static_cast<T>(m - 1);
        running_mean.data()[c] = momentum * mu + (T(1) - momentum) * running_mean.data()[c];
        running_var.data()[c] =
            momentum * var_unbiased + (T(1) - momentum) * running_var.data()[c];
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = T(1) / std::sqrt(running_var.data()[c] + epsilon);
    }
  }

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* p = x.data() + (static_cast<int64_t>(n) * C + c) * plane;
      T* q = out.data() + (static_cast<int64_t>(n) * C + c) * plane;
      const T g = gamma.data()[c], b = beta.data()[c], mu = mean[c], is = invstd[c];
      for (int64_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * is + b;
    }
  }

  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
    bool train = mode == BatchNormMode::Train;
    tape->record(out, [xc, gc, bc, oc, mean, invstd, train, N, C, plane, m]() mutable {
      for (int c = 0; c < C; ++c) {
        const T g = gc.data()[c], mu = mean[c], is = invstd[c];
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < N; ++n) {
          const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
          const T* dy = oc.grad() + off;
          const T* px = xc.data() + off;
          for (int64_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * (px[i] - mu) * is;
          }
        }
        if (gc.has_grad()) gc.grad()[c] += sum_dy_xhat;
        if (bc.has_grad()) bc.grad()[c] += sum_dy;
        if (!xc.has_grad()) continue;
        for (int n = 0; n < N; ++n) {
          const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
          const T* dy = oc.grad() + off;
          const T* px = xc.data() + off;
          T* dx = xc.grad() + off;
          if (train) {
            const T inv_m = T(1) / static_cast<T>(m);
            for (int64_t i = 0; i < plane; ++i) {
              T xhat = (px[i] - mu) * is;
              dx[i] += g * is * (dy[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
            }
          } else {
            for (int64_t i = 0; i < plane; ++i) dx[i] += g * is * dy[i];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> elementwise(Tape<T>* tape, const Tensor<T>& x, Elementwise kind) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const int64_t n = x.size();
  if (kind == Elementwise::Relu) {
    for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  } else {
    for (int64_t i = 0; i < n; ++i) out.data()[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  }
  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, kind, n]() mutable {
      if (!xc.has_grad()) return;
      if (kind == Elementwise::Relu) {
        // subgradient at 0 is 0
        for (int64_t i = 0; i < n; ++i)
          if (xc.data()[i] > T(0)) xc.grad()[i] += oc.grad()[i];
      } else {
        for (int64_t i = 0; i < n; ++i) {
          T s = oc.data()[i];
          xc.grad()[i] += oc.grad()[i] * s * (T(1) - s);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pool2d

template <typename T>
Tensor<T> pool2d(Tape<T>* tape, const Tensor<T>& x, PoolKind kind, int k, int stride) {
  check_nchw(x.shape(), "pool2d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (kind == PoolKind::GlobalAvg) {
    k = H;  // unused below
    Tensor<T> out = Tensor<T>::zeros({N, C, 1, 1});
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* p = x.data() + (static_cast<int64_t>(n) * C + c) * plane;
        T s = 0;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
        out.data()[n * C + c] = s / static_cast<T>(plane);
      }
    if (tape) {
      out.ensure_grad();
      Tensor<T> xc = x, oc = out;
      tape->record(out, [xc, oc, N, C, plane]() mutable {
        if (!xc.has_grad()) return;
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            T g = oc.grad()[n * C + c] / static_cast<T>(plane);
            T* dx = xc.grad() + (static_cast<int64_t>(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) dx[i] += g;
          }
      });
    }
    return out;
  }

  if (k > H || k > W)
    fail("pool2d: kernel " + std::to_string(k) + " larger than input " +
         std::to_string(H) + "x" + std::to_string(W));
  const int Ho = conv_out_size(H, k, stride, 0);
  const int Wo = conv_out_size(W, k, stride, 0);
  Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
  std::vector<int64_t> argmax;
  if (kind == PoolKind::Max) argmax.resize(out.size());
  const int64_t plane = static_cast<int64_t>(H) * W;
  int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const int64_t base = (static_cast<int64_t>(n) * C + c) * plane;
      const T* p = x.data() + base;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++oi) {
          if (kind == PoolKind::Max) {
            T best = p[static_cast<int64_t>(oy * stride) * W + ox * stride];
            int64_t best_i = static_cast<int64_t>(oy * stride) * W + ox * stride;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) {
                int64_t idx = static_cast<int64_t>(oy * stride + dy) * W + ox * stride + dx;
                if (p[idx] > best) { best = p[idx]; best_i = idx; }
              }
            out.data()[oi] = best;
            argmax[oi] = base + best_i;
          } else {
            T s = 0;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                s += p[static_cast<int64_t>(oy * stride + dy) * W + ox * stride + dx];
            out.data()[oi] = s / static_cast<T>(k * k);
          }
        }
    }

  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, kind, k, stride, N, C, H, W, Ho, Wo, plane,
                       argmax = std::move(argmax)]() mutable {
      if (!xc.has_grad()) return;
      if (kind == PoolKind::Max) {
        for (int64_t i = 0; i < oc.size(); ++i) xc.grad()[argmax[i]] += oc.grad()[i];
      } else {
        int64_t oi = 0;
        const T inv = T(1) / static_cast<T>(k * k);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            T* dx = xc.grad() + (static_cast<int64_t>(n) * C + c) * plane;
            for (int oy = 0; oy < Ho; ++oy)
              for (int ox = 0; ox < Wo; ++ox, ++oi) {
                T g = oc.grad()[oi] * inv;
                for (int dy = 0; dy < k; ++dy)
                  for (int dxx = 0; dxx < k; ++dxx)
                    dx[static_cast<int64_t>(oy * stride + dy) * W + ox * stride + dxx] += g;
              }
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// concat / slice

template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) fail("concat_channels: empty input list");
  const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int Ctot = 0;
  for (const auto& x : xs) {
    check_nchw(x.shape(), "concat_channels input");
    if (x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
      fail("concat_channels: shape " + shape_str(x.shape()) +
           " does not match leading input " + shape_str(xs[0].shape()));
    Ctot += x.dim(1);
  }
  Tensor<T> out = Tensor<T>::zeros({N, Ctot, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    int64_t off = static_cast<int64_t>(n) * Ctot * plane;
    for (const auto& x : xs) {
      const int64_t blk = static_cast<int64_t>(x.dim(1)) * plane;
      std::copy(x.data() + n * blk, x.data() + (n + 1) * blk, out.data() + off);
      off += blk;
    }
  }
  if (tape) {
    out.ensure_grad();
    std::vector<Tensor<T>> xc = xs;
    Tensor<T> oc = out;
    tape->record(out, [xc, oc, N, Ctot, plane]() mutable {
      for (int n = 0; n < N; ++n) {
        int64_t off = static_cast<int64_t>(n) * Ctot * plane;
        for (auto& x : xc) {
          const int64_t blk = static_cast<int64_t>(x.dim(1)) * plane;
          if (x.has_grad())
            for (int64_t i = 0; i < blk; ++i) x.grad()[n * blk + i] += oc.grad()[off + i];
          off += blk;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(Tape<T>* tape, const Tensor<T>& x, int c0, int c1) {
  check_nchw(x.shape(), "slice_channels input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1)
    fail("slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
         ") invalid for " + std::to_string(C) + " channels");
  const int Cs = c1 - c0;
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor<T> out = Tensor<T>::zeros({N, Cs, H, W});
  for (int n = 0; n < N; ++n)
    std::copy(x.data() + (static_cast<int64_t>(n) * C + c0) * plane,
              x.data() + (static_cast<int64_t>(n) * C + c1) * plane,
              out.data() + static_cast<int64_t>(n) * Cs * plane);
  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, N, C, c0, Cs, plane]() mutable {
      if (!xc.has_grad()) return;
      for (int n = 0; n < N; ++n) {
        T* dst = xc.grad() + (static_cast<int64_t>(n) * C + c0) * plane;
        const T* src = oc.grad() + static_cast<int64_t>(n) * Cs * plane;
        for (int64_t i = 0; i < static_cast<int64_t>(Cs) * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  if (x.ndim() != 2 || weight.ndim() != 2)
    fail("linear: expected 2-d input and weight, got " + shape_str(x.shape()) + " and " +
         shape_str(weight.shape()));
  const int N = x.dim(0), D = x.dim(1), K = weight.dim(0);
  if (weight.dim(1) != D)
    fail("linear: input dim " + std::to_string(D) + " vs weight dim " +
         std::to_string(weight.dim(1)));
  if (bias.dim(0) != K)
    fail("linear: bias length " + std::to_string(bias.dim(0)) + " vs " + std::to_string(K));
  Tensor<T> out = Tensor<T>::zeros({N, K});
  ConstMatMap<T> xm(x.data(), N, D), wm(weight.data(), K, D);
  MatMap<T> om(out.data(), N, K);
  om.noalias() = xm * wm.transpose();
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) om(n, k) += bias.data()[k];
  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, wc = weight, bc = bias, oc = out;
    tape->record(out, [xc, wc, bc, oc, N, D, K]() mutable {
      ConstMatMap<T> gm(oc.grad(), N, K), xm(xc.data(), N, D), wm(wc.data(), K, D);
      if (wc.has_grad()) {
        MatMap<T> wg(wc.grad(), K, D);
        wg.noalias() += gm.transpose() * xm;
      }
      if (bc.has_grad())
        for (int k = 0; k < K; ++k) bc.grad()[k] += gm.col(k).sum();
      if (xc.has_grad()) {
        MatMap<T> xg(xc.grad(), N, D);
        xg.noalias() += gm * wm;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// weighted_bce

template <typename T>
Tensor<T> weighted_bce(Tape<T>* tape, const Tensor<T>& prob, const Tensor<T>& target,
                       T pos_weight, T neg_weight) {
  if (prob.size() != target.size())
    fail("weighted_bce: prob size " + std::to_string(prob.size()) + " vs target " +
         std::to_string(target.size()));
  if (pos_weight <= T(0) || neg_weight <= T(0))
    fail("weighted_bce: class weights must be positive");
  const int64_t n = prob.size();
  const T clamp_eps = T(1e-7);
  for (int64_t i = 0; i < n; ++i) {
    T t = target.data()[i];
    if (t != T(0) && t != T(1))
      fail("weighted_bce: target[" + std::to_string(i) + "] = " + std::to_string(t) +
           " is not in {0,1}");
  }
  T loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    T p = std::min(std::max(prob.data()[i], clamp_eps), T(1) - clamp_eps);
    T t = target.data()[i];
    loss += -(pos_weight * t * std::log(p) + neg_weight * (T(1) - t) * std::log(T(1) - p));
  }
  Tensor<T> out = Tensor<T>::from({1}, {loss / static_cast<T>(n)});
  if (tape) {
    out.ensure_grad();
    Tensor<T> pc = prob, tc = target, oc = out;
    tape->record(out, [pc, tc, oc, pos_weight, neg_weight, clamp_eps, n]() mutable {
      if (!pc.has_grad()) return;
      const T g = oc.grad()[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) {
        T raw = pc.data()[i];
        if (raw < clamp_eps || raw > T(1) - clamp_eps) continue;  // clamped region
        T t = tc.data()[i];
        pc.grad()[i] += g * (-(pos_weight * t / raw) + neg_weight * (T(1) - t) / (T(1) - raw));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// small arithmetic ops

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  T s = 0;
  for (int64_t i = 0; i < x.size(); ++i) s += x.data()[i];
  Tensor<T> out = Tensor<T>::from({1}, {s});
  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc]() mutable {
      if (!xc.has_grad()) return;
      for (int64_t i = 0; i < xc.size(); ++i) xc.grad()[i] += oc.grad()[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tape) {
    out.ensure_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc]() mutable {
      for (int64_t i = 0; i < oc.size(); ++i) {
        if (ac.has_grad()) ac.grad()[i] += oc.grad()[i];
        if (bc.has_grad()) bc.grad()[i] += oc.grad()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tape) {
    out.ensure_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc]() mutable {
      for (int64_t i = 0; i < oc.size(); ++i) {
        if (ac.has_grad()) ac.grad()[i] += oc.grad()[i] * bc.data()[i];
        if (bc.has_grad()) bc.grad()[i] += oc.grad()[i] * ac.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * factor;
  if (tape) {
    out.ensure_grad();
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, factor]() mutable {
      if (!xc.has_grad()) return;
      for (int64_t i = 0; i < xc.size(); ++i) xc.grad()[i] += oc.grad()[i] * factor;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// grad_check

double grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs, double eps) {
  if (eps <= 0) fail("grad_check: eps must be positive");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tape<double> tape;
  Tensor<double> out = fn(tape, inputs);
  if (out.size() != 1) fail("grad_check: closure must return a scalar");
  tape.backward(out);

  double max_err = 0;
  for (auto& in : inputs) {
    for (int64_t i = 0; i < in.size(); ++i) {
      const double orig = in.data()[i];
      in.data()[i] = orig + eps;
      Tape<double> tp;
      double fp = fn(tp, inputs).data()[0];
      in.data()[i] = orig - eps;
      Tape<double> tm;
      double fm = fn(tm, inputs).data()[0];
      in.data()[i] = orig;
      double numeric = (fp - fm) / (2 * eps);
      double analytic = in.grad()[i];
      double err = std::abs(analytic - numeric) /
                   std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

// ---------------------------------------------------------------------------
// explicit instantiations

#define MURAX_INSTANTIATE(T)                                                        \
  template class Tensor<T>;                                                         \
  template class Tape<T>;                                                           \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,        \
                               const Tensor<T>&, int, int);                         \
  template Tensor<T> batch_norm2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,  \
                                     const Tensor<T>&, Tensor<T>&, Tensor<T>&,      \
                                     BatchNormMode, T, T, bool);                    \
  template Tensor<T> elementwise<T>(Tape<T>*, const Tensor<T>&, Elementwise);       \
  template Tensor<T> pool2d<T>(Tape<T>*, const Tensor<T>&, PoolKind, int, int);     \
  template Tensor<T> concat_channels<T>(Tape<T>*, const std::vector<Tensor<T>>&);   \
  template Tensor<T> slice_channels<T>(Tape<T>*, const Tensor<T>&, int, int);       \
  template Tensor<T> linear<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,        \
                               const Tensor<T>&);                                   \
  template Tensor<T> weighted_bce<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,  \
                                     T, T);                                         \
  template Tensor<T> sum<T>(Tape<T>*, const Tensor<T>&);                            \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);

MURAX_INSTANTIATE(float)
MURAX_INSTANTIATE(double)

#undef MURAX_INSTANTIATE

}  // namespace murax
