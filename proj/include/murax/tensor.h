#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace murax {

// Dense row-major tensor with optional gradient storage. Copies are
// shallow (shared storage); ops never alias their inputs' data.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, T value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<T> values,
                     bool requires_grad = false);

  bool valid() const { return d_ != nullptr; }
  const std::vector<int>& shape() const { return d_->shape; }
  int dim(int i) const { return d_->shape[i]; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(d_->data.size()); }

  T* data() { return d_->data.data(); }
  const T* data() const { return d_->data.data(); }
  std::vector<T>& values() { return d_->data; }
  const std::vector<T>& values() const { return d_->data; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v);
  bool has_grad() const { return !d_->grad.empty(); }
  T* grad() { return d_->grad.data(); }
  const T* grad() const { return d_->grad.data(); }
  void ensure_grad();
  void zero_grad();
  void drop_grad();

  // Identity of the underlying storage, for freeze/hash bookkeeping.
  const void* id() const { return d_.get(); }

  Tensor clone() const;

 private:
  struct Data {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Records op backward closures in execution order; backward() replays
// them in reverse. One tape per forward pass, confined to one thread.
template <typename T>
class Tape {
 public:
  void record(Tensor<T> output, std::function<void()> backward_fn);
  // Seeds d(loss)/d(loss)=1 and replays. Non-leaf grads are recomputed
  // from scratch on every call; leaf grads accumulate across calls.
  void backward(Tensor<T>& loss);
  void clear();
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> output;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
};

enum class Elementwise { Relu, Sigmoid };
enum class PoolKind { Max, Avg, GlobalAvg };
enum class BatchNormMode { Train, Eval };

// All ops accept tape == nullptr for inference-only evaluation.

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding);

template <typename T>
Tensor<T> batch_norm2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, BatchNormMode mode, T momentum,
                       T epsilon, bool update_running_stats = true);

template <typename T>
Tensor<T> elementwise(Tape<T>* tape, const Tensor<T>& x, Elementwise kind);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  return elementwise(tape, x, Elementwise::Relu);
}
template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  return elementwise(tape, x, Elementwise::Sigmoid);
}

template <typename T>
Tensor<T> pool2d(Tape<T>* tape, const Tensor<T>& x, PoolKind kind, int k, int stride);

template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& xs);

// Channels [c0, c1) of a NCHW tensor; inverse of concat_channels.
template <typename T>
Tensor<T> slice_channels(Tape<T>* tape, const Tensor<T>& x, int c0, int c1);

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

template <typename T>
Tensor<T> weighted_bce(Tape<T>* tape, const Tensor<T>& prob, const Tensor<T>& target,
                       T pos_weight, T neg_weight);

// Reductions / arithmetic used by losses and tests.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x);
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor);

// Conv/pool output size: floor((in + 2*pad - k) / stride) + 1.
int conv_out_size(int in, int k, int stride, int padding);

// Central-difference gradient check. The closure must return a scalar
// produced on the given tape from exactly the tensors passed in.
using GradCheckFn =
    std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>;
double grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                  double eps = 1e-5);

std::string shape_str(const std::vector<int>& shape);

}  // namespace murax
