#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace boolattn {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Deterministic pseudo-random source. The same seed always yields the same
/// sample stream. Not shareable across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in the open interval (0, 1).
  double uniform() {
    double u = static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
    if (u <= 0.0) u = 1e-12;
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (deterministic given the stream).
  double normal();

  /// Gumbel(0,1) sample, g = -ln(-ln(u)) with u clamped to [1e-9, 1-1e-9].
  double gumbel();

  /// Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // lazily allocated, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

/// Value-semantic handle to a node in the computation graph. Data is 32-bit
/// float, row-major. Tensors are immutable after construction except for
/// gradient accumulation; a graph and its backward pass belong to one thread.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor uniform(Shape shape, float lo, float hi, Rng& rng, bool requires_grad = false);
  static Tensor normal(Shape shape, float mean, float stddev, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[i]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  // Shared-handle semantics: a const Tensor still aliases mutable storage.
  std::vector<float>& data() const { return impl_->data; }
  std::vector<float>& grad() const { return impl_->grad; }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  float item() const;

  std::shared_ptr<TensorImpl>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode gradient accumulation from a scalar loss. Repeated calls
/// without zeroing accumulate into .grad.
void backward(const Tensor& loss);

/// Scoped switch that disables graph recording (eval-mode forward).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result node. backward_fn receives the result node and must
/// scatter result.grad into each parent's grad (parents already have
/// ensure_grad() called for those that require grad).
Tensor make_op(Shape shape, std::vector<float> data,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn);

}  // namespace boolattn
