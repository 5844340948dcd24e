#include "boolattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace boolattn {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::gumbel() {
  double u = uniform();
  u = std::min(std::max(u, 1e-9), 1.0 - 1e-9);
  return -std::log(-std::log(u));
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<float> d(numel(shape), 0.0f);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> d(numel(shape), value);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<float>{value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, float lo, float hi, Rng& rng, bool requires_grad) {
  std::vector<float> d(numel(shape));
  for (auto& v : d) v = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::normal(Shape shape, float mean, float stddev, Rng& rng, bool requires_grad) {
  std::vector<float> d(numel(shape));
  for (auto& v : d) v = static_cast<float>(mean + stddev * rng.normal());
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

float Tensor::item() const {
  if (impl_->data.size() != 1)
    throw std::runtime_error("item() requires a scalar tensor, got " + shape_str(impl_->shape));
  return impl_->data[0];
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_op(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn) {
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p.requires_grad()) track = true;
  }
  Tensor out(std::move(shape), std::move(data), track);
  if (track) {
    for (auto& p : parents) out.impl()->parents.push_back(p.impl());
    out.impl()->backward_fn = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::runtime_error("backward() requires a scalar loss");
  if (!loss.requires_grad()) return;

  // Topological order via iterative DFS.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorImpl* parent = node->parents[idx++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->backward_fn) continue;
    for (auto& p : node->parents)
      if (p->requires_grad) p->ensure_grad();
    node->backward_fn(*node);
  }
}

}  // namespace boolattn
