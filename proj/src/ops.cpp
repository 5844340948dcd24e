#include "boolattn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace boolattn {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_suffix_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (numel(b) == 1) return;
  if (b.size() > a.size())
    throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(b) +
                                " against " + shape_str(a));
  for (size_t i = 0; i < b.size(); ++i) {
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i])
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                  shape_str(b));
  }
}

float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(x);
  return e / (1.0f + e);
}

float stable_softplus(float x) {
  // max(x,0) + log1p(exp(-|x|))
  return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_suffix_broadcast(a.shape(), b.shape(), "add");
  std::int64_t n = a.size(), bn = b.size();
  std::vector<float> out(n);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = ad[i] + bd[i % bn];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b, n, bn](TensorImpl& r) mutable {
    if (a.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) a.grad()[i] += r.grad[i];
    if (b.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) b.grad()[i % bn] += r.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_suffix_broadcast(a.shape(), b.shape(), "sub");
  std::int64_t n = a.size(), bn = b.size();
  std::vector<float> out(n);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = ad[i] - bd[i % bn];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b, n, bn](TensorImpl& r) mutable {
    if (a.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) a.grad()[i] += r.grad[i];
    if (b.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) b.grad()[i % bn] -= r.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_suffix_broadcast(a.shape(), b.shape(), "mul");
  std::int64_t n = a.size(), bn = b.size();
  std::vector<float> out(n);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = ad[i] * bd[i % bn];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b, n, bn](TensorImpl& r) mutable {
    if (a.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) a.grad()[i] += r.grad[i] * b.data()[i % bn];
    if (b.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) b.grad()[i % bn] += r.grad[i] * a.data()[i];
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0f); }

Tensor scale(const Tensor& x, float c) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = x.data()[i] * c;
  return make_op(x.shape(), std::move(out), {x}, [x, c, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) x.grad()[i] += r.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& x, float c) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = x.data()[i] + c;
  return make_op(x.shape(), std::move(out), {x}, [x, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) x.grad()[i] += r.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::max(0.0f, x.data()[i]);
  return make_op(x.shape(), std::move(out), {x}, [x, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i)
        if (x.data()[i] > 0.0f) x.grad()[i] += r.grad[i];
  });
}

Tensor tanh_t(const Tensor& x) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::tanh(x.data()[i]);
  return make_op(x.shape(), std::move(out), {x}, [x, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) x.grad()[i] += r.grad[i] * (1.0f - r.data[i] * r.data[i]);
  });
}

Tensor sigmoid(const Tensor& x) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = stable_sigmoid(x.data()[i]);
  return make_op(x.shape(), std::move(out), {x}, [x, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i)
        x.grad()[i] += r.grad[i] * r.data[i] * (1.0f - r.data[i]);
  });
}

Tensor softplus(const Tensor& x) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = stable_softplus(x.data()[i]);
  return make_op(x.shape(), std::move(out), {x}, [x, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) x.grad()[i] += r.grad[i] * stable_sigmoid(x.data()[i]);
  });
}

Tensor sqrt_t(const Tensor& x) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::sqrt(std::max(0.0f, x.data()[i]));
  return make_op(x.shape(), std::move(out), {x}, [x, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i)
        x.grad()[i] += r.grad[i] * 0.5f / std::max(r.data[i], 1e-6f);
  });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  std::int64_t n = x.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::min(std::max(x.data()[i], lo), hi);
  return make_op(x.shape(), std::move(out), {x}, [x, lo, hi, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < n; ++i)
        if (x.data()[i] > lo && x.data()[i] < hi) x.grad()[i] += r.grad[i];
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  return make_op({1}, {static_cast<float>(s)}, {x}, [x](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (auto& g : x.grad()) g += r.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  float inv = 1.0f / static_cast<float>(x.size());
  return make_op({1}, {static_cast<float>(s / static_cast<double>(x.size()))}, {x},
                 [x, inv](TensorImpl& r) mutable {
                   if (x.requires_grad())
                     for (auto& g : x.grad()) g += r.grad[0] * inv;
                 });
}

Tensor sum_lastdim(const Tensor& x) {
  Shape s = x.shape();
  int n = s.back();
  s.pop_back();
  if (s.empty()) s = {1};
  std::int64_t rows = numel(s);
  std::vector<float> out(rows);
  for (std::int64_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += x.data()[i * n + j];
    out[i] = static_cast<float>(acc);
  }
  return make_op(std::move(s), std::move(out), {x}, [x, rows, n](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) x.grad()[i * n + j] += r.grad[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<float> out = x.data();
  return make_op(std::move(shape), std::move(out), {x}, [x](TensorImpl& r) mutable {
    if (x.requires_grad())
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(r.grad.size()); ++i)
        x.grad()[i] += r.grad[i];
  });
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape(), sb = b.shape();
  if (sa.size() != sb.size())
    throw std::invalid_argument("concat: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  for (size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i])
      throw std::invalid_argument("concat: " + shape_str(sa) + " vs " + shape_str(sb));
  int na = sa.back(), nb = sb.back();
  Shape so = sa;
  so.back() = na + nb;
  std::int64_t rows = numel(so) / (na + nb);
  std::vector<float> out(rows * (na + nb));
  for (std::int64_t i = 0; i < rows; ++i) {
    std::copy_n(a.data().begin() + i * na, na, out.begin() + i * (na + nb));
    std::copy_n(b.data().begin() + i * nb, nb, out.begin() + i * (na + nb) + na);
  }
  return make_op(std::move(so), std::move(out), {a, b}, [a, b, rows, na, nb](TensorImpl& r) mutable {
    for (std::int64_t i = 0; i < rows; ++i) {
      if (a.requires_grad())
        for (int j = 0; j < na; ++j) a.grad()[i * na + j] += r.grad[i * (na + nb) + j];
      if (b.requires_grad())
        for (int j = 0; j < nb; ++j) b.grad()[i * nb + j] += r.grad[i * (na + nb) + na + j];
    }
  });
}

Tensor transpose_last2(const Tensor& x) {
  Shape s = x.shape();
  if (s.size() < 2) throw std::invalid_argument("transpose_last2 needs rank >= 2");
  int m = s[s.size() - 2], n = s[s.size() - 1];
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  std::int64_t batch = x.size() / (static_cast<std::int64_t>(m) * n);
  std::vector<float> out(x.size());
  for (std::int64_t b = 0; b < batch; ++b) {
    const float* src = x.data().data() + b * m * n;
    float* dst = out.data() + b * m * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  return make_op(std::move(s), std::move(out), {x}, [x, batch, m, n](TensorImpl& r) mutable {
    if (!x.requires_grad()) return;
    for (std::int64_t b = 0; b < batch; ++b) {
      const float* g = r.grad.data() + b * m * n;
      float* dst = x.grad().data() + b * m * n;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
    }
  });
}

Tensor split_heads(const Tensor& x, int heads) {
  if (x.ndim() != 3) throw std::invalid_argument("split_heads expects [B,L,d]");
  int B = x.dim(0), L = x.dim(1), d = x.dim(2);
  if (d % heads != 0) throw std::invalid_argument("split_heads: d not divisible by heads");
  int hd = d / heads;
  std::vector<float> out(x.size());
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h)
      for (int l = 0; l < L; ++l)
        for (int k = 0; k < hd; ++k)
          out[((static_cast<std::int64_t>(b) * heads + h) * L + l) * hd + k] =
              x.data()[(static_cast<std::int64_t>(b) * L + l) * d + h * hd + k];
  return make_op({B, heads, L, hd}, std::move(out), {x},
                 [x, B, L, d, heads, hd](TensorImpl& r) mutable {
                   if (!x.requires_grad()) return;
                   for (int b = 0; b < B; ++b)
                     for (int h = 0; h < heads; ++h)
                       for (int l = 0; l < L; ++l)
                         for (int k = 0; k < hd; ++k)
                           x.grad()[(static_cast<std::int64_t>(b) * L + l) * d + h * hd + k] +=
                               r.grad[((static_cast<std::int64_t>(b) * heads + h) * L + l) * hd + k];
                 });
}

Tensor merge_heads(const Tensor& x) {
  if (x.ndim() != 4) throw std::invalid_argument("merge_heads expects [B,heads,L,hd]");
  int B = x.dim(0), heads = x.dim(1), L = x.dim(2), hd = x.dim(3);
  int d = heads * hd;
  std::vector<float> out(x.size());
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h)
      for (int l = 0; l < L; ++l)
        for (int k = 0; k < hd; ++k)
          out[(static_cast<std::int64_t>(b) * L + l) * d + h * hd + k] =
              x.data()[((static_cast<std::int64_t>(b) * heads + h) * L + l) * hd + k];
  return make_op({B, L, d}, std::move(out), {x}, [x, B, L, d, heads, hd](TensorImpl& r) mutable {
    if (!x.requires_grad()) return;
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < heads; ++h)
        for (int l = 0; l < L; ++l)
          for (int k = 0; k < hd; ++k)
            x.grad()[((static_cast<std::int64_t>(b) * heads + h) * L + l) * hd + k] +=
                r.grad[(static_cast<std::int64_t>(b) * L + l) * d + h * hd + k];
  });
}

Tensor select_row(const Tensor& table, int row) {
  if (table.ndim() != 2) throw std::invalid_argument("select_row expects a 2-D table");
  int n = table.dim(1);
  std::vector<float> out(table.data().begin() + static_cast<std::int64_t>(row) * n,
                         table.data().begin() + static_cast<std::int64_t>(row + 1) * n);
  return make_op({n}, std::move(out), {table}, [table, row, n](TensorImpl& r) mutable {
    if (table.requires_grad())
      for (int j = 0; j < n; ++j) table.grad()[static_cast<std::int64_t>(row) * n + j] += r.grad[j];
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, int batch, int len) {
  if (table.ndim() != 2) throw std::invalid_argument("embedding_lookup expects a 2-D table");
  if (static_cast<std::int64_t>(ids.size()) != static_cast<std::int64_t>(batch) * len)
    throw std::invalid_argument("embedding_lookup: ids length mismatch");
  int V = table.dim(0), d = table.dim(1);
  std::vector<float> out(static_cast<std::int64_t>(batch) * len * d);
  for (size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || id >= V)
      throw std::out_of_range("token id " + std::to_string(id) + " out of vocabulary size " +
                              std::to_string(V));
    std::copy_n(table.data().begin() + static_cast<std::int64_t>(id) * d, d,
                out.begin() + static_cast<std::int64_t>(i) * d);
  }
  return make_op({batch, len, d}, std::move(out), {table}, [table, ids, d](TensorImpl& r) mutable {
    if (!table.requires_grad()) return;
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j)
        table.grad()[static_cast<std::int64_t>(ids[i]) * d + j] +=
            r.grad[static_cast<std::int64_t>(i) * d + j];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw std::invalid_argument("matmul needs rank >= 2, got " + shape_str(sa) + " and " +
                                shape_str(sb));
  int m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  int kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (k != kb)
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(sa) + " x " +
                                shape_str(sb));
  bool shared_b = (sb.size() == 2 && sa.size() > 2);
  if (!shared_b && sa.size() != sb.size())
    throw std::invalid_argument("matmul: rank mismatch " + shape_str(sa) + " x " + shape_str(sb));
  if (!shared_b)
    for (size_t i = 0; i + 2 < sa.size(); ++i)
      if (sa[i] != sb[i])
        throw std::invalid_argument("matmul: batch dims differ " + shape_str(sa) + " x " +
                                    shape_str(sb));

  std::int64_t batch = a.size() / (static_cast<std::int64_t>(m) * k);
  Shape so(sa.begin(), sa.end() - 2);
  so.push_back(m);
  so.push_back(n);
  std::vector<float> out(batch * m * n);
  for (std::int64_t t = 0; t < batch; ++t) {
    ConstMatMap A(a.data().data() + t * m * k, m, k);
    ConstMatMap B(b.data().data() + (shared_b ? 0 : t * k * n), k, n);
    MatMap C(out.data() + t * m * n, m, n);
    C.noalias() = A * B;
  }
  return make_op(std::move(so), std::move(out), {a, b},
                 [a, b, batch, m, k, n, shared_b](TensorImpl& r) mutable {
                   for (std::int64_t t = 0; t < batch; ++t) {
                     ConstMatMap G(r.grad.data() + t * m * n, m, n);
                     if (a.requires_grad()) {
                       ConstMatMap B(b.data().data() + (shared_b ? 0 : t * k * n), k, n);
                       MatMap dA(a.grad().data() + t * m * k, m, k);
                       dA.noalias() += G * B.transpose();
                     }
                     if (b.requires_grad()) {
                       ConstMatMap A(a.data().data() + t * m * k, m, k);
                       MatMap dB(b.grad().data() + (shared_b ? 0 : t * k * n), k, n);
                       dB.noalias() += A.transpose() * G;
                     }
                   }
                 });
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  if (x.ndim() != 3 || kernels.ndim() != 3 || bias.ndim() != 1)
    throw std::invalid_argument("conv1d expects x[B,L,C_in], kernels[C_out,C_in,k], bias[C_out]");
  int B = x.dim(0), L = x.dim(1), Cin = x.dim(2);
  int Cout = kernels.dim(0), KCin = kernels.dim(1), K = kernels.dim(2);
  if (KCin != Cin || bias.dim(0) != Cout)
    throw std::invalid_argument("conv1d: channel mismatch x" + shape_str(x.shape()) + " kernels" +
                                shape_str(kernels.shape()));
  if (K % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
  int pad = K / 2;
  std::vector<float> out(static_cast<std::int64_t>(B) * L * Cout);
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l)
      for (int co = 0; co < Cout; ++co) {
        float acc = bias.data()[co];
        for (int t = 0; t < K; ++t) {
          int pos = l + t - pad;
          if (pos < 0 || pos >= L) continue;
          for (int ci = 0; ci < Cin; ++ci)
            acc += x.data()[(static_cast<std::int64_t>(b) * L + pos) * Cin + ci] *
                   kernels.data()[(static_cast<std::int64_t>(co) * Cin + ci) * K + t];
        }
        out[(static_cast<std::int64_t>(b) * L + l) * Cout + co] = acc;
      }
  return make_op({B, L, Cout}, std::move(out), {x, kernels, bias},
                 [x, kernels, bias, B, L, Cin, Cout, K, pad](TensorImpl& r) mutable {
                   for (int b = 0; b < B; ++b)
                     for (int l = 0; l < L; ++l)
                       for (int co = 0; co < Cout; ++co) {
                         float g = r.grad[(static_cast<std::int64_t>(b) * L + l) * Cout + co];
                         if (bias.requires_grad()) bias.grad()[co] += g;
                         for (int t = 0; t < K; ++t) {
                           int pos = l + t - pad;
                           if (pos < 0 || pos >= L) continue;
                           for (int ci = 0; ci < Cin; ++ci) {
                             std::int64_t xi = (static_cast<std::int64_t>(b) * L + pos) * Cin + ci;
                             std::int64_t ki = (static_cast<std::int64_t>(co) * Cin + ci) * K + t;
                             if (x.requires_grad()) x.grad()[xi] += g * kernels.data()[ki];
                             if (kernels.requires_grad()) kernels.grad()[ki] += g * x.data()[xi];
                           }
                         }
                       }
                 });
}

Tensor softmax_lastdim(const Tensor& x) {
  int n = x.shape().back();
  std::int64_t rows = x.size() / n;
  std::vector<float> out(x.size());
  for (std::int64_t i = 0; i < rows; ++i) {
    const float* row = x.data().data() + i * n;
    float mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < n; ++j)
      out[i * n + j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
  }
  return make_op(x.shape(), std::move(out), {x}, [x, rows, n](TensorImpl& r) mutable {
    if (!x.requires_grad()) return;
    for (std::int64_t i = 0; i < rows; ++i) {
      const float* y = r.data.data() + i * n;
      const float* g = r.grad.data() + i * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += static_cast<double>(g[j]) * y[j];
      for (int j = 0; j < n; ++j)
        x.grad()[i * n + j] += y[j] * (g[j] - static_cast<float>(dot));
    }
  });
}

Tensor gumbel_sigmoid(const Tensor& logits, float temperature, Rng& rng) {
  if (temperature <= 0.0f) throw std::invalid_argument("gumbel_sigmoid: temperature must be > 0");
  std::int64_t n = logits.size();
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) {
    float noise = static_cast<float>(rng.gumbel() - rng.gumbel());
    out[i] = stable_sigmoid((logits.data()[i] + noise) / temperature);
  }
  return make_op(logits.shape(), std::move(out), {logits},
                 [logits, temperature, n](TensorImpl& r) mutable {
                   if (logits.requires_grad())
                     for (std::int64_t i = 0; i < n; ++i)
                       logits.grad()[i] += r.grad[i] * r.data[i] * (1.0f - r.data[i]) / temperature;
                 });
}

Tensor ste_threshold(const Tensor& p, const Tensor& theta) {
  if (theta.size() != 1) throw std::invalid_argument("ste_threshold: theta must be scalar");
  std::int64_t n = p.size();
  float th = theta.data()[0];
  std::vector<float> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = p.data()[i] > th ? 1.0f : 0.0f;
  return make_op(p.shape(), std::move(out), {p, theta}, [p, theta, n](TensorImpl& r) mutable {
    if (p.requires_grad())
      for (std::int64_t i = 0; i < n; ++i) p.grad()[i] += r.grad[i];
    if (theta.requires_grad()) {
      // Surrogate sigma((p - theta)/0.1) keeps theta learnable.
      float th = theta.data()[0];
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        float s = stable_sigmoid((p.data()[i] - th) / 0.1f);
        acc += static_cast<double>(r.grad[i]) * (-10.0) * s * (1.0f - s);
      }
      theta.grad()[0] += static_cast<float>(acc);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  int d = x.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw std::invalid_argument("layer_norm: parameter size mismatch");
  std::int64_t rows = x.size() / d;
  std::vector<float> out(x.size());
  std::vector<float> inv_std(rows), means(rows);
  for (std::int64_t i = 0; i < rows; ++i) {
    const float* row = x.data().data() + i * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    means[i] = static_cast<float>(mu);
    inv_std[i] = is;
    for (int j = 0; j < d; ++j)
      out[i * d + j] = (row[j] - static_cast<float>(mu)) * is * gamma.data()[j] + beta.data()[j];
  }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [x, gamma, beta, rows, d, means, inv_std](TensorImpl& r) mutable {
                   for (std::int64_t i = 0; i < rows; ++i) {
                     const float* g = r.grad.data() + i * d;
                     const float* row = x.data().data() + i * d;
                     double sum_gy = 0.0, sum_gyx = 0.0;
                     for (int j = 0; j < d; ++j) {
                       float xh = (row[j] - means[i]) * inv_std[i];
                       float gy = g[j] * gamma.data()[j];
                       sum_gy += gy;
                       sum_gyx += static_cast<double>(gy) * xh;
                       if (gamma.requires_grad()) gamma.grad()[j] += g[j] * xh;
                       if (beta.requires_grad()) beta.grad()[j] += g[j];
                     }
                     if (x.requires_grad()) {
                       for (int j = 0; j < d; ++j) {
                         float xh = (row[j] - means[i]) * inv_std[i];
                         float gy = g[j] * gamma.data()[j];
                         x.grad()[i * d + j] +=
                             inv_std[i] * (gy - static_cast<float>(sum_gy) / d -
                                           xh * static_cast<float>(sum_gyx) / d);
                       }
                     }
                   }
                 });
}

Tensor mean_pool(const Tensor& x, const std::vector<float>& mask) {
  if (x.ndim() != 3) throw std::invalid_argument("mean_pool expects [B,L,d]");
  int B = x.dim(0), L = x.dim(1), d = x.dim(2);
  if (static_cast<int>(mask.size()) != B * L)
    throw std::invalid_argument("mean_pool: mask length mismatch");
  std::vector<float> out(static_cast<std::int64_t>(B) * d, 0.0f);
  std::vector<float> counts(B, 0.0f);
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) counts[b] += mask[b * L + l];
    if (counts[b] <= 0.0f) counts[b] = 1.0f;
    for (int l = 0; l < L; ++l) {
      if (mask[b * L + l] == 0.0f) continue;
      for (int j = 0; j < d; ++j)
        out[static_cast<std::int64_t>(b) * d + j] +=
            x.data()[(static_cast<std::int64_t>(b) * L + l) * d + j];
    }
    for (int j = 0; j < d; ++j) out[static_cast<std::int64_t>(b) * d + j] /= counts[b];
  }
  return make_op({B, d}, std::move(out), {x}, [x, mask, B, L, d, counts](TensorImpl& r) mutable {
    if (!x.requires_grad()) return;
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) {
        if (mask[b * L + l] == 0.0f) continue;
        for (int j = 0; j < d; ++j)
          x.grad()[(static_cast<std::int64_t>(b) * L + l) * d + j] +=
              r.grad[static_cast<std::int64_t>(b) * d + j] / counts[b];
      }
  });
}

Tensor broadcast_over_queries(const Tensor& v, int len) {
  if (v.ndim() != 2) throw std::invalid_argument("broadcast_over_queries expects [B,L]");
  int B = v.dim(0), L = v.dim(1);
  (void)len;
  std::vector<float> out(static_cast<std::int64_t>(B) * L * L);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        out[(static_cast<std::int64_t>(b) * L + i) * L + j] = v.data()[b * L + j];
  return make_op({B, L, L}, std::move(out), {v}, [v, B, L](TensorImpl& r) mutable {
    if (!v.requires_grad()) return;
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j)
          v.grad()[b * L + j] += r.grad[(static_cast<std::int64_t>(b) * L + i) * L + j];
  });
}

Tensor outer_pair(const Tensor& h) {
  if (h.ndim() != 2) throw std::invalid_argument("outer_pair expects [B,L]");
  int B = h.dim(0), L = h.dim(1);
  std::vector<float> out(static_cast<std::int64_t>(B) * L * L);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        out[(static_cast<std::int64_t>(b) * L + i) * L + j] = h.data()[b * L + i] * h.data()[b * L + j];
  return make_op({B, L, L}, std::move(out), {h}, [h, B, L](TensorImpl& r) mutable {
    if (!h.requires_grad()) return;
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
          float g = r.grad[(static_cast<std::int64_t>(b) * L + i) * L + j];
          h.grad()[b * L + i] += g * h.data()[b * L + j];
          h.grad()[b * L + j] += g * h.data()[b * L + i];
        }
  });
}

Tensor broadcast_heads(const Tensor& x, int heads) {
  if (x.ndim() != 3) throw std::invalid_argument("broadcast_heads expects [B,L,L]");
  int B = x.dim(0), L = x.dim(1), L2 = x.dim(2);
  std::int64_t plane = static_cast<std::int64_t>(L) * L2;
  std::vector<float> out(static_cast<std::int64_t>(B) * heads * plane);
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h)
      std::copy_n(x.data().begin() + b * plane, plane,
                  out.begin() + (static_cast<std::int64_t>(b) * heads + h) * plane);
  return make_op({B, heads, L, L2}, std::move(out), {x},
                 [x, B, heads, plane](TensorImpl& r) mutable {
                   if (!x.requires_grad()) return;
                   for (int b = 0; b < B; ++b)
                     for (int h = 0; h < heads; ++h)
                       for (std::int64_t i = 0; i < plane; ++i)
                         x.grad()[b * plane + i] +=
                             r.grad[(static_cast<std::int64_t>(b) * heads + h) * plane + i];
                 });
}

Tensor row_scale(const Tensor& x, const Tensor& g) {
  if (g.ndim() != 1 || g.dim(0) != x.dim(0))
    throw std::invalid_argument("row_scale: g must be [B] matching x's batch");
  int B = x.dim(0);
  std::int64_t stride = x.size() / B;
  std::vector<float> out(x.size());
  for (int b = 0; b < B; ++b)
    for (std::int64_t i = 0; i < stride; ++i) out[b * stride + i] = x.data()[b * stride + i] * g.data()[b];
  return make_op(x.shape(), std::move(out), {x, g}, [x, g, B, stride](TensorImpl& r) mutable {
    for (int b = 0; b < B; ++b) {
      if (x.requires_grad())
        for (std::int64_t i = 0; i < stride; ++i)
          x.grad()[b * stride + i] += r.grad[b * stride + i] * g.data()[b];
      if (g.requires_grad()) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < stride; ++i)
          acc += static_cast<double>(r.grad[b * stride + i]) * x.data()[b * stride + i];
        g.grad()[b] += static_cast<float>(acc);
      }
    }
  });
}

Tensor bce_mean(const Tensor& p, const std::vector<float>& targets) {
  if (static_cast<std::int64_t>(targets.size()) != p.size())
    throw std::invalid_argument("bce_mean: target length mismatch " +
                                std::to_string(targets.size()) + " vs " + shape_str(p.shape()));
  const float lo = 1e-7f, hi = 1.0f - 1e-7f;
  std::int64_t n = p.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    float pc = std::min(std::max(p.data()[i], lo), hi);
    acc -= targets[i] * std::log(static_cast<double>(pc)) +
           (1.0 - targets[i]) * std::log(1.0 - static_cast<double>(pc));
  }
  acc /= static_cast<double>(n);
  return make_op({1}, {static_cast<float>(acc)}, {p}, [p, targets, n, lo, hi](TensorImpl& r) mutable {
    if (!p.requires_grad()) return;
    for (std::int64_t i = 0; i < n; ++i) {
      float pv = p.data()[i];
      if (pv <= lo || pv >= hi) continue;  // clamped region has zero slope
      p.grad()[i] += r.grad[0] * (pv - targets[i]) / (pv * (1.0f - pv)) / static_cast<float>(n);
    }
  });
}

Tensor cross_entropy_first(const Tensor& scores) {
  if (scores.ndim() != 2) throw std::invalid_argument("cross_entropy_first expects [B,K]");
  int B = scores.dim(0), K = scores.dim(1);
  double loss = 0.0;
  std::vector<float> probs(static_cast<std::int64_t>(B) * K);
  for (int b = 0; b < B; ++b) {
    const float* row = scores.data().data() + static_cast<std::int64_t>(b) * K;
    float mx = row[0];
    for (int j = 1; j < K; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < K; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < K; ++j)
      probs[static_cast<std::int64_t>(b) * K + j] =
          static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    loss += std::log(denom) + mx - row[0];
  }
  loss /= B;
  return make_op({1}, {static_cast<float>(loss)}, {scores},
                 [scores, probs, B, K](TensorImpl& r) mutable {
                   if (!scores.requires_grad()) return;
                   for (int b = 0; b < B; ++b)
                     for (int j = 0; j < K; ++j) {
                       float delta = probs[static_cast<std::int64_t>(b) * K + j] - (j == 0 ? 1.0f : 0.0f);
                       scores.grad()[static_cast<std::int64_t>(b) * K + j] += r.grad[0] * delta / B;
                     }
                 });
}

double finite_difference(const Tensor& param, std::int64_t index,
                         const std::function<double()>& eval, double h) {
  Tensor& mutable_param = const_cast<Tensor&>(param);
  float saved = mutable_param.data()[index];
  mutable_param.data()[index] = static_cast<float>(saved + h);
  double plus = eval();
  mutable_param.data()[index] = static_cast<float>(saved - h);
  double minus = eval();
  mutable_param.data()[index] = saved;
  return (plus - minus) / (2.0 * h);
}

}  // namespace boolattn
