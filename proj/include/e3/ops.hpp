#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "e3/tensor.hpp"

namespace e3 {

using rng_t = std::mt19937_64;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw shape_error(what);
}

template <class T>
void require_same_shape(const basic_tensor<T>& a, const basic_tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
void require_rank(const basic_tensor<T>& a, std::size_t rank, const char* op) {
  require(a.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(a.shape()));
}

// Elementwise op y = f(x) with dy/dx = df(x, y).
template <class T, class F, class DF>
basic_tensor<T> unary(const basic_tensor<T>& a, F f, DF df) {
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [df](tensor_node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * df(in.value[i], self.value[i]);
    }
  });
}

// Treats a tensor as (outer, axis, inner) around `axis`.
inline void split_axis(const shape_t& shape, std::size_t axis, std::size_t& outer, std::size_t& len,
                       std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

/// [m,k] x [k,n] -> [m,n]
template <class T>
basic_tensor<T> matmul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(b.dim(0) == k, "matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                     shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return detail::make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](tensor_node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const T* G = self.grad.data();
    if (an.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T* brow = bn.value.data() + p * n;
          const T* grow = G + i * n;
          T acc = T(0);
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          an.grad[i * k + p] += acc;
        }
      }
    }
    if (bn.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = an.value[i * k + p];
          T* dst = bn.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
        }
      }
    }
  });
}

template <class T>
basic_tensor<T> transpose(const basic_tensor<T>& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return detail::make_result<T>({n, m}, std::move(out), {a}, [m, n](tensor_node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) in.grad[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------- elementwise

template <class T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](tensor_node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

template <class T>
basic_tensor<T> sub(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](tensor_node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x.requires_grad) x.grad[i] += self.grad[i];
      if (y.requires_grad) y.grad[i] -= self.grad[i];
    }
  });
}

/// Adds a bias vector (size n, or shape [1,n]) to every row of a [m,n] matrix,
/// or to a vector of size n.
template <class T>
basic_tensor<T> add_bias(const basic_tensor<T>& a, const basic_tensor<T>& bias) {
  const std::size_t n = a.cols();
  detail::require(bias.size() == n && a.rank() >= 1, "add_bias: shape mismatch " +
                                                          shape_str(a.shape()) + " vs " +
                                                          shape_str(bias.shape()));
  const std::size_t m = a.size() / n;
  std::vector<T> out(a.size());
  auto x = a.data();
  auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
  return detail::make_result<T>(a.shape(), std::move(out), {a, bias}, [m, n](tensor_node<T>& self) {
    auto& x = *self.inputs[0];
    auto& b = *self.inputs[1];
    if (x.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
    if (b.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) b.grad[j] += self.grad[i * n + j];
  });
}

template <class T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](tensor_node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x.requires_grad) x.grad[i] += self.grad[i] * y.value[i];
      if (y.requires_grad) y.grad[i] += self.grad[i] * x.value[i];
    }
  });
}

template <class T>
basic_tensor<T> scale(const basic_tensor<T>& a, T c) {
  return detail::unary(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <class T>
basic_tensor<T> add_scalar(const basic_tensor<T>& a, T c) {
  return detail::unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
basic_tensor<T> sigmoid(const basic_tensor<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
basic_tensor<T> tanh(const basic_tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
basic_tensor<T> relu(const basic_tensor<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); },
                       [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// tanh approximation
template <class T>
basic_tensor<T> gelu(const basic_tensor<T>& a) {
  constexpr T c = T(0.7978845608028654);
  constexpr T k = T(0.044715);
  return detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T u = c * (x + k * x * x * x);
        const T t = std::tanh(u);
        const T du = c * (T(1) + T(3) * k * x * x);
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
      });
}

template <class T>
basic_tensor<T> exp(const basic_tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
basic_tensor<T> log(const basic_tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// ---------------------------------------------------------------- shape ops

template <class T>
basic_tensor<T> reshape(const basic_tensor<T>& a, shape_t shape) {
  detail::require(shape_size(shape) == a.size(),
                  "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), a.values(), {a}, [](tensor_node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

/// Contiguous range [start, start+len) along `axis`.
template <class T>
basic_tensor<T> slice(const basic_tensor<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
  detail::require(axis < a.rank(), "slice: axis out of range for " + shape_str(a.shape()));
  detail::require(len > 0 && start + len <= a.dim(axis),
                  "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") outside " + shape_str(a.shape()));
  std::size_t outer, n, inner;
  detail::split_axis(a.shape(), axis, outer, n, inner);
  shape_t shape = a.shape();
  shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + (o * n + start) * inner, len * inner, out.data() + o * len * inner);
  return detail::make_result<T>(std::move(shape), std::move(out), {a},
                                [outer, n, inner, start, len](tensor_node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t i = 0; i < len * inner; ++i)
                                      in.grad[(o * n + start) * inner + i] +=
                                          self.grad[o * len * inner + i];
                                });
}

template <class T>
basic_tensor<T> slice_rows(const basic_tensor<T>& a, std::size_t start, std::size_t len) {
  return slice(a, 0, start, len);
}

template <class T>
basic_tensor<T> slice_cols(const basic_tensor<T>& a, std::size_t start, std::size_t len) {
  return slice(a, a.rank() - 1, start, len);
}

/// Concatenates along `axis`; all other dimensions must agree.
template <class T>
basic_tensor<T> concat(const std::vector<basic_tensor<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const auto& first = parts.front().shape();
  detail::require(axis < first.size(), "concat: axis out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t i = 0; ok && i < first.size(); ++i) ok = i == axis || p.dim(i) == first[i];
    detail::require(ok, "concat: shape mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    total += p.dim(axis);
  }
  std::size_t outer, n0, inner;
  detail::split_axis(first, axis, outer, n0, inner);
  shape_t shape = first;
  shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis);
    auto x = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.data() + o * len * inner, len * inner, out.data() + (o * total + off) * inner);
    offsets.push_back(off);
    off += len;
  }
  return detail::make_result<T>(
      std::move(shape), std::move(out), parts,
      [outer, total, inner, offsets, axis](tensor_node<T>& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
          auto& in = *self.inputs[k];
          if (!in.requires_grad) continue;
          const std::size_t len = in.shape[axis];
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < len * inner; ++i)
              in.grad[o * len * inner + i] += self.grad[(o * total + offsets[k]) * inner + i];
        }
      });
}

// ---------------------------------------------------------------- reductions

template <class T>
basic_tensor<T> sum(const basic_tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return detail::make_result<T>({}, {s}, {a}, [](tensor_node<T>& self) {
    auto& in = *self.inputs[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

template <class T>
basic_tensor<T> mean(const basic_tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

/// Mean over rows of a [m,n] matrix -> [1,n].
template <class T>
basic_tensor<T> mean_rows(const basic_tensor<T>& a) {
  detail::require_rank(a, 2, "mean_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.at(i, j);
  for (auto& v : out) v /= static_cast<T>(m);
  return detail::make_result<T>({1, n}, std::move(out), {a}, [m, n](tensor_node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) in.grad[i * n + j] += self.grad[j] / static_cast<T>(m);
  });
}

/// Element at flat `index`, as a scalar.
template <class T>
basic_tensor<T> pick(const basic_tensor<T>& a, std::size_t index) {
  detail::require(index < a.size(), "pick: index " + std::to_string(index) + " outside " +
                                        shape_str(a.shape()));
  return detail::make_result<T>({}, {a[index]}, {a}, [index](tensor_node<T>& self) {
    self.inputs[0]->grad[index] += self.grad[0];
  });
}

// ---------------------------------------------------------------- normalization

/// Softmax along `axis`.
template <class T>
basic_tensor<T> softmax(const basic_tensor<T>& a, std::size_t axis) {
  detail::require(axis < std::max<std::size_t>(a.rank(), 1),
                  "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
  std::size_t outer, n, inner;
  if (a.rank() == 0) {
    outer = inner = n = 1;
  } else {
    detail::split_axis(a.shape(), axis, outer, n, inner);
  }
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      auto idx = [&](std::size_t k) { return (o * n + k) * inner + in; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, x[idx(k)]);
      T z = T(0);
      for (std::size_t k = 0; k < n; ++k) z += (out[idx(k)] = std::exp(x[idx(k)] - mx));
      for (std::size_t k = 0; k < n; ++k) out[idx(k)] /= z;
    }
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [outer, n, inner](tensor_node<T>& self) {
    auto& in_node = *self.inputs[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        auto idx = [&](std::size_t k) { return (o * n + k) * inner + in; };
        T dot = T(0);
        for (std::size_t k = 0; k < n; ++k) dot += self.grad[idx(k)] * self.value[idx(k)];
        for (std::size_t k = 0; k < n; ++k)
          in_node.grad[idx(k)] += self.value[idx(k)] * (self.grad[idx(k)] - dot);
      }
    }
  });
}

template <class T>
basic_tensor<T> log_softmax(const basic_tensor<T>& a, std::size_t axis) {
  detail::require(axis < std::max<std::size_t>(a.rank(), 1),
                  "log_softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
  std::size_t outer, n, inner;
  if (a.rank() == 0) {
    outer = inner = n = 1;
  } else {
    detail::split_axis(a.shape(), axis, outer, n, inner);
  }
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      auto idx = [&](std::size_t k) { return (o * n + k) * inner + in; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, x[idx(k)]);
      T z = T(0);
      for (std::size_t k = 0; k < n; ++k) z += std::exp(x[idx(k)] - mx);
      const T lz = mx + std::log(z);
      for (std::size_t k = 0; k < n; ++k) out[idx(k)] = x[idx(k)] - lz;
    }
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [outer, n, inner](tensor_node<T>& self) {
    auto& in_node = *self.inputs[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        auto idx = [&](std::size_t k) { return (o * n + k) * inner + in; };
        T gsum = T(0);
        for (std::size_t k = 0; k < n; ++k) gsum += self.grad[idx(k)];
        for (std::size_t k = 0; k < n; ++k)
          in_node.grad[idx(k)] += self.grad[idx(k)] - std::exp(self.value[idx(k)]) * gsum;
      }
    }
  });
}

/// Layer normalization over the last axis with learned gain and shift.
template <class T>
basic_tensor<T> layer_norm(const basic_tensor<T>& a, const basic_tensor<T>& gain,
                           const basic_tensor<T>& shift, T eps = T(1e-5)) {
  const std::size_t n = a.cols();
  detail::require(gain.size() == n && shift.size() == n,
                  "layer_norm: parameter shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(gain.shape()));
  const std::size_t m = a.size() / n;
  std::vector<T> out(a.size());
  std::vector<T> xhat(a.size());
  std::vector<T> inv_std(m);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += x[i * n + j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (x[i * n + j] - mu) * (x[i * n + j] - mu);
    var /= static_cast<T>(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gain[j] + shift[j];
    }
  }
  return detail::make_result<T>(
      a.shape(), std::move(out), {a, gain, shift},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](tensor_node<T>& self) {
        auto& xn = *self.inputs[0];
        auto& gn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        for (std::size_t i = 0; i < m; ++i) {
          const T* g = self.grad.data() + i * n;
          const T* xh = xhat.data() + i * n;
          if (gn.requires_grad)
            for (std::size_t j = 0; j < n; ++j) gn.grad[j] += g[j] * xh[j];
          if (bn.requires_grad)
            for (std::size_t j = 0; j < n; ++j) bn.grad[j] += g[j];
          if (xn.requires_grad) {
            T mean_d = T(0), mean_dx = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[j] * gn.value[j];
              mean_d += d;
              mean_dx += d * xh[j];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[j] * gn.value[j];
              xn.grad[i * n + j] += inv_std[i] * (d - mean_d - xh[j] * mean_dx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------- lookup / noise

/// Rows of `table` ([V,d]) selected by `ids` -> [ids.size(), d].
template <class T>
basic_tensor<T> embedding(const basic_tensor<T>& table, std::span<const int> ids) {
  detail::require_rank(table, 2, "embedding");
  detail::require(!ids.empty(), "embedding: empty id list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<T> out(rows.size() * d);
  auto w = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab)
      throw shape_error("embedding: id " + std::to_string(rows[i]) + " outside table of " +
                        std::to_string(vocab) + " rows");
    std::copy_n(w.data() + rows[i] * d, d, out.data() + i * d);
  }
  const std::size_t n = rows.size();
  return detail::make_result<T>({n, d}, std::move(out), {table},
                                [rows = std::move(rows), d](tensor_node<T>& self) {
                                  auto& t = *self.inputs[0];
                                  for (std::size_t i = 0; i < rows.size(); ++i)
                                    for (std::size_t j = 0; j < d; ++j)
                                      t.grad[rows[i] * d + j] += self.grad[i * d + j];
                                });
}

/// Inverted dropout: zeroes each element with probability `rate` and scales
/// survivors by 1/(1-rate). Identity when `train` is false or rate is 0.
template <class T>
basic_tensor<T> dropout(const basic_tensor<T>& a, double rate, bool train, rng_t& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) return a;
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::bernoulli_distribution drop(rate);
  std::vector<T> mask(a.size());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = drop(rng) ? T(0) : keep_scale;
    out[i] = a[i] * mask[i];
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a},
                                [mask = std::move(mask)](tensor_node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < mask.size(); ++i)
                                    in.grad[i] += self.grad[i] * mask[i];
                                });
}

// ---------------------------------------------------------------- losses

/// Sum over elements of binary cross entropy between sigmoid(logits) and
/// targets in {0,1}, computed stably from logits.
template <class T>
basic_tensor<T> bce_with_logits(const basic_tensor<T>& logits, std::span<const T> targets) {
  detail::require(targets.size() == logits.size(),
                  "bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                      shape_str(logits.shape()));
  std::vector<T> y(targets.begin(), targets.end());
  T total = T(0);
  auto x = logits.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    // max(x,0) - x*y + log(1 + exp(-|x|))
    total += std::max(x[i], T(0)) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  return detail::make_result<T>({}, {total}, {logits}, [y = std::move(y)](tensor_node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < y.size(); ++i) {
      const T xv = in.value[i];
      const T s = xv >= T(0) ? T(1) / (T(1) + std::exp(-xv)) : std::exp(xv) / (T(1) + std::exp(xv));
      in.grad[i] += self.grad[0] * (s - y[i]);
    }
  });
}

/// -log softmax(logits)[target] for a flat logit vector.
template <class T>
basic_tensor<T> cross_entropy(const basic_tensor<T>& logits, std::size_t target) {
  auto flat = logits.rank() == 1 ? logits : reshape(logits, {logits.size()});
  return scale(pick(log_softmax(flat, 0), target), T(-1));
}

// ---------------------------------------------------------------- initialization

template <class T>
basic_tensor<T> uniform_parameter(shape_t shape, double bound, rng_t& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape_size(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return basic_tensor<T>::from_values(std::move(shape), std::move(v), true);
}

/// Glorot-style scaled uniform for a [fan_in, fan_out] weight.
template <class T>
basic_tensor<T> linear_weight(std::size_t fan_in, std::size_t fan_out, rng_t& rng) {
  return uniform_parameter<T>({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)),
                              rng);
}

}  // namespace e3
