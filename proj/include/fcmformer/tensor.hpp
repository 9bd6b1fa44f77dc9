#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// The scalar type is a template parameter: float is the training/runtime
// default, double is used by the gradient-check suites.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fcmformer/errors.hpp"

namespace fcmformer {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << ")";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

namespace detail {

// Recording is on by default; NoGradGuard switches it off for pure
// evaluation (prediction, validation passes, timing runs).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates d(loss)/d(parent) given d(loss)/d(this node).
  std::function<void(const std::vector<T>&)> backprop;

  std::size_t numel() const { return data.size(); }

  T* ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T = float>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() : node_(std::make_shared<Node>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    check_shape(shape);
    node_->shape = std::move(shape);
    node_->data.assign(shape_numel(node_->shape), T(0));
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor: " + std::to_string(values.size()) +
                           " values do not fill shape " + shape_to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
  }

  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::size_t rows() const {
    expect_rank(2, "rows");
    return node_->shape[0];
  }
  std::size_t cols() const {
    expect_rank(2, "cols");
    return node_->shape[1];
  }

  std::vector<T>& values() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  T& at(std::size_t i) { return node_->data.at(i); }
  T at(std::size_t i) const { return node_->data.at(i); }
  T& at(std::size_t i, std::size_t j) {
    expect_rank(2, "at(i,j)");
    return node_->data[i * node_->shape[1] + j];
  }
  T at(std::size_t i, std::size_t j) const {
    expect_rank(2, "at(i,j)");
    return node_->data[i * node_->shape[1] + j];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (node_->grad.empty()) {
      throw ContractError("grad: no gradient present; run backward() first");
    }
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }
  void clear_grad() { node_->grad.clear(); }

  // Populates grad on every requires_grad tensor reachable from this scalar.
  void backward() const {
    if (numel() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_to_string(shape()));
    }
    // Post-order DFS gives a topological order (inputs before consumers);
    // nodes are then visited exactly once in reverse.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* parent = node->parents[next].get();
        ++next;
        if (seen.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    node_->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backprop && !node->grad.empty()) node->backprop(node->grad);
    }
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  void expect_rank(std::size_t r, const char* op) const {
    if (rank() != r) {
      throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                           " tensor, got shape " + shape_to_string(shape()));
    }
  }
  static void check_shape(const Shape& s) {
    for (std::size_t e : s) {
      if (e == 0) throw DimensionError("tensor: zero extent in shape " + shape_to_string(s));
    }
  }

  std::shared_ptr<Node> node_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  loss.backward();
}

namespace detail {

template <typename T>
Tensor<T> from_op(Shape shape, std::vector<T> data,
                  std::initializer_list<Tensor<T>> inputs,
                  std::function<void(const std::vector<T>&)> backprop) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool track = false;
  for (const auto& in : inputs) track = track || in.requires_grad();
  if (track && grad_mode()) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backprop = std::move(backprop);
  }
  return Tensor<T>(std::move(node));
}

// c[p x r] += a[p x q] . b[q x r]
template <typename T>
void matmul_accumulate(const T* a, const T* b, T* c, std::size_t p, std::size_t q,
                       std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const T* arow = a + i * q;
    T* crow = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const T aik = arow[k];
      const T* brow = b + k * r;
      for (std::size_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

// da[p x q] += up[p x r] . b[q x r]^T
template <typename T>
void matmul_accumulate_bt(const T* up, const T* b, T* da, std::size_t p, std::size_t q,
                          std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const T* uprow = up + i * r;
    T* darow = da + i * q;
    for (std::size_t k = 0; k < q; ++k) {
      const T* brow = b + k * r;
      T acc = T(0);
      for (std::size_t j = 0; j < r; ++j) acc += uprow[j] * brow[j];
      darow[k] += acc;
    }
  }
}

// db[q x r] += a[p x q]^T . up[p x r]
template <typename T>
void matmul_accumulate_at(const T* a, const T* up, T* db, std::size_t p, std::size_t q,
                          std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const T* arow = a + i * q;
    const T* uprow = up + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const T aik = arow[k];
      T* dbrow = db + k * r;
      for (std::size_t j = 0; j < r; ++j) dbrow[j] += aik * uprow[j];
    }
  }
}

}  // namespace detail

// ---- structural / elementwise primitives ----------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
  }
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[1];
  std::vector<T> out(p * r, T(0));
  detail::matmul_accumulate(a.values().data(), b.values().data(), out.data(), p, q, r);
  auto an = a.node();
  auto bn = b.node();
  return detail::from_op<T>(
      {p, r}, std::move(out), {a, b}, [an, bn, p, q, r](const std::vector<T>& up) {
        if (an->requires_grad) {
          detail::matmul_accumulate_bt(up.data(), bn->data.data(), an->ensure_grad(), p, q, r);
        }
        if (bn->requires_grad) {
          detail::matmul_accumulate_at(an->data.data(), up.data(), bn->ensure_grad(), p, q, r);
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) {
    throw DimensionError("transpose: expected rank-2 tensor, got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t p = x.shape()[0], q = x.shape()[1];
  std::vector<T> out(p * q);
  const T* in = x.values().data();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out[j * p + i] = in[i * q + j];
  auto xn = x.node();
  return detail::from_op<T>({q, p}, std::move(out), {x}, [xn, p, q](const std::vector<T>& up) {
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) dx[i * q + j] += up[j * p + i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::from_op<T>(a.shape(), std::move(out), {a, b},
                            [an, bn](const std::vector<T>& up) {
                              if (an->requires_grad) {
                                T* da = an->ensure_grad();
                                for (std::size_t i = 0; i < up.size(); ++i) da[i] += up[i];
                              }
                              if (bn->requires_grad) {
                                T* db = bn->ensure_grad();
                                for (std::size_t i = 0; i < up.size(); ++i) db[i] += up[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::from_op<T>(a.shape(), std::move(out), {a, b},
                            [an, bn](const std::vector<T>& up) {
                              if (an->requires_grad) {
                                T* da = an->ensure_grad();
                                for (std::size_t i = 0; i < up.size(); ++i)
                                  da[i] += up[i] * bn->data[i];
                              }
                              if (bn->requires_grad) {
                                T* db = bn->ensure_grad();
                                for (std::size_t i = 0; i < up.size(); ++i)
                                  db[i] += up[i] * an->data[i];
                              }
                            });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * factor;
  auto xn = x.node();
  return detail::from_op<T>(x.shape(), std::move(out), {x},
                            [xn, factor](const std::vector<T>& up) {
                              if (!xn->requires_grad) return;
                              T* dx = xn->ensure_grad();
                              for (std::size_t i = 0; i < up.size(); ++i)
                                dx[i] += up[i] * factor;
                            });
}

// Adds a length-d vector to every row of a p x d matrix.
template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() != 2 || v.rank() != 1 || x.shape()[1] != v.shape()[0]) {
    throw DimensionError("add_rows: shape mismatch " + shape_to_string(x.shape()) +
                         " vs " + shape_to_string(v.shape()));
  }
  const std::size_t p = x.shape()[0], d = x.shape()[1];
  std::vector<T> out(p * d);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.values()[i * d + j] + v.values()[j];
  auto xn = x.node();
  auto vn = v.node();
  return detail::from_op<T>({p, d}, std::move(out), {x, v},
                            [xn, vn, p, d](const std::vector<T>& up) {
                              if (xn->requires_grad) {
                                T* dx = xn->ensure_grad();
                                for (std::size_t i = 0; i < up.size(); ++i) dx[i] += up[i];
                              }
                              if (vn->requires_grad) {
                                T* dv = vn->ensure_grad();
                                for (std::size_t i = 0; i < p; ++i)
                                  for (std::size_t j = 0; j < d; ++j) dv[j] += up[i * d + j];
                              }
                            });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
  auto xn = x.node();
  return detail::from_op<T>(x.shape(), std::move(out), {x}, [xn](const std::vector<T>& up) {
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad();
    for (std::size_t i = 0; i < up.size(); ++i)
      if (xn->data[i] > T(0)) dx[i] += up[i];
  });
}

// Row-wise softmax with per-row max subtraction. Input must be finite.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) {
    throw DimensionError("softmax_rows: expected rank-2 tensor, got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t p = x.shape()[0], q = x.shape()[1];
  const T* in = x.values().data();
  std::vector<T> out(p * q);
  for (std::size_t i = 0; i < p; ++i) {
    const T* row = in + i * q;
    T mx = row[0];
    for (std::size_t j = 0; j < q; ++j) {
      if (!std::isfinite(row[j])) {
        throw NumericError("softmax_rows: non-finite input at row " + std::to_string(i));
      }
      mx = std::max(mx, row[j]);
    }
    T sum = T(0);
    T* orow = out.data() + i * q;
    for (std::size_t j = 0; j < q; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < q; ++j) orow[j] /= sum;
  }
  auto xn = x.node();
  Tensor<T> result = detail::from_op<T>({p, q}, std::move(out), {x}, nullptr);
  if (result.node()->requires_grad) {
    detail::TensorNode<T>* self = result.node().get();
    result.node()->backprop = [xn, self, p, q](const std::vector<T>& up) {
      if (!xn->requires_grad) return;
      T* dx = xn->ensure_grad();
      const T* y = self->data.data();
      for (std::size_t i = 0; i < p; ++i) {
        const T* yrow = y + i * q;
        const T* uprow = up.data() + i * q;
        T dot = T(0);
        for (std::size_t j = 0; j < q; ++j) dot += uprow[j] * yrow[j];
        T* dxrow = dx + i * q;
        for (std::size_t j = 0; j < q; ++j) dxrow[j] += yrow[j] * (uprow[j] - dot);
      }
    };
  }
  return result;
}

// Per-row normalization over the feature axis, population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.shape()[0] != x.shape()[1] || bias.shape()[0] != x.shape()[1]) {
    throw DimensionError("layer_norm: shape mismatch " + shape_to_string(x.shape()) +
                         " vs gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()));
  }
  const std::size_t p = x.shape()[0], d = x.shape()[1];
  const T* in = x.values().data();
  std::vector<T> out(p * d);
  for (std::size_t i = 0; i < p; ++i) {
    const T* row = in + i * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T c = row[j] - mean;
      var += c * c;
    }
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    T* orow = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j)
      orow[j] = (row[j] - mean) * inv * gain.values()[j] + bias.values()[j];
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return detail::from_op<T>(
      {p, d}, std::move(out), {x, gain, bias}, [xn, gn, bn, p, d, eps](const std::vector<T>& up) {
        const T* in = xn->data.data();
        std::vector<T> xhat(d);
        for (std::size_t i = 0; i < p; ++i) {
          const T* row = in + i * d;
          const T* uprow = up.data() + i * d;
          T mean = T(0);
          for (std::size_t j = 0; j < d; ++j) mean += row[j];
          mean /= T(d);
          T var = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
          }
          var /= T(d);
          const T inv = T(1) / std::sqrt(var + eps);
          for (std::size_t j = 0; j < d; ++j) xhat[j] = (row[j] - mean) * inv;
          if (gn->requires_grad) {
            T* dg = gn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j) dg[j] += uprow[j] * xhat[j];
          }
          if (bn->requires_grad) {
            T* db = bn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j) db[j] += uprow[j];
          }
          if (xn->requires_grad) {
            T m1 = T(0), m2 = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T gdy = uprow[j] * gn->data[j];
              m1 += gdy;
              m2 += gdy * xhat[j];
            }
            m1 /= T(d);
            m2 /= T(d);
            T* dx = xn->ensure_grad() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
              const T gdy = uprow[j] * gn->data[j];
              dx[j] += (gdy - m1 - xhat[j] * m2) * inv;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t p = parts.front().rows();
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != 2 || t.shape()[0] != p) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(t.shape()));
    }
    total += t.shape()[1];
  }
  std::vector<T> out(p * total);
  std::size_t col = 0;
  for (const auto& t : parts) {
    const std::size_t q = t.shape()[1];
    for (std::size_t i = 0; i < p; ++i)
      std::copy_n(t.values().data() + i * q, q, out.data() + i * total + col);
    col += q;
  }
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = {p, total};
  node->data = std::move(out);
  bool track = false;
  for (const auto& t : parts) track = track || t.requires_grad();
  if (track && detail::grad_mode()) {
    node->requires_grad = true;
    std::vector<std::shared_ptr<detail::TensorNode<T>>> srcs;
    for (const auto& t : parts) {
      node->parents.push_back(t.node());
      srcs.push_back(t.node());
    }
    node->backprop = [srcs, p, total](const std::vector<T>& up) {
      std::size_t col = 0;
      for (const auto& src : srcs) {
        const std::size_t q = src->shape[1];
        if (src->requires_grad) {
          T* dx = src->ensure_grad();
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) dx[i * q + j] += up[i * total + col + j];
        }
        col += q;
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t q = parts.front().cols();
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != 2 || t.shape()[1] != q) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(t.shape()));
    }
    total += t.shape()[0];
  }
  std::vector<T> out;
  out.reserve(total * q);
  for (const auto& t : parts) out.insert(out.end(), t.values().begin(), t.values().end());
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = {total, q};
  node->data = std::move(out);
  bool track = false;
  for (const auto& t : parts) track = track || t.requires_grad();
  if (track && detail::grad_mode()) {
    node->requires_grad = true;
    std::vector<std::shared_ptr<detail::TensorNode<T>>> srcs;
    for (const auto& t : parts) {
      node->parents.push_back(t.node());
      srcs.push_back(t.node());
    }
    node->backprop = [srcs, q](const std::vector<T>& up) {
      std::size_t row = 0;
      for (const auto& src : srcs) {
        const std::size_t p = src->shape[0];
        if (src->requires_grad) {
          T* dx = src->ensure_grad();
          for (std::size_t i = 0; i < p * q; ++i) dx[i] += up[row * q + i];
        }
        row += p;
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2 || begin >= end || end > x.shape()[0]) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " +
                         shape_to_string(x.shape()));
  }
  const std::size_t q = x.shape()[1];
  std::vector<T> out(x.values().begin() + begin * q, x.values().begin() + end * q);
  auto xn = x.node();
  return detail::from_op<T>({end - begin, q}, std::move(out), {x},
                            [xn, begin, q](const std::vector<T>& up) {
                              if (!xn->requires_grad) return;
                              T* dx = xn->ensure_grad();
                              for (std::size_t i = 0; i < up.size(); ++i)
                                dx[begin * q + i] += up[i];
                            });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2 || begin >= end || end > x.shape()[1]) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " +
                         shape_to_string(x.shape()));
  }
  const std::size_t p = x.shape()[0], q = x.shape()[1], w = end - begin;
  std::vector<T> out(p * w);
  for (std::size_t i = 0; i < p; ++i)
    std::copy_n(x.values().data() + i * q + begin, w, out.data() + i * w);
  auto xn = x.node();
  return detail::from_op<T>({p, w}, std::move(out), {x},
                            [xn, begin, p, q, w](const std::vector<T>& up) {
                              if (!xn->requires_grad) return;
                              T* dx = xn->ensure_grad();
                              for (std::size_t i = 0; i < p; ++i)
                                for (std::size_t j = 0; j < w; ++j)
                                  dx[i * q + begin + j] += up[i * w + j];
                            });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " does not hold " +
                         shape_to_string(shape));
  }
  auto xn = x.node();
  return detail::from_op<T>(std::move(shape), x.values(), {x},
                            [xn](const std::vector<T>& up) {
                              if (!xn->requires_grad) return;
                              T* dx = xn->ensure_grad();
                              for (std::size_t i = 0; i < up.size(); ++i) dx[i] += up[i];
                            });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = std::accumulate(x.values().begin(), x.values().end(), T(0));
  auto xn = x.node();
  return detail::from_op<T>({1}, {total}, {x}, [xn](const std::vector<T>& up) {
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad();
    for (std::size_t i = 0; i < xn->data.size(); ++i) dx[i] += up[0];
  });
}

// ---- initialization --------------------------------------------------------

template <typename T>
Tensor<T> uniform_init(Shape shape, T bound, std::mt19937& rng, bool requires_grad = true) {
  Tensor<T> t(std::move(shape), requires_grad);
  std::uniform_real_distribution<T> dist(-bound, bound);
  for (T& v : t.values()) v = dist(rng);
  return t;
}

// Symmetric fan-balanced init: uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> fan_balanced_init(std::size_t fan_in, std::size_t fan_out, std::mt19937& rng,
                            bool requires_grad = true) {
  const T bound = std::sqrt(T(6) / T(fan_in + fan_out));
  return uniform_init<T>({fan_in, fan_out}, bound, rng, requires_grad);
}

template <typename T>
Tensor<T> normal_init(Shape shape, T stddev, std::mt19937& rng, bool requires_grad = true) {
  Tensor<T> t(std::move(shape), requires_grad);
  std::normal_distribution<T> dist(T(0), stddev);
  for (T& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace fcmformer
