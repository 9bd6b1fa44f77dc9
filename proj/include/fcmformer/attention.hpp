#pragma once

// Set-Transformer building blocks: scaled dot-product attention, multi-head
// attention over learned projections, the residual multihead block (msab)
// and the induced-point block (stab) that keeps attention cost linear in
// the set size.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "fcmformer/errors.hpp"
#include "fcmformer/tensor.hpp"

namespace fcmformer {

inline constexpr double kLayerNormEps = 1e-5;

// Scaled dot-product attention. The scaling constant is the key width of
// the tensors actually passed in, so per-head calls scale by the head width.
template <typename T>
Tensor<T> attn(const Tensor<T>& queries, const Tensor<T>& keys, const Tensor<T>& values) {
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2 ||
      queries.shape()[1] != keys.shape()[1]) {
    throw DimensionError("attn: query/key width mismatch " +
                         shape_to_string(queries.shape()) + " vs " +
                         shape_to_string(keys.shape()));
  }
  if (keys.shape()[0] != values.shape()[0]) {
    throw DimensionError("attn: key/value row mismatch " + shape_to_string(keys.shape()) +
                         " vs " + shape_to_string(values.shape()));
  }
  const T inv_sqrt_width = T(1) / std::sqrt(T(keys.shape()[1]));
  Tensor<T> scores = scale(matmul(queries, transpose(keys)), inv_sqrt_width);
  return matmul(softmax_rows(scores), values);
}

template <typename T>
struct MultiheadParams {
  Tensor<T> w_q;  // width x width
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_o;
  std::size_t heads = 1;

  std::size_t width() const { return w_q.shape()[0]; }

  static MultiheadParams init(std::size_t width, std::size_t heads, std::mt19937& rng) {
    if (heads == 0 || width % heads != 0) {
      throw ConfigError("multihead: width " + std::to_string(width) +
                        " not divisible by heads " + std::to_string(heads));
    }
    MultiheadParams p;
    p.heads = heads;
    p.w_q = fan_balanced_init<T>(width, width, rng);
    p.w_k = fan_balanced_init<T>(width, width, rng);
    p.w_v = fan_balanced_init<T>(width, width, rng);
    p.w_o = fan_balanced_init<T>(width, width, rng);
    return p;
  }
};

// Projects queries/keys/values, runs one attention per head on column
// slices of the projections, concatenates head outputs and mixes them.
template <typename T>
Tensor<T> multihead(const MultiheadParams<T>& p, const Tensor<T>& queries,
                    const Tensor<T>& keys, const Tensor<T>& values) {
  const std::size_t width = p.width();
  if (p.heads == 0 || width % p.heads != 0) {
    throw ConfigError("multihead: width " + std::to_string(width) +
                      " not divisible by heads " + std::to_string(p.heads));
  }
  if (queries.rank() != 2 || queries.shape()[1] != width ||
      keys.rank() != 2 || keys.shape()[1] != width ||
      values.rank() != 2 || values.shape()[1] != width) {
    throw DimensionError("multihead: inputs must have width " + std::to_string(width) +
                         ", got " + shape_to_string(queries.shape()) + ", " +
                         shape_to_string(keys.shape()) + ", " +
                         shape_to_string(values.shape()));
  }
  Tensor<T> proj_q = matmul(queries, p.w_q);
  Tensor<T> proj_k = matmul(keys, p.w_k);
  Tensor<T> proj_v = matmul(values, p.w_v);
  const std::size_t head_width = width / p.heads;
  std::vector<Tensor<T>> head_outputs;
  head_outputs.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t lo = h * head_width, hi = lo + head_width;
    head_outputs.push_back(attn(slice_cols(proj_q, lo, hi), slice_cols(proj_k, lo, hi),
                                slice_cols(proj_v, lo, hi)));
  }
  return matmul(concat_cols(head_outputs), p.w_o);
}

template <typename T>
struct MsabParams {
  MultiheadParams<T> mh;
  Tensor<T> ln1_gain;
  Tensor<T> ln1_bias;
  Tensor<T> ln2_gain;
  Tensor<T> ln2_bias;
  Tensor<T> rff_weight;  // width x width
  Tensor<T> rff_bias;    // width

  static MsabParams init(std::size_t width, std::size_t heads, std::mt19937& rng) {
    MsabParams p;
    p.mh = MultiheadParams<T>::init(width, heads, rng);
    p.ln1_gain = Tensor<T>::ones({width}, true);
    p.ln1_bias = Tensor<T>::zeros({width}, true);
    p.ln2_gain = Tensor<T>::ones({width}, true);
    p.ln2_bias = Tensor<T>::zeros({width}, true);
    p.rff_weight = fan_balanced_init<T>(width, width, rng);
    p.rff_bias = Tensor<T>::zeros({width}, true);
    return p;
  }
};

// Row-wise feedforward: one affine map followed by ReLU.
template <typename T>
Tensor<T> rff(const MsabParams<T>& p, const Tensor<T>& x) {
  return relu(add_rows(matmul(x, p.rff_weight), p.rff_bias));
}

// Residual multihead block: normalize(queries + multihead(queries, source,
// source)), then normalize(x + rff(x)). Output row count equals the query
// row count.
template <typename T>
Tensor<T> msab(const MsabParams<T>& p, const Tensor<T>& queries, const Tensor<T>& source) {
  const T eps = T(kLayerNormEps);
  Tensor<T> mixed = multihead(p.mh, queries, source, source);
  Tensor<T> x = layer_norm(add(queries, mixed), p.ln1_gain, p.ln1_bias, eps);
  return layer_norm(add(x, rff(p, x)), p.ln2_gain, p.ln2_bias, eps);
}

template <typename T>
struct StabParams {
  Tensor<T> inducing;  // n_inducing x width, learnable
  MsabParams<T> inner;
  MsabParams<T> outer;

  std::size_t width() const { return inducing.shape()[1]; }
  std::size_t n_inducing() const { return inducing.shape()[0]; }

  static StabParams init(std::size_t width, std::size_t heads, std::size_t n_inducing,
                         std::mt19937& rng) {
    StabParams p;
    p.inducing = normal_init<T>({n_inducing, width}, T(1) / std::sqrt(T(width)), rng);
    p.inner = MsabParams<T>::init(width, heads, rng);
    p.outer = MsabParams<T>::init(width, heads, rng);
    return p;
  }
};

// Induced set-attention block. The inducing points first attend to the set
// (n_inducing x width summary), then the set attends to the summary, so the
// cost is O(n * n_inducing) rather than O(n^2).
template <typename T>
Tensor<T> stab(const StabParams<T>& p, const Tensor<T>& set) {
  if (set.rank() != 2 || set.shape()[1] != p.width()) {
    throw DimensionError("stab: set width must be " + std::to_string(p.width()) +
                         ", got " + shape_to_string(set.shape()));
  }
  Tensor<T> summary = msab(p.inner, p.inducing, set);
  return msab(p.outer, set, summary);
}

}  // namespace fcmformer
