#pragma once

// Independent reference implementations used as test oracles: plain double
// loops over flat matrices, no shared code with the library's tensor or
// attention paths.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "fcmformer/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Mat random_mat(std::size_t r, std::size_t c, std::mt19937& rng, double lo = -1.0,
                      double hi = 1.0) {
  Mat m(r, c);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : m.v) x = dist(rng);
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

inline Mat softmax_rows(const Mat& a) {
  Mat out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, a.at(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      out.at(i, j) = std::exp(a.at(i, j) - mx);
      total += out.at(i, j);
    }
    for (std::size_t j = 0; j < a.cols; ++j) out.at(i, j) /= total;
  }
  return out;
}

// Two-pass mean/variance recomputation (population variance).
inline Mat layer_norm(const Mat& x, const std::vector<double>& gain,
                      const std::vector<double>& bias, double eps) {
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) {
      out.at(i, j) = (x.at(i, j) - mean) / std::sqrt(var + eps) * gain[j] + bias[j];
    }
  }
  return out;
}

inline Mat attn(const Mat& q, const Mat& k, const Mat& v) {
  Mat scores = matmul(q, transpose(k));
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols));
  for (double& s : scores.v) s *= scale;
  return matmul(softmax_rows(scores), v);
}

inline Mat slice_cols(const Mat& a, std::size_t lo, std::size_t hi) {
  Mat out(a.rows, hi - lo);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = lo; j < hi; ++j) out.at(i, j - lo) = a.at(i, j);
  return out;
}

struct MultiheadWeights {
  Mat w_q, w_k, w_v, w_o;
  std::size_t heads = 1;
};

// Materializes every head separately on projected column slices.
inline Mat multihead(const MultiheadWeights& w, const Mat& q, const Mat& k, const Mat& v) {
  const std::size_t d = w.w_q.cols;
  const std::size_t hw = d / w.heads;
  const Mat pq = matmul(q, w.w_q), pk = matmul(k, w.w_k), pv = matmul(v, w.w_v);
  Mat joined(q.rows, d);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const Mat head = attn(slice_cols(pq, h * hw, (h + 1) * hw),
                          slice_cols(pk, h * hw, (h + 1) * hw),
                          slice_cols(pv, h * hw, (h + 1) * hw));
    for (std::size_t i = 0; i < head.rows; ++i)
      for (std::size_t j = 0; j < hw; ++j) joined.at(i, h * hw + j) = head.at(i, j);
  }
  return matmul(joined, w.w_o);
}

struct MsabWeights {
  MultiheadWeights mh;
  std::vector<double> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Mat rff_weight;
  std::vector<double> rff_bias;
};

inline Mat msab(const MsabWeights& w, const Mat& queries, const Mat& source, double eps) {
  Mat mixed = multihead(w.mh, queries, source, source);
  for (std::size_t i = 0; i < mixed.rows; ++i)
    for (std::size_t j = 0; j < mixed.cols; ++j) mixed.at(i, j) += queries.at(i, j);
  const Mat x = layer_norm(mixed, w.ln1_gain, w.ln1_bias, eps);
  Mat ff = matmul(x, w.rff_weight);
  for (std::size_t i = 0; i < ff.rows; ++i) {
    for (std::size_t j = 0; j < ff.cols; ++j) {
      ff.at(i, j) = std::max(0.0, ff.at(i, j) + w.rff_bias[j]) + x.at(i, j);
    }
  }
  return layer_norm(ff, w.ln2_gain, w.ln2_bias, eps);
}

struct StabWeights {
  Mat inducing;
  MsabWeights inner, outer;
};

inline Mat stab(const StabWeights& w, const Mat& set, double eps) {
  const Mat summary = msab(w.inner, w.inducing, set, eps);
  return msab(w.outer, set, summary, eps);
}

// O(n^2) pairwise AUC: P(score+ > score-) + 0.5 P(tie).
inline double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& truth) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] == 0) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j] != 0) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  for (int t : truth) n_neg += t == 0;
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---- autodiff-vs-finite-difference harness ---------------------------------

// Central differences in 64-bit against the recorded gradients of the loss
// built by `make_loss` (which must close over the given leaf tensors).
template <typename MakeLoss>
double max_relative_gradient_error(const std::vector<fcmformer::Tensor<double>>& leaves,
                                   MakeLoss make_loss, double step = 1e-5) {
  fcmformer::Tensor<double> loss = make_loss();
  for (auto leaf : leaves) leaf.zero_grad();
  loss.backward();
  std::vector<std::vector<double>> grads;
  for (const auto& leaf : leaves) grads.push_back(leaf.grad());

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    fcmformer::Tensor<double> leaf = leaves[li];
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double original = leaf.values()[i];
      leaf.values()[i] = original + step;
      const double up = make_loss().values()[0];
      leaf.values()[i] = original - step;
      const double down = make_loss().values()[0];
      leaf.values()[i] = original;
      const double fd = (up - down) / (2.0 * step);
      const double ad = grads[li][i];
      const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-8});
      worst = std::max(worst, std::fabs(fd - ad) / denom);
    }
  }
  return worst;
}

}  // namespace oracle
