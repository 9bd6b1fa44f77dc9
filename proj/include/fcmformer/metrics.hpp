#pragma once

// Evaluation metrics: exact-match accuracy, rank-based binary ROC-AUC with
// midrank tie handling, macro one-vs-rest multiclass AUC and confusion
// matrices.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "fcmformer/errors.hpp"

namespace fcmformer {

inline double accuracy(const std::vector<std::size_t>& predictions,
                       const std::vector<std::size_t>& truth) {
  if (predictions.size() != truth.size()) {
    throw ContractError("accuracy: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(truth.size()) + " labels");
  }
  if (predictions.empty()) {
    throw ContractError("accuracy: empty input");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

// Mann-Whitney formulation: AUC = P(score+ > score-) + 0.5 P(tie), computed
// from midranks. Exact for rational rank sums, and invariant under any
// strictly increasing transform of the scores.
inline double binary_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  if (scores.size() != truth.size()) {
    throw ContractError("binary_auc: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(truth.size()) + " labels");
  }
  std::size_t n_pos = 0;
  for (int t : truth) n_pos += t != 0;
  const std::size_t n_neg = truth.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("binary_auc: undefined, truth holds a single class (" +
                      std::to_string(n_pos) + " positive / " + std::to_string(n_neg) +
                      " negative)");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based midrank of the tie run [i, j)
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] != 0) positive_rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// Unweighted mean of per-class one-vs-rest AUCs over each class's
// probability column. Every class must appear in the truth labels.
inline double macro_ovr_auc(const std::vector<std::vector<double>>& probabilities,
                            const std::vector<std::size_t>& truth, std::size_t n_classes) {
  if (probabilities.size() != truth.size()) {
    throw ContractError("macro_ovr_auc: " + std::to_string(probabilities.size()) +
                        " probability rows vs " + std::to_string(truth.size()) + " labels");
  }
  if (probabilities.empty()) throw ContractError("macro_ovr_auc: empty input");
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::size_t t : truth) {
    if (t >= n_classes) {
      throw ContractError("macro_ovr_auc: label " + std::to_string(t) + " out of range");
    }
    ++counts[t];
  }
  std::string absent;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) absent += (absent.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!absent.empty()) {
    throw MetricError("macro_ovr_auc: undefined, classes absent from truth: " + absent);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> scores(truth.size());
    std::vector<int> binary(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probabilities[i].at(c);
      binary[i] = truth[i] == c ? 1 : 0;
    }
    total += binary_auc(scores, binary);
  }
  return total / static_cast<double>(n_classes);
}

inline std::vector<double> per_class_ovr_auc(const std::vector<std::vector<double>>& probabilities,
                                             const std::vector<std::size_t>& truth,
                                             std::size_t n_classes) {
  std::vector<double> out(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> scores(truth.size());
    std::vector<int> binary(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probabilities[i].at(c);
      binary[i] = truth[i] == c ? 1 : 0;
    }
    out[c] = binary_auc(scores, binary);
  }
  return out;
}

// confusion[truth][predicted]
inline std::vector<std::vector<std::size_t>> confusion_matrix(
    const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truth,
    std::size_t n_classes) {
  if (predictions.size() != truth.size()) {
    throw ContractError("confusion_matrix: length mismatch");
  }
  std::vector<std::vector<std::size_t>> m(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (truth[i] >= n_classes || predictions[i] >= n_classes) {
      throw ContractError("confusion_matrix: label out of range at index " + std::to_string(i));
    }
    ++m[truth[i]][predictions[i]];
  }
  return m;
}

struct EvalResult {
  double accuracy = 0.0;
  double roc_auc = 0.0;  // macro one-vs-rest
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> per_class_auc;
};

inline EvalResult evaluate_predictions(const std::vector<std::size_t>& predictions,
                                       const std::vector<std::vector<double>>& probabilities,
                                       const std::vector<std::size_t>& truth,
                                       std::size_t n_classes) {
  EvalResult r;
  r.accuracy = accuracy(predictions, truth);
  r.roc_auc = macro_ovr_auc(probabilities, truth, n_classes);
  r.per_class_auc = per_class_ovr_auc(probabilities, truth, n_classes);
  r.confusion = confusion_matrix(predictions, truth, n_classes);
  return r;
}

}  // namespace fcmformer
