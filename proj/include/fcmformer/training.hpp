#pragma once

// Supervised training: cross-entropy on logits, cosine-annealed learning
// rate, Adam, one optimizer step per sample (no batching), early stopping on
// validation accuracy, and the k-fold cross-validation harness with rotating
// disjoint test blocks.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fcmformer/cohort.hpp"
#include "fcmformer/errors.hpp"
#include "fcmformer/metrics.hpp"
#include "fcmformer/model.hpp"
#include "fcmformer/tensor.hpp"

namespace fcmformer {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t patience = 50;  // epochs without validation improvement
  double lr_max = 0.001;
  double lr_min = 0.0002;
  std::size_t anneal_period = 10;  // epochs from lr_max down to lr_min, then hold
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  std::size_t train_size = 660;
  std::size_t val_size = 100;
  std::size_t test_size = 200;
  std::size_t n_folds = 5;
  std::size_t jobs = 1;

  void validate() const {
    if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
    if (patience == 0) throw ConfigError("train config: patience must be >= 1");
    if (patience > epochs) throw ConfigError("train config: patience exceeds epochs");
    if (!(lr_min < lr_max)) throw ConfigError("train config: lr_min must be < lr_max");
    if (anneal_period == 0) throw ConfigError("train config: anneal_period must be >= 1");
    if (train_size == 0 || val_size == 0 || test_size == 0) {
      throw ConfigError("train config: split sizes must be positive");
    }
    if (n_folds == 0) throw ConfigError("train config: n_folds must be >= 1");
    if (jobs == 0) throw ConfigError("train config: jobs must be >= 1");
  }
};

// -ln softmax(logits)[label], in the log-sum-exp stable form. The gradient
// at the logits is softmax(logits) - onehot(label).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
  if (logits.rank() != 1) {
    throw ContractError("cross_entropy: expected rank-1 logits, got shape " +
                        shape_to_string(logits.shape()));
  }
  const std::size_t n = logits.shape()[0];
  if (label >= n) {
    throw ContractError("cross_entropy: label " + std::to_string(label) +
                        " out of range for " + std::to_string(n) + " classes");
  }
  const std::vector<T>& v = logits.values();
  const T mx = *std::max_element(v.begin(), v.end());
  T total = T(0);
  std::vector<T> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(v[i] - mx);
    total += probs[i];
  }
  for (T& p : probs) p /= total;
  const T loss = (mx + std::log(total)) - v[label];
  auto ln = logits.node();
  return detail::from_op<T>({1}, {loss}, {logits},
                            [ln, probs, label](const std::vector<T>& up) {
                              if (!ln->requires_grad) return;
                              T* dl = ln->ensure_grad();
                              for (std::size_t i = 0; i < probs.size(); ++i) {
                                const T onehot = i == label ? T(1) : T(0);
                                dl[i] += up[0] * (probs[i] - onehot);
                              }
                            });
}

// Cosine annealing from lr_max at epoch 0 down to lr_min at anneal_period,
// held at lr_min afterwards. Endpoints are exact.
inline double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch == 0) return cfg.lr_max;
  if (epoch >= cfg.anneal_period) return cfg.lr_min;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.anneal_period);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * t));
}

// Standard Adam with bias correction, reading gradients in place from the
// given parameter tensors.
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor<T>> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  void step(double lr) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i];
      const std::vector<T>& g = p.grad();  // throws if backward never ran
      if (g.size() != p.numel()) {
        throw ContractError("adam: gradient size mismatch for parameter " + std::to_string(i));
      }
      std::vector<T>& m = m_[i];
      std::vector<T>& v = v_[i];
      std::vector<T>& w = p.values();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double grad = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * grad;
        const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * grad * grad;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
      }
    }
  }

  std::size_t steps() const { return steps_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
};

// Tracks the best validation metric; ties keep the earlier epoch.
class EarlyStopTracker {
 public:
  explicit EarlyStopTracker(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw ConfigError("early stop: patience must be >= 1");
  }

  // Returns true when the metric strictly improves on the best so far.
  bool observe(double metric) {
    const std::size_t epoch = observed_++;
    if (!has_best_ || metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      has_best_ = true;
      return true;
    }
    return false;
  }

  bool should_stop() const {
    return has_best_ && observed_ - 1 - best_epoch_ >= patience_;
  }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t observed_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
  bool has_best_ = false;
};

struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

namespace detail {

// Largest-remainder allocation of `want` seats across class counts, with at
// least one seat per non-empty class.
inline std::vector<std::size_t> stratified_quota(const std::vector<std::size_t>& counts,
                                                 std::size_t want, const char* partition) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (want > total) {
    throw ConfigError(std::string("split: ") + partition + " wants " + std::to_string(want) +
                      " samples but only " + std::to_string(total) + " remain");
  }
  const std::size_t n = counts.size();
  std::vector<std::size_t> quota(n, 0);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const double exact =
        static_cast<double>(want) * static_cast<double>(counts[c]) / static_cast<double>(total);
    quota[c] = static_cast<std::size_t>(exact);
    assigned += quota[c];
    remainder.push_back({exact - static_cast<double>(quota[c]), c});
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < want; ++k) {
    ++quota[remainder[k % n].second];
    ++assigned;
  }
  // every class present in the pool must appear in the partition
  for (std::size_t c = 0; c < n; ++c) {
    if (counts[c] > 0 && quota[c] == 0) {
      std::size_t donor = n;
      for (std::size_t d = 0; d < n; ++d) {
        if (quota[d] >= 2 && (donor == n || quota[d] > quota[donor])) donor = d;
      }
      if (donor == n) {
        throw ConfigError(std::string("split: cannot stratify ") + partition +
                          ", too few seats for every class");
      }
      --quota[donor];
      ++quota[c];
    }
    if (quota[c] > counts[c]) {
      throw ConfigError(std::string("split: class ") + std::to_string(c) + " has " +
                        std::to_string(counts[c]) + " samples, needs " +
                        std::to_string(quota[c]) + " for " + partition);
    }
  }
  return quota;
}

}  // namespace detail

// Rotating disjoint test blocks over one seeded shuffle; remaining ids are
// split into train/val per fold by a seeded class-stratified draw.
inline std::vector<FoldSplit> make_folds(const std::vector<std::size_t>& labels,
                                         std::size_t n_classes, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = labels.size();
  if (cfg.test_size * cfg.n_folds > n) {
    throw ConfigError("split: insufficient samples for " + std::to_string(cfg.n_folds) +
                      " disjoint test blocks of " + std::to_string(cfg.test_size) + " (have " +
                      std::to_string(n) + ")");
  }
  if (cfg.train_size + cfg.val_size + cfg.test_size > n) {
    throw ConfigError("split: train+val+test = " +
                      std::to_string(cfg.train_size + cfg.val_size + cfg.test_size) +
                      " exceeds cohort size " + std::to_string(n));
  }
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed));
  std::shuffle(ids.begin(), ids.end(), rng);

  std::vector<FoldSplit> folds;
  for (std::size_t f = 0; f < cfg.n_folds; ++f) {
    FoldSplit split;
    split.fold_index = f;
    const std::size_t lo = f * cfg.test_size, hi = lo + cfg.test_size;
    split.test.assign(ids.begin() + lo, ids.begin() + hi);

    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= lo && i < hi) continue;
      const std::size_t lbl = labels[ids[i]];
      if (lbl >= n_classes) {
        throw ConfigError("split: label " + std::to_string(lbl) + " out of range");
      }
      by_class[lbl].push_back(ids[i]);
    }
    std::mt19937 fold_rng(static_cast<std::uint32_t>(cfg.seed + f));
    for (auto& group : by_class) std::shuffle(group.begin(), group.end(), fold_rng);

    std::vector<std::size_t> counts(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) counts[c] = by_class[c].size();
    const std::vector<std::size_t> val_quota =
        detail::stratified_quota(counts, cfg.val_size, "val");
    for (std::size_t c = 0; c < n_classes; ++c) counts[c] -= val_quota[c];
    const std::vector<std::size_t> train_quota =
        detail::stratified_quota(counts, cfg.train_size, "train");

    for (std::size_t c = 0; c < n_classes; ++c) {
      auto& group = by_class[c];
      split.val.insert(split.val.end(), group.begin(), group.begin() + val_quota[c]);
      split.train.insert(split.train.end(), group.begin() + val_quota[c],
                         group.begin() + val_quota[c] + train_quota[c]);
    }
    folds.push_back(std::move(split));
  }
  return folds;
}

struct FoldReport {
  std::size_t fold_index = 0;
  std::vector<double> train_loss;    // mean per epoch
  std::vector<double> val_accuracy;  // per epoch
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  EvalResult test;
};

template <typename T>
struct FoldOutcome {
  ModelParams<T> model;  // parameters from the best validation epoch
  FoldReport report;
};

namespace detail {

template <typename T>
std::vector<Tensor<T>> parameter_tensors(const ModelParams<T>& params) {
  std::vector<Tensor<T>> out;
  for (auto& np : params.named_parameters()) out.push_back(np.tensor);
  return out;
}

template <typename T>
EvalResult evaluate_split(const ModelParams<T>& params, const std::vector<EventMatrix>& samples,
                          const std::vector<std::size_t>& ids) {
  std::vector<std::size_t> preds, truth;
  std::vector<std::vector<double>> probs;
  for (std::size_t id : ids) {
    const Prediction<T> p = predict(params, samples[id]);
    preds.push_back(p.label);
    probs.emplace_back(p.probabilities.begin(), p.probabilities.end());
    truth.push_back(static_cast<std::size_t>(*samples[id].label));
  }
  return evaluate_predictions(preds, probs, truth, params.config.n_classes);
}

}  // namespace detail

// One fold: seeded shuffled sample order, one optimizer step per sample,
// per-epoch validation accuracy, best-checkpoint keeping and early stop.
template <typename T = float>
FoldOutcome<T> train_fold(const std::vector<EventMatrix>& samples, const FoldSplit& split,
                          const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  train_cfg.validate();
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw ConfigError("train_fold: empty split partition");
  }
  for (const auto& part : {&split.train, &split.val, &split.test}) {
    for (std::size_t id : *part) {
      if (id >= samples.size()) throw ConfigError("train_fold: split id out of range");
      if (!samples[id].label) {
        throw ConfigError("train_fold: sample '" + samples[id].sample_id + "' is unlabeled");
      }
    }
  }

  ModelConfig fold_model_cfg = model_cfg;
  fold_model_cfg.seed = model_cfg.seed + split.fold_index;
  ModelParams<T> params = ModelParams<T>::init(fold_model_cfg);
  AdamOptimizer<T> optimizer(detail::parameter_tensors(params), train_cfg.beta1,
                             train_cfg.beta2, train_cfg.adam_eps);
  std::mt19937 rng(static_cast<std::uint32_t>(train_cfg.seed + split.fold_index));
  EarlyStopTracker tracker(train_cfg.patience);

  FoldReport report;
  report.fold_index = split.fold_index;
  ModelParams<T> best = params.clone();
  std::vector<std::size_t> order = split.train;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_schedule(epoch, train_cfg);
    double loss_sum = 0.0;
    for (std::size_t id : order) {
      const EventMatrix& sample = samples[id];
      Tensor<T> loss =
          cross_entropy(forward(params, sample), static_cast<std::size_t>(*sample.label));
      params.zero_grad();
      loss.backward();
      optimizer.step(lr);
      loss_sum += static_cast<double>(loss.values()[0]);
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(order.size()));

    std::vector<std::size_t> preds, truth;
    for (std::size_t id : split.val) {
      preds.push_back(predict(params, samples[id]).label);
      truth.push_back(static_cast<std::size_t>(*samples[id].label));
    }
    const double val_acc = accuracy(preds, truth);
    report.val_accuracy.push_back(val_acc);
    if (tracker.observe(val_acc)) best = params.clone();
    if (tracker.should_stop()) break;
  }

  report.best_epoch = tracker.best_epoch();
  report.best_val_accuracy = tracker.best_metric();
  report.test = detail::evaluate_split(best, samples, split.test);
  return {std::move(best), std::move(report)};
}

template <typename T>
struct CvResult {
  std::vector<FoldReport> reports;
  std::vector<ModelParams<T>> models;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population
  double mean_auc = 0.0;
  double std_auc = 0.0;
};

// Full cross-validation run; folds are independent and may run on
// `cfg.jobs` threads with identical results.
template <typename T = float>
CvResult<T> run_cv(const std::vector<EventMatrix>& samples, const ModelConfig& model_cfg,
                   const TrainConfig& train_cfg) {
  std::vector<std::size_t> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw ConfigError("run_cv: sample '" + s.sample_id + "' is unlabeled");
    labels.push_back(static_cast<std::size_t>(*s.label));
  }
  const std::vector<FoldSplit> folds = make_folds(labels, model_cfg.n_classes, train_cfg);

  CvResult<T> result;
  result.reports.resize(folds.size());
  result.models.reserve(folds.size());
  std::vector<std::optional<ModelParams<T>>> models(folds.size());

  const std::size_t workers = std::min(train_cfg.jobs, folds.size());
  if (workers <= 1) {
    for (std::size_t f = 0; f < folds.size(); ++f) {
      FoldOutcome<T> outcome = train_fold<T>(samples, folds[f], model_cfg, train_cfg);
      result.reports[f] = std::move(outcome.report);
      models[f] = std::move(outcome.model);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
      while (true) {
        const std::size_t f = next.fetch_add(1);
        if (f >= folds.size()) return;
        try {
          FoldOutcome<T> outcome = train_fold<T>(samples, folds[f], model_cfg, train_cfg);
          result.reports[f] = std::move(outcome.report);
          models[f] = std::move(outcome.model);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  for (auto& m : models) result.models.push_back(std::move(*m));

  auto aggregate = [&](auto metric) {
    double mean = 0.0;
    for (const auto& r : result.reports) mean += metric(r);
    mean /= static_cast<double>(result.reports.size());
    double var = 0.0;
    for (const auto& r : result.reports) {
      const double d = metric(r) - mean;
      var += d * d;
    }
    var /= static_cast<double>(result.reports.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };
  std::tie(result.mean_accuracy, result.std_accuracy) =
      aggregate([](const FoldReport& r) { return r.test.accuracy; });
  std::tie(result.mean_auc, result.std_auc) =
      aggregate([](const FoldReport& r) { return r.test.roc_auc; });
  return result;
}

// ---- report files -----------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string class_tag(std::size_t c, std::size_t n_classes) {
  if (n_classes == kNumLineages) {
    switch (c) {
      case 0: return "ball";
      case 1: return "tall";
      case 2: return "aml";
      default: break;
    }
  }
  return "class" + std::to_string(c);
}

}  // namespace detail

// One row per fold: accuracy, ROC-AUC, and per-class precision/recall
// derived from the confusion matrix (0 when undefined).
inline void write_report_csv(std::ostream& out, const std::vector<FoldReport>& reports) {
  const std::size_t n_classes = reports.empty() ? kNumLineages : reports[0].test.confusion.size();
  out << "fold,best_epoch,test_accuracy,test_roc_auc";
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::string tag = detail::class_tag(c, n_classes);
    out << ",precision_" << tag << ",recall_" << tag;
  }
  out << '\n';
  for (const auto& r : reports) {
    out << r.fold_index << ',' << r.best_epoch << ','
        << detail::format_double(r.test.accuracy) << ','
        << detail::format_double(r.test.roc_auc);
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::size_t col_sum = 0, row_sum = 0;
      for (std::size_t k = 0; k < n_classes; ++k) {
        col_sum += r.test.confusion[k][c];
        row_sum += r.test.confusion[c][k];
      }
      const std::size_t tp = r.test.confusion[c][c];
      const double precision =
          col_sum == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col_sum);
      const double recall =
          row_sum == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row_sum);
      out << ',' << detail::format_double(precision) << ',' << detail::format_double(recall);
    }
    out << '\n';
  }
}

// Rows are truth classes, columns are predictions.
inline void write_confusion_csv(std::ostream& out, const FoldReport& report) {
  const std::size_t n_classes = report.test.confusion.size();
  auto name = [n_classes](std::size_t c) {
    return n_classes == kNumLineages ? std::string(lineage_name(static_cast<Lineage>(c)))
                                     : "class" + std::to_string(c);
  };
  out << "truth\\pred";
  for (std::size_t c = 0; c < n_classes; ++c) out << ',' << name(c);
  out << '\n';
  for (std::size_t r = 0; r < n_classes; ++r) {
    out << name(r);
    for (std::size_t c = 0; c < n_classes; ++c) out << ',' << report.test.confusion[r][c];
    out << '\n';
  }
}

}  // namespace fcmformer
