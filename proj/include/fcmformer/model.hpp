#pragma once

// The FCM-Former classifier: row-wise input projection, a learnable class
// token, a stack of induced set-attention blocks and a linear classifier
// read off the class-token row. A cross-attention readout variant pools the
// encoder output with the class token as a one-row query instead.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fcmformer/attention.hpp"
#include "fcmformer/cohort.hpp"
#include "fcmformer/errors.hpp"
#include "fcmformer/tensor.hpp"

namespace fcmformer {

enum class Readout { class_token, cross_attention };

inline const char* readout_name(Readout r) {
  return r == Readout::class_token ? "class_token" : "cross_attention";
}

inline std::optional<Readout> readout_from_name(std::string_view name) {
  if (name == "class_token") return Readout::class_token;
  if (name == "cross_attention") return Readout::cross_attention;
  return std::nullopt;
}

struct ModelConfig {
  std::size_t n_features = 22;
  std::size_t dim = 32;         // encoder width
  std::size_t n_inducing = 16;  // inducing points per block
  std::size_t n_heads = 4;
  std::size_t n_layers = 3;
  std::size_t n_classes = 3;
  Readout readout = Readout::class_token;
  // Forward passes draw this many events (uniform, without replacement,
  // seeded) when a sample exceeds it; nullopt disables subsampling.
  std::optional<std::size_t> subsample_cap = 100000;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_features == 0 || dim == 0 || n_inducing == 0 || n_heads == 0 || n_layers == 0) {
      throw ConfigError("model config: all extents must be positive");
    }
    if (n_classes < 2) {
      throw ConfigError("model config: n_classes must be >= 2, got " +
                        std::to_string(n_classes));
    }
    if (dim % n_heads != 0) {
      throw ConfigError("model config: dim " + std::to_string(dim) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (subsample_cap && *subsample_cap == 0) {
      throw ConfigError("model config: subsample_cap must be positive or unset");
    }
  }
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;  // handle sharing the parameter's storage
};

template <typename T = float>
struct ModelParams {
  ModelConfig config;
  Tensor<T> input_weight;      // n_features x dim
  Tensor<T> input_bias;        // dim
  Tensor<T> class_token;       // dim
  std::vector<StabParams<T>> layers;
  Tensor<T> classifier_weight;  // dim x n_classes
  Tensor<T> classifier_bias;    // n_classes
  std::optional<MultiheadParams<T>> readout_attention;

  // Draws every tensor from a single seeded generator in ledger order, so a
  // fixed (config, seed) pair always yields identical parameters.
  static ModelParams init(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed));
    p.input_weight = fan_balanced_init<T>(cfg.n_features, cfg.dim, rng);
    p.input_bias = Tensor<T>::zeros({cfg.dim}, true);
    p.class_token = normal_init<T>({cfg.dim}, T(1) / std::sqrt(T(cfg.dim)), rng);
    p.layers.reserve(cfg.n_layers);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
      p.layers.push_back(StabParams<T>::init(cfg.dim, cfg.n_heads, cfg.n_inducing, rng));
    }
    p.classifier_weight = fan_balanced_init<T>(cfg.dim, cfg.n_classes, rng);
    p.classifier_bias = Tensor<T>::zeros({cfg.n_classes}, true);
    if (cfg.readout == Readout::cross_attention) {
      p.readout_attention = MultiheadParams<T>::init(cfg.dim, cfg.n_heads, rng);
    }
    return p;
  }

  // Canonical parameter order; checkpoints and the ledger follow it.
  std::vector<NamedParam<T>> named_parameters() const {
    std::vector<NamedParam<T>> out;
    out.push_back({"input_proj.weight", input_weight});
    out.push_back({"input_proj.bias", input_bias});
    out.push_back({"class_token", class_token});
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = "layers." + std::to_string(i) + ".";
      out.push_back({base + "inducing", layers[i].inducing});
      const char* halves[2] = {"inner.", "outer."};
      const MsabParams<T>* blocks[2] = {&layers[i].inner, &layers[i].outer};
      for (int b = 0; b < 2; ++b) {
        const std::string mb = base + halves[b];
        out.push_back({mb + "w_q", blocks[b]->mh.w_q});
        out.push_back({mb + "w_k", blocks[b]->mh.w_k});
        out.push_back({mb + "w_v", blocks[b]->mh.w_v});
        out.push_back({mb + "w_o", blocks[b]->mh.w_o});
        out.push_back({mb + "ln1_gain", blocks[b]->ln1_gain});
        out.push_back({mb + "ln1_bias", blocks[b]->ln1_bias});
        out.push_back({mb + "ln2_gain", blocks[b]->ln2_gain});
        out.push_back({mb + "ln2_bias", blocks[b]->ln2_bias});
        out.push_back({mb + "rff.weight", blocks[b]->rff_weight});
        out.push_back({mb + "rff.bias", blocks[b]->rff_bias});
      }
    }
    out.push_back({"classifier.weight", classifier_weight});
    out.push_back({"classifier.bias", classifier_bias});
    if (readout_attention) {
      out.push_back({"readout_attention.w_q", readout_attention->w_q});
      out.push_back({"readout_attention.w_k", readout_attention->w_k});
      out.push_back({"readout_attention.w_v", readout_attention->w_v});
      out.push_back({"readout_attention.w_o", readout_attention->w_o});
    }
    return out;
  }

  void zero_grad() const {
    for (auto& np : named_parameters()) {
      Tensor<T> t = np.tensor;
      t.zero_grad();
    }
  }

  // Deep copy with fresh storage, detached from any recorded graph.
  ModelParams clone() const {
    ModelParams out = *this;
    auto deep = [](Tensor<T>& t) { t = Tensor<T>(t.shape(), t.values(), t.requires_grad()); };
    deep(out.input_weight);
    deep(out.input_bias);
    deep(out.class_token);
    for (auto& layer : out.layers) {
      deep(layer.inducing);
      for (MsabParams<T>* b : {&layer.inner, &layer.outer}) {
        deep(b->mh.w_q);
        deep(b->mh.w_k);
        deep(b->mh.w_v);
        deep(b->mh.w_o);
        deep(b->ln1_gain);
        deep(b->ln1_bias);
        deep(b->ln2_gain);
        deep(b->ln2_bias);
        deep(b->rff_weight);
        deep(b->rff_bias);
      }
    }
    deep(out.classifier_weight);
    deep(out.classifier_bias);
    if (out.readout_attention) {
      deep(out.readout_attention->w_q);
      deep(out.readout_attention->w_k);
      deep(out.readout_attention->w_v);
      deep(out.readout_attention->w_o);
    }
    return out;
  }
};

struct LedgerEntry {
  std::string name;
  Shape shape;
  std::size_t count = 0;
};

struct ParameterLedger {
  std::vector<LedgerEntry> entries;
  std::size_t total = 0;
};

// Itemized learnable-scalar count, a pure function of the configuration.
// Entry order matches ModelParams::named_parameters().
inline ParameterLedger parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  ParameterLedger ledger;
  auto add = [&ledger](const std::string& name, Shape shape) {
    const std::size_t count = shape_numel(shape);
    ledger.entries.push_back({name, std::move(shape), count});
    ledger.total += count;
  };
  add("input_proj.weight", {cfg.n_features, cfg.dim});
  add("input_proj.bias", {cfg.dim});
  add("class_token", {cfg.dim});
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string base = "layers." + std::to_string(i) + ".";
    add(base + "inducing", {cfg.n_inducing, cfg.dim});
    for (const char* half : {"inner.", "outer."}) {
      const std::string mb = base + half;
      add(mb + "w_q", {cfg.dim, cfg.dim});
      add(mb + "w_k", {cfg.dim, cfg.dim});
      add(mb + "w_v", {cfg.dim, cfg.dim});
      add(mb + "w_o", {cfg.dim, cfg.dim});
      add(mb + "ln1_gain", {cfg.dim});
      add(mb + "ln1_bias", {cfg.dim});
      add(mb + "ln2_gain", {cfg.dim});
      add(mb + "ln2_bias", {cfg.dim});
      add(mb + "rff.weight", {cfg.dim, cfg.dim});
      add(mb + "rff.bias", {cfg.dim});
    }
  }
  add("classifier.weight", {cfg.dim, cfg.n_classes});
  add("classifier.bias", {cfg.n_classes});
  if (cfg.readout == Readout::cross_attention) {
    add("readout_attention.w_q", {cfg.dim, cfg.dim});
    add("readout_attention.w_k", {cfg.dim, cfg.dim});
    add("readout_attention.w_v", {cfg.dim, cfg.dim});
    add("readout_attention.w_o", {cfg.dim, cfg.dim});
  }
  return ledger;
}

namespace detail {

// Uniform draw of `cap` event rows without replacement, seeded by the model
// config; selection order preserves the original row order.
template <typename T>
Tensor<T> events_tensor(const ModelConfig& cfg, const EventMatrix& sample) {
  const std::size_t n = sample.n_rows();
  const std::size_t f = sample.n_cols;
  if (!cfg.subsample_cap || n <= *cfg.subsample_cap) {
    std::vector<T> values(sample.data.begin(), sample.data.end());
    return Tensor<T>({n, f}, std::move(values));
  }
  const std::size_t cap = *cfg.subsample_cap;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(cap);
  std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed));
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), cap, rng);
  std::vector<T> values(cap * f);
  for (std::size_t i = 0; i < cap; ++i) {
    const float* src = sample.data.data() + chosen[i] * f;
    for (std::size_t j = 0; j < f; ++j) values[i * f + j] = static_cast<T>(src[j]);
  }
  return Tensor<T>({cap, f}, std::move(values));
}

}  // namespace detail

// Forward pass over a prepared event tensor (rows = events).
template <typename T>
Tensor<T> forward_events(const ModelParams<T>& params, const Tensor<T>& events) {
  const ModelConfig& cfg = params.config;
  if (events.rank() != 2 || events.shape()[1] != cfg.n_features) {
    throw DimensionError("forward: expected events of width " +
                         std::to_string(cfg.n_features) + ", got " +
                         shape_to_string(events.shape()));
  }
  Tensor<T> projected = add_rows(matmul(events, params.input_weight), params.input_bias);
  Tensor<T> token_row = reshape(params.class_token, {1, cfg.dim});
  Tensor<T> logits_row;
  if (cfg.readout == Readout::class_token) {
    Tensor<T> z = concat_rows<T>({token_row, projected});
    for (const auto& layer : params.layers) z = stab(layer, z);
    logits_row = add_rows(matmul(slice_rows(z, 0, 1), params.classifier_weight),
                          params.classifier_bias);
  } else {
    Tensor<T> z = projected;
    for (const auto& layer : params.layers) z = stab(layer, z);
    Tensor<T> pooled = multihead(*params.readout_attention, token_row, z, z);
    logits_row = add_rows(matmul(pooled, params.classifier_weight), params.classifier_bias);
  }
  return reshape(logits_row, {cfg.n_classes});
}

template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const EventMatrix& sample) {
  if (sample.n_rows() == 0) {
    throw InputError("forward: sample '" + sample.sample_id + "' holds no events");
  }
  if (sample.n_cols != params.config.n_features) {
    throw DimensionError("forward: sample width " + std::to_string(sample.n_cols) +
                         " does not match model n_features " +
                         std::to_string(params.config.n_features));
  }
  return forward_events(params, detail::events_tensor<T>(params.config, sample));
}

template <typename T>
std::vector<T> softmax_values(const std::vector<T>& logits) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> probs(logits.size());
  T total = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    total += probs[i];
  }
  for (T& p : probs) p /= total;
  return probs;
}

template <typename T>
struct Prediction {
  std::size_t label = 0;  // argmax; ties resolve to the lowest class index
  std::vector<T> probabilities;
};

template <typename T>
Prediction<T> predict(const ModelParams<T>& params, const EventMatrix& sample) {
  NoGradGuard no_grad;
  Tensor<T> logits = forward(params, sample);
  Prediction<T> out;
  out.probabilities = softmax_values(logits.values());
  out.label = 0;
  for (std::size_t i = 1; i < out.probabilities.size(); ++i) {
    if (out.probabilities[i] > out.probabilities[out.label]) out.label = i;
  }
  return out;
}

}  // namespace fcmformer
