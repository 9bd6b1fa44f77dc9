#pragma once

// Flat key=value run configuration: one file drives every CLI subcommand.
// Unknown keys are rejected, '#' lines are comments, and a single top-level
// seed feeds the model, the training harness and the generator.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fcmformer/errors.hpp"
#include "fcmformer/fcs.hpp"
#include "fcmformer/model.hpp"
#include "fcmformer/synth.hpp"
#include "fcmformer/training.hpp"

namespace fcmformer {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  std::string manifest;
  std::string out_dir = "out";
  std::uint64_t seed = 42;

  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse(in);
  }

  std::string resolved_text() const;
};

namespace detail {

inline std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + value + "'");
  }
}

inline double parse_f64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + value + "'");
  }
}

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> apply;
  std::function<std::string(const RunConfig&)> render;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto u64 = [](const char* name, auto member) {
      return ConfigKey{
          name,
          [name, member](RunConfig& c, const std::string& v) { member(c) = parse_u64(name, v); },
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
    };
    auto f64 = [](const char* name, auto member) {
      return ConfigKey{
          name,
          [name, member](RunConfig& c, const std::string& v) { member(c) = parse_f64(name, v); },
          [member](const RunConfig& c) {
            std::ostringstream os;
            os << member(const_cast<RunConfig&>(c));
            return os.str();
          }};
    };

    k.push_back({"seed",
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    k.push_back(u64("n_features", [](RunConfig& c) -> std::size_t& { return c.model.n_features; }));
    k.push_back(u64("dim", [](RunConfig& c) -> std::size_t& { return c.model.dim; }));
    k.push_back(u64("n_inducing", [](RunConfig& c) -> std::size_t& { return c.model.n_inducing; }));
    k.push_back(u64("n_heads", [](RunConfig& c) -> std::size_t& { return c.model.n_heads; }));
    k.push_back(u64("n_layers", [](RunConfig& c) -> std::size_t& { return c.model.n_layers; }));
    k.push_back(u64("n_classes", [](RunConfig& c) -> std::size_t& { return c.model.n_classes; }));
    k.push_back({"readout",
                 [](RunConfig& c, const std::string& v) {
                   const auto r = readout_from_name(v);
                   if (!r) {
                     throw ConfigError(
                         "config: readout expects class_token or cross_attention, got '" + v +
                         "'");
                   }
                   c.model.readout = *r;
                 },
                 [](const RunConfig& c) { return std::string(readout_name(c.model.readout)); }});
    k.push_back({"subsample_cap",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "none") {
                     c.model.subsample_cap = std::nullopt;
                   } else {
                     c.model.subsample_cap = parse_u64("subsample_cap", v);
                   }
                 },
                 [](const RunConfig& c) {
                   return c.model.subsample_cap ? std::to_string(*c.model.subsample_cap)
                                                : std::string("none");
                 }});

    k.push_back(u64("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }));
    k.push_back(u64("patience", [](RunConfig& c) -> std::size_t& { return c.train.patience; }));
    k.push_back(f64("lr_max", [](RunConfig& c) -> double& { return c.train.lr_max; }));
    k.push_back(f64("lr_min", [](RunConfig& c) -> double& { return c.train.lr_min; }));
    k.push_back(
        u64("anneal_period", [](RunConfig& c) -> std::size_t& { return c.train.anneal_period; }));
    k.push_back(f64("beta1", [](RunConfig& c) -> double& { return c.train.beta1; }));
    k.push_back(f64("beta2", [](RunConfig& c) -> double& { return c.train.beta2; }));
    k.push_back(f64("adam_eps", [](RunConfig& c) -> double& { return c.train.adam_eps; }));
    k.push_back(u64("train_size", [](RunConfig& c) -> std::size_t& { return c.train.train_size; }));
    k.push_back(u64("val_size", [](RunConfig& c) -> std::size_t& { return c.train.val_size; }));
    k.push_back(u64("test_size", [](RunConfig& c) -> std::size_t& { return c.train.test_size; }));
    k.push_back(u64("n_folds", [](RunConfig& c) -> std::size_t& { return c.train.n_folds; }));
    k.push_back(u64("jobs", [](RunConfig& c) -> std::size_t& { return c.train.jobs; }));

    k.push_back(u64("synth_samples_per_class",
                    [](RunConfig& c) -> std::size_t& { return c.synth.samples_per_class; }));
    k.push_back(
        u64("synth_tubes", [](RunConfig& c) -> std::size_t& { return c.synth.tubes_per_sample; }));
    k.push_back(
        u64("synth_events", [](RunConfig& c) -> std::size_t& { return c.synth.events_per_tube; }));
    k.push_back(f64("synth_blast_min", [](RunConfig& c) -> double& { return c.synth.blast_min; }));
    k.push_back(f64("synth_blast_max", [](RunConfig& c) -> double& { return c.synth.blast_max; }));
    k.push_back(f64("synth_noise", [](RunConfig& c) -> double& { return c.synth.noise_scale; }));
    k.push_back({"synth_datatype",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "F") {
                     c.synth.datatype = FcsDatatype::f32;
                   } else if (v == "D") {
                     c.synth.datatype = FcsDatatype::f64;
                   } else if (v == "I") {
                     c.synth.datatype = FcsDatatype::integer;
                   } else {
                     throw ConfigError("config: synth_datatype expects F, D or I, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) { return std::string(1, datatype_char(c.synth.datatype)); }});
    k.push_back({"synth_byte_order",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "little") {
                     c.synth.byte_order = FcsByteOrder::little;
                   } else if (v == "big") {
                     c.synth.byte_order = FcsByteOrder::big;
                   } else {
                     throw ConfigError("config: synth_byte_order expects little or big, got '" +
                                       v + "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.synth.byte_order == FcsByteOrder::little ? "little"
                                                                                 : "big");
                 }});
    k.push_back({"synth_int_bits",
                 [](RunConfig& c, const std::string& v) {
                   c.synth.int_bits = static_cast<unsigned>(parse_u64("synth_int_bits", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.synth.int_bits); }});
    k.push_back(
        f64("synth_value_scale", [](RunConfig& c) -> double& { return c.synth.value_scale; }));

    k.push_back({"manifest",
                 [](RunConfig& c, const std::string& v) { c.manifest = v; },
                 [](const RunConfig& c) { return c.manifest; }});
    k.push_back({"out_dir",
                 [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const RunConfig& c) { return c.out_dir; }});
    return k;
  }();
  return keys;
}

}  // namespace detail

inline RunConfig RunConfig::parse(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::strip(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                        stripped + "'");
    }
    const std::string key = detail::strip(stripped.substr(0, eq));
    const std::string value = detail::strip(stripped.substr(eq + 1));
    bool known = false;
    for (const auto& ck : detail::config_keys()) {
      if (ck.name == key) {
        ck.apply(cfg, value);
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  // the single top-level seed drives every seeded component
  cfg.model.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;
  return cfg;
}

inline std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& ck : detail::config_keys()) {
    os << ck.name << '=' << ck.render(*this) << '\n';
  }
  return os.str();
}

}  // namespace fcmformer
