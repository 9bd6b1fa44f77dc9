#pragma once

// Seeded synthetic FCM-like cohort generator. Each sample mixes one
// class-specific blast population with shared normal populations in the
// 22-feature panel space; per-tube panel subsets exercise the
// zero-imputation path. Signature levels are arbitrary documented defaults
// chosen to make the three-class task learnable, not clinical claims.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "fcmformer/cohort.hpp"
#include "fcmformer/errors.hpp"
#include "fcmformer/fcs.hpp"
#include "fcmformer/panel.hpp"

namespace fcmformer {

struct SynthConfig {
  std::size_t samples_per_class = 60;
  std::size_t tubes_per_sample = 3;
  std::size_t events_per_tube = 2000;
  double blast_min = 0.2;
  double blast_max = 0.9;
  double noise_scale = 1.0;
  // Feature names measured per tube; every subset must carry the four
  // scatter channels and CD45. Empty = built-in three-tube layout.
  std::vector<std::vector<std::string>> tube_panels;
  std::uint64_t seed = 7;
  // File emission; integer output is rounded and clamped at write AND
  // generation time so files round-trip bit-exactly. value_scale rescales
  // all generated values (use ~100 with integer output so rounding does not
  // flatten the signal).
  FcsDatatype datatype = FcsDatatype::f32;
  FcsByteOrder byte_order = FcsByteOrder::little;
  unsigned int_bits = 32;
  double value_scale = 1.0;

  std::vector<std::vector<std::string>> effective_panels() const {
    if (!tube_panels.empty()) return tube_panels;
    std::vector<std::vector<std::string>> panels = {
        {"FSC-A", "FSC-W", "FSC-H", "SSC-A", "CD45", "CD19", "CD10", "(i)CD79A",
         "(i)CD22", "CD34", "CD71"},
        {"FSC-A", "FSC-W", "FSC-H", "SSC-A", "CD45", "(i)CD3", "CD5", "CD7", "CD34",
         "CD71"},
        {"FSC-A", "FSC-W", "FSC-H", "SSC-A", "CD45", "CD13", "CD33", "CD117", "(i)MPO",
         "CD64", "CD65", "SY41", "LZ", "CD34"},
    };
    if (tubes_per_sample <= panels.size()) {
      panels.resize(tubes_per_sample);
    } else {
      while (panels.size() < tubes_per_sample) panels.push_back(panels.back());
    }
    return panels;
  }

  void validate(const PanelSchema& schema) const {
    if (samples_per_class == 0) throw ConfigError("synth: samples_per_class must be >= 1");
    if (tubes_per_sample == 0) throw ConfigError("synth: tubes_per_sample must be >= 1");
    if (events_per_tube < 10) throw ConfigError("synth: events_per_tube must be >= 10");
    if (!(blast_min > 0.0 && blast_max < 1.0 && blast_min <= blast_max)) {
      throw ConfigError("synth: blast fraction range must lie strictly inside (0,1)");
    }
    if (noise_scale < 0.0) throw ConfigError("synth: noise_scale must be >= 0");
    if (value_scale <= 0.0) throw ConfigError("synth: value_scale must be > 0");
    const auto panels = effective_panels();
    if (panels.size() != tubes_per_sample) {
      throw ConfigError("synth: " + std::to_string(panels.size()) + " tube panels for " +
                        std::to_string(tubes_per_sample) + " tubes");
    }
    for (const auto& panel : panels) {
      for (const char* required : {"FSC-A", "FSC-W", "FSC-H", "SSC-A", "CD45"}) {
        if (std::find(panel.begin(), panel.end(), required) == panel.end()) {
          throw ConfigError(std::string("synth: every tube panel must include ") + required);
        }
      }
      for (const auto& name : panel) {
        const auto idx = schema.lookup(normalize_marker(name));
        if (!idx) throw ConfigError("synth: unknown panel feature '" + name + "'");
      }
    }
  }
};

namespace detail {

struct SynthPopulation {
  std::array<double, 22> mean{};
  double sigma = 0.6;
};

inline std::size_t feature_index(const PanelSchema& schema, const std::string& name) {
  const auto idx = schema.lookup(normalize_marker(name));
  if (!idx) throw ConfigError("synth: unknown feature '" + name + "'");
  return *idx;
}

inline SynthPopulation make_population(const PanelSchema& schema, double fill,
                                       std::initializer_list<std::pair<const char*, double>> levels) {
  SynthPopulation p;
  p.mean.fill(fill);
  for (const auto& [name, value] : levels) p.mean[feature_index(schema, name)] = value;
  return p;
}

// Shared normal populations plus a per-class blast signature. Lineage-typical
// marker sets follow standard immunophenotype conventions on this panel.
inline const std::array<SynthPopulation, 5>& synth_populations() {
  static const std::array<SynthPopulation, 5> pops = [] {
    const PanelSchema& schema = PanelSchema::default_panel();
    std::array<SynthPopulation, 5> p;
    // 0: normal lymphocytes
    p[0] = make_population(schema, 0.3,
                           {{"FSC-A", 2.0}, {"FSC-W", 2.0}, {"FSC-H", 2.0}, {"SSC-A", 1.0},
                            {"CD45", 4.0}, {"CD71", 0.5}, {"CD19", 1.2}, {"(i)CD3", 2.2},
                            {"CD5", 2.0}, {"CD7", 2.0}, {"SY41", 1.0}, {"LZ", 0.5}});
    // 1: normal granulocytes/monocytes
    p[1] = make_population(schema, 0.2,
                           {{"FSC-A", 3.2}, {"FSC-W", 2.8}, {"FSC-H", 3.0}, {"SSC-A", 4.0},
                            {"CD45", 2.8}, {"CD10", 1.0}, {"CD13", 2.8}, {"CD33", 3.0},
                            {"SY41", 1.2}, {"LZ", 2.8}, {"(i)MPO", 2.2}, {"CD64", 2.0},
                            {"CD65", 2.5}});
    // blast base: dim CD45, high CD34/CD71
    const SynthPopulation blast_base =
        make_population(schema, 0.3,
                        {{"FSC-A", 2.6}, {"FSC-W", 2.3}, {"FSC-H", 2.5}, {"SSC-A", 1.6},
                         {"CD45", 1.6}, {"CD71", 2.6}, {"CD34", 3.2}});
    auto with = [&schema](SynthPopulation base,
                          std::initializer_list<std::pair<const char*, double>> levels) {
      for (const auto& [name, value] : levels) base.mean[feature_index(schema, name)] = value;
      return base;
    };
    // 2: B-ALL blasts
    p[2] = with(blast_base, {{"CD19", 4.0}, {"CD10", 3.8}, {"(i)CD79A", 3.4}, {"(i)CD22", 3.0}});
    // 3: T-ALL blasts
    p[3] = with(blast_base, {{"(i)CD3", 3.8}, {"CD5", 3.2}, {"CD7", 4.0}});
    // 4: AML blasts
    p[4] = with(blast_base, {{"CD13", 3.4}, {"CD33", 3.8}, {"CD117", 3.0}, {"(i)MPO", 3.2},
                             {"CD64", 2.2}, {"CD65", 2.0}, {"LZ", 2.0}, {"SY41", 1.8}});
    return p;
  }();
  return pops;
}

inline double quantize_integer(double v, unsigned bits) {
  const double max = bits >= 64 ? 18446744073709551615.0
                                : static_cast<double>((std::uint64_t(1) << bits) - 1);
  if (v < 0.0) return 0.0;
  if (v > max) return max;
  return static_cast<double>(std::llround(v));
}

// Stain spellings written to the FCS files; they resolve back to the
// canonical feature through normalization and the alias table.
inline std::string synth_stain(const std::string& canonical) {
  if (canonical == "CD45") return "CD45 KO";
  if (canonical == "CD71") return "CD71 APC";
  if (canonical == "CD34") return "CD34 PerCP";
  if (canonical == "CD19") return "CD19 PE-Cy7";
  if (canonical == "(i)CD79A") return "cyCD79a";
  if (canonical == "(i)CD3") return "CD3 APC";
  if (canonical == "(i)CD22") return "CD22 PE";
  if (canonical == "CD10") return "CD10 PC5";
  if (canonical == "CD5") return "CD5 FITC";
  if (canonical == "CD7") return "CD7 PE";
  if (canonical == "CD13") return "CD13 PE";
  if (canonical == "CD117") return "CD117 PC7";
  if (canonical == "CD33") return "CD33 APC-A750";
  if (canonical == "SY41") return "SYTO41";
  if (canonical == "LZ") return "Lysozyme";
  if (canonical == "(i)MPO") return "iMPO FITC";
  if (canonical == "CD64") return "CD64 APC-A700";
  if (canonical == "CD65") return "CD65 FITC";
  return canonical;
}

}  // namespace detail

// Deterministic per-sample generation: the generator for sample k is seeded
// from (seed, k) only, so cohorts are reproducible and per-sample work can
// run in any order.
inline Cohort generate_synth_cohort(const SynthConfig& cfg) {
  const PanelSchema& schema = PanelSchema::default_panel();
  cfg.validate(schema);
  const auto panels = cfg.effective_panels();
  const auto& populations = detail::synth_populations();

  std::vector<std::vector<std::size_t>> panel_indices(panels.size());
  for (std::size_t t = 0; t < panels.size(); ++t) {
    for (const auto& name : panels[t]) {
      panel_indices[t].push_back(detail::feature_index(schema, name));
    }
  }

  Cohort cohort;
  const std::array<const char*, 3> id_prefix = {"BALL", "TALL", "AML"};
  for (std::size_t cls = 0; cls < kNumLineages; ++cls) {
    for (std::size_t k = 0; k < cfg.samples_per_class; ++k) {
      const std::size_t sample_index = cls * cfg.samples_per_class + k;
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                        static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(sample_index)};
      std::mt19937 rng(seq);

      EventMatrix sample;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%03zu", id_prefix[cls], k);
      sample.sample_id = idbuf;
      sample.label = static_cast<Lineage>(cls);
      sample.n_cols = schema.size();

      const double blast_fraction =
          std::uniform_real_distribution<double>(cfg.blast_min, cfg.blast_max)(rng);
      std::normal_distribution<double> noise(0.0, 1.0);

      for (std::size_t t = 0; t < cfg.tubes_per_sample; ++t) {
        const std::size_t n = cfg.events_per_tube;
        const std::size_t n_blast =
            static_cast<std::size_t>(std::llround(blast_fraction * static_cast<double>(n)));
        const std::size_t n_lymph = static_cast<std::size_t>(
            std::llround(0.55 * static_cast<double>(n - n_blast)));
        std::vector<std::size_t> population_of(n);
        for (std::size_t i = 0; i < n; ++i) {
          population_of[i] = i < n_blast ? 2 + cls : (i < n_blast + n_lymph ? 0 : 1);
        }
        std::shuffle(population_of.begin(), population_of.end(), rng);

        sample.tube_offsets.push_back(sample.n_rows());
        std::vector<bool> present(schema.size(), false);
        for (std::size_t f : panel_indices[t]) present[f] = true;
        sample.present_mask.push_back(std::move(present));

        const std::size_t base = sample.data.size();
        sample.data.resize(base + n * schema.size(), 0.0f);
        for (std::size_t i = 0; i < n; ++i) {
          const detail::SynthPopulation& pop = populations[population_of[i]];
          float* row = sample.data.data() + base + i * schema.size();
          for (std::size_t f : panel_indices[t]) {
            double v =
                (pop.mean[f] + pop.sigma * cfg.noise_scale * noise(rng)) * cfg.value_scale;
            if (cfg.datatype == FcsDatatype::integer) {
              v = detail::quantize_integer(v, cfg.int_bits);
            }
            row[f] = static_cast<float>(v);
          }
        }
      }
      cohort.samples.push_back(std::move(sample));
    }
  }
  return cohort;
}

// Writes one FCS 3.1 file per tube plus the cohort manifest; returns the
// manifest path. The written values are exactly the in-memory matrices.
inline std::filesystem::path write_synth_cohort(const SynthConfig& cfg, const Cohort& cohort,
                                                const std::filesystem::path& out_dir) {
  const PanelSchema& schema = PanelSchema::default_panel();
  const auto panels = cfg.effective_panels();
  std::filesystem::create_directories(out_dir / "fcs");

  FcsWriteOptions opt;
  opt.datatype = cfg.datatype;
  opt.byte_order = cfg.byte_order;
  opt.int_bits = cfg.int_bits;

  const std::filesystem::path manifest_path = out_dir / "manifest.csv";
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) {
    throw ManifestError("cannot open '" + manifest_path.string() + "' for writing");
  }
  manifest << "sample_id,label,tube_path\n";

  for (const auto& sample : cohort.samples) {
    for (std::size_t t = 0; t < sample.n_tubes(); ++t) {
      const auto& panel = panels.at(t);
      std::vector<FcsWriteParam> params;
      std::vector<std::size_t> indices;
      std::size_t fl = 1;
      for (const auto& name : panel) {
        const std::size_t f = detail::feature_index(schema, name);
        indices.push_back(f);
        FcsWriteParam p;
        if (schema.features[f].scatter) {
          p.short_name = schema.features[f].name;
        } else {
          p.short_name = "FL" + std::to_string(fl++) + "-A";
          p.stain = detail::synth_stain(schema.features[f].name);
        }
        params.push_back(std::move(p));
      }
      const std::size_t lo = sample.tube_offsets[t], hi = sample.tube_end(t);
      std::vector<double> events;
      events.reserve((hi - lo) * indices.size());
      for (std::size_t i = lo; i < hi; ++i) {
        for (std::size_t f : indices) {
          events.push_back(static_cast<double>(sample.data[i * sample.n_cols + f]));
        }
      }
      const std::string file_name = sample.sample_id + "_t" + std::to_string(t) + ".fcs";
      write_fcs_file((out_dir / "fcs" / file_name).string(), params, events, hi - lo, opt);
      manifest << sample.sample_id << ',' << lineage_name(*sample.label) << ','
               << ("fcs/" + file_name) << '\n';
    }
  }
  manifest.close();
  if (!manifest) throw ManifestError("short write to '" + manifest_path.string() + "'");
  return manifest_path;
}

}  // namespace fcmformer
