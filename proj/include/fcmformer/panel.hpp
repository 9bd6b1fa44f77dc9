#pragma once

// Canonical 22-feature panel (4 scatter channels + 18 markers) and the
// harmonization step that maps an arbitrary tube onto it with zero
// imputation for absent features.

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fcmformer/errors.hpp"
#include "fcmformer/fcs.hpp"

namespace fcmformer {

// Fluorochrome tokens stripped from the tail of a normalized marker name.
// Tandem-dye spellings reduce to these after repeated stripping
// (e.g. "APC-A750" -> A750, APC). Matched longest-first.
inline const std::vector<std::string>& fluorochrome_suffixes() {
  static const std::vector<std::string> suffixes = {
      "HORIZONV450", "PERCPCY55", "APCCY7", "PECY5", "PECY7", "PERCP", "BV421",
      "BV510", "APCH7", "FITC", "A700", "A750", "V450", "V500", "ECD",
      "PC5", "PC7", "APC", "PE", "KO",
  };
  return suffixes;
}

// Uppercase, drop all non-alphanumerics, then strip fluorochrome suffixes
// until none match. Never strips a token down to nothing.
inline std::string normalize_marker(std::string_view raw) {
  std::string s;
  s.reserve(raw.size());
  for (char c : raw) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  bool stripped = true;
  while (stripped) {
    stripped = false;
    for (const std::string& suf : fluorochrome_suffixes()) {
      if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
        s.erase(s.size() - suf.size());
        stripped = true;
        break;
      }
    }
  }
  return s;
}

struct PanelFeature {
  std::string name;
  bool scatter = false;  // scatter channels match on $PnN, markers on $PnS
};

struct PanelSchema {
  std::vector<PanelFeature> features;
  std::unordered_map<std::string, std::size_t> aliases;  // normalized token -> feature index

  std::size_t size() const { return features.size(); }

  std::optional<std::size_t> lookup(const std::string& normalized) const {
    auto it = aliases.find(normalized);
    if (it == aliases.end()) return std::nullopt;
    return it->second;
  }

  static const PanelSchema& default_panel() {
    static const PanelSchema schema = [] {
      PanelSchema s;
      s.features = {
          {"FSC-A", true},    {"FSC-W", true},  {"FSC-H", true},  {"SSC-A", true},
          {"CD45", false},    {"CD71", false},  {"CD34", false},  {"CD19", false},
          {"(i)CD79A", false}, {"(i)CD3", false}, {"(i)CD22", false}, {"CD10", false},
          {"CD5", false},     {"CD7", false},   {"CD13", false},  {"CD117", false},
          {"CD33", false},    {"SY41", false},  {"LZ", false},    {"(i)MPO", false},
          {"CD64", false},    {"CD65", false},
      };
      auto alias = [&s](const std::string& token, const std::string& canonical) {
        for (std::size_t i = 0; i < s.features.size(); ++i) {
          if (s.features[i].name == canonical) {
            s.aliases.emplace(normalize_marker(token), i);
            return;
          }
        }
        throw ConfigError("panel: unknown canonical feature " + canonical);
      };
      for (const auto& f : s.features) alias(f.name, f.name);
      // Intracellular markers: surface and cytoplasmic spellings share the
      // single canonical "(i)" column.
      alias("CD79A", "(i)CD79A");
      alias("cyCD79A", "(i)CD79A");
      alias("cCD79A", "(i)CD79A");
      alias("CD3", "(i)CD3");
      alias("cyCD3", "(i)CD3");
      alias("cCD3", "(i)CD3");
      alias("CD22", "(i)CD22");
      alias("cyCD22", "(i)CD22");
      alias("cCD22", "(i)CD22");
      alias("MPO", "(i)MPO");
      alias("cyMPO", "(i)MPO");
      alias("cMPO", "(i)MPO");
      alias("SYTO41", "SY41");
      alias("LYSOZYME", "LZ");
      return s;
    }();
    return schema;
  }
};

struct HarmonizedTube {
  std::size_t n_events = 0;
  std::vector<float> data;        // n_events x panel width, canonical column order
  std::vector<bool> present;      // per panel feature; false = zero-imputed
  std::vector<std::string> notices;
};

// Maps a parsed tube onto the panel: each canonical feature takes the first
// file parameter whose identity token resolves to it ($PnS preferred over
// $PnN for markers, $PnN for scatter channels). Unmatched features are
// zero-filled and masked absent; a tube matching nothing is unusable.
inline HarmonizedTube harmonize(const FcsFile& file, const PanelSchema& schema) {
  const std::size_t width = schema.size();
  HarmonizedTube out;
  out.n_events = file.n_events;
  out.present.assign(width, false);

  std::vector<std::optional<std::size_t>> source(width);  // feature -> param index
  for (std::size_t pi = 0; pi < file.params.size(); ++pi) {
    const FcsParamInfo& p = file.params[pi];
    const std::string short_token = normalize_marker(p.short_name);
    const std::string marker_token =
        p.stain.empty() ? short_token : normalize_marker(p.stain);

    std::optional<std::size_t> feature;
    if (auto f = schema.lookup(short_token); f && schema.features[*f].scatter) {
      feature = f;
    } else if (auto m = schema.lookup(marker_token); m && !schema.features[*m].scatter) {
      feature = m;
    }
    if (!feature) {
      out.notices.push_back("parameter " + std::to_string(pi + 1) + " ('" +
                            (p.stain.empty() ? p.short_name : p.stain) +
                            "') matches no panel feature; dropped");
      continue;
    }
    if (source[*feature]) {
      out.notices.push_back("duplicate match for " + schema.features[*feature].name +
                            ": parameters " + std::to_string(*source[*feature] + 1) + " and " +
                            std::to_string(pi + 1) + "; using the first");
      continue;
    }
    source[*feature] = pi;
    out.present[*feature] = true;
  }

  if (std::none_of(out.present.begin(), out.present.end(), [](bool b) { return b; })) {
    throw EmptyPanelError("harmonize: tube matches no canonical panel feature");
  }

  out.data.assign(file.n_events * width, 0.0f);
  for (std::size_t ev = 0; ev < file.n_events; ++ev) {
    float* row = out.data.data() + ev * width;
    const double* src = file.events.data() + ev * file.n_params;
    for (std::size_t f = 0; f < width; ++f) {
      if (source[f]) row[f] = static_cast<float>(src[*source[f]]);
    }
  }
  return out;
}

}  // namespace fcmformer
