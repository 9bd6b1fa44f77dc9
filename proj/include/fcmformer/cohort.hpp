#pragma once

// Sample-level assembly: the cohort manifest CSV, stacking harmonized tubes
// into per-sample event matrices, and the optional per-sample CSV export.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fcmformer/errors.hpp"
#include "fcmformer/fcs.hpp"
#include "fcmformer/panel.hpp"

namespace fcmformer {

enum class Lineage { b_all = 0, t_all = 1, aml = 2 };

inline constexpr std::size_t kNumLineages = 3;

inline const char* lineage_name(Lineage l) {
  switch (l) {
    case Lineage::b_all: return "B-ALL";
    case Lineage::t_all: return "T-ALL";
    case Lineage::aml: return "AML";
  }
  return "?";
}

inline std::optional<Lineage> lineage_from_name(std::string_view name) {
  if (name == "B-ALL") return Lineage::b_all;
  if (name == "T-ALL") return Lineage::t_all;
  if (name == "AML") return Lineage::aml;
  return std::nullopt;
}

// One patient sample: stacked tube matrices on the canonical panel, with
// per-tube provenance of which columns were measured vs zero-imputed.
struct EventMatrix {
  std::string sample_id;
  std::optional<Lineage> label;
  std::size_t n_cols = 0;
  std::vector<float> data;                      // n_rows x n_cols, row-major
  std::vector<std::size_t> tube_offsets;        // start row per tube, first = 0
  std::vector<std::vector<bool>> present_mask;  // per tube, n_cols flags

  std::size_t n_rows() const { return n_cols == 0 ? 0 : data.size() / n_cols; }
  std::size_t n_tubes() const { return tube_offsets.size(); }

  std::size_t tube_end(std::size_t tube) const {
    return tube + 1 < tube_offsets.size() ? tube_offsets[tube + 1] : n_rows();
  }
};

struct ManifestRow {
  std::string sample_id;
  std::string label;
  std::string tube_path;
  std::size_t line_no = 0;
};

struct CohortManifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // relative tube paths resolve against this

  static CohortManifest parse(std::istream& in, std::filesystem::path base_dir = {}) {
    CohortManifest m;
    m.base_dir = std::move(base_dir);
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (!saw_header) {
        if (line != "sample_id,label,tube_path") {
          throw ManifestError("manifest line 1: expected header 'sample_id,label,tube_path', got '" +
                              line + "'");
        }
        saw_header = true;
        continue;
      }
      std::vector<std::string> fields;
      std::size_t pos = 0;
      while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
          fields.push_back(line.substr(pos));
          break;
        }
        fields.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
      }
      if (fields.size() != 3 || fields[0].empty() || fields[2].empty()) {
        throw ManifestError("manifest line " + std::to_string(line_no) +
                            ": expected 'sample_id,label,tube_path'");
      }
      if (!lineage_from_name(fields[1])) {
        throw ManifestError("manifest line " + std::to_string(line_no) + ": unknown label '" +
                            fields[1] + "' (expected B-ALL, T-ALL or AML)");
      }
      m.rows.push_back({fields[0], fields[1], fields[2], line_no});
    }
    if (!saw_header && !m.rows.empty()) {
      throw ManifestError("manifest: missing header row");
    }
    return m;
  }

  static CohortManifest load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest '" + path.string() + "'");
    return parse(in, path.parent_path());
  }
};

struct SampleLoadFailure {
  std::string sample_id;
  std::string error;
};

struct Cohort {
  std::vector<EventMatrix> samples;
  std::vector<SampleLoadFailure> failures;
};

// Parses and harmonizes every tube of every manifest sample. A failing tube
// fails its sample (with the cause recorded) without aborting the rest.
inline Cohort load_cohort(const CohortManifest& manifest, const PanelSchema& schema,
                          std::vector<std::string>* notices = nullptr) {
  Cohort cohort;
  // group rows by sample id, first-appearance order
  std::vector<std::pair<std::string, std::vector<const ManifestRow*>>> groups;
  for (const auto& row : manifest.rows) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == row.sample_id; });
    if (it == groups.end()) {
      groups.push_back({row.sample_id, {&row}});
    } else {
      it->second.push_back(&row);
    }
  }

  for (const auto& [sample_id, rows] : groups) {
    try {
      EventMatrix sample;
      sample.sample_id = sample_id;
      sample.n_cols = schema.size();
      for (const ManifestRow* row : rows) {
        const auto label = lineage_from_name(row->label);
        if (sample.label && label != sample.label) {
          throw ManifestError("manifest line " + std::to_string(row->line_no) +
                              ": conflicting label for sample " + sample_id);
        }
        sample.label = label;
        std::filesystem::path path(row->tube_path);
        if (path.is_relative() && !manifest.base_dir.empty()) {
          path = manifest.base_dir / path;
        }
        const FcsFile file = parse_fcs_file(path.string());
        HarmonizedTube tube = harmonize(file, schema);
        if (notices) {
          for (auto& n : tube.notices) notices->push_back(sample_id + ": " + n);
        }
        sample.tube_offsets.push_back(sample.n_rows());
        sample.present_mask.push_back(tube.present);
        sample.data.insert(sample.data.end(), tube.data.begin(), tube.data.end());
      }
      cohort.samples.push_back(std::move(sample));
    } catch (const std::exception& e) {
      cohort.failures.push_back({sample_id, e.what()});
    }
  }
  return cohort;
}

// Debug export: one CSV per sample, panel columns in canonical order.
inline void write_matrix_csv(std::ostream& out, const EventMatrix& sample,
                             const PanelSchema& schema) {
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (f) out << ',';
    out << schema.features[f].name;
  }
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < sample.n_rows(); ++i) {
    for (std::size_t j = 0; j < sample.n_cols; ++j) {
      if (j) out << ',';
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(sample.data[i * sample.n_cols + j]));
      out << buf;
    }
    out << '\n';
  }
}

inline void write_matrix_csv_file(const std::filesystem::path& path, const EventMatrix& sample,
                                  const PanelSchema& schema) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot open '" + path.string() + "' for writing");
  write_matrix_csv(out, sample, schema);
}

}  // namespace fcmformer
