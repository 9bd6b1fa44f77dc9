#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fcmformer/cohort.hpp"
#include "fcmformer/fcs.hpp"
#include "fcmformer/panel.hpp"

using namespace fcmformer;
namespace fs = std::filesystem;

namespace {

const PanelSchema& schema() { return PanelSchema::default_panel(); }

std::size_t feature(const std::string& name) {
  const auto idx = schema().lookup(normalize_marker(name));
  REQUIRE(idx.has_value());
  return *idx;
}

// Builds a parsed tube with the given (PnN, PnS) parameter identities and
// strictly positive values, so a zero in the harmonized matrix can only come
// from imputation.
FcsFile make_tube(const std::vector<FcsWriteParam>& params, std::size_t n_events,
                  std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 5.0);
  std::vector<double> events(n_events * params.size());
  for (auto& v : events) v = static_cast<double>(static_cast<float>(dist(rng)));
  return parse_fcs(write_fcs(params, events, n_events));
}

std::vector<FcsWriteParam> full_panel_params() {
  std::vector<FcsWriteParam> out;
  std::size_t fl = 1;
  for (const auto& f : schema().features) {
    if (f.scatter) {
      out.push_back({f.name, ""});
    } else {
      out.push_back({"FL" + std::to_string(fl++) + "-A", f.name});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("marker normalization and alias resolution") {
  CHECK(normalize_marker("cyCD79a") == "CYCD79A");
  CHECK(schema().lookup(normalize_marker("cyCD79a")) == feature("(i)CD79A"));
  CHECK(normalize_marker("CD19 PE-Cy7") == "CD19");
  CHECK(normalize_marker("CD33 APC-A750") == "CD33");
  CHECK(normalize_marker("iMPO FITC") == "IMPO");
  CHECK(normalize_marker("CD45 KO") == "CD45");
  CHECK(normalize_marker("SYTO41") == "SYTO41");
  CHECK(schema().lookup("SYTO41") == feature("SY41"));
  CHECK(normalize_marker("") == "");
  // a fluorochrome alone never strips to nothing
  CHECK(normalize_marker("PE") == "PE");
  // out-of-panel marker resolves to nothing
  CHECK_FALSE(schema().lookup(normalize_marker("HLA-DR")).has_value());
}

TEST_CASE("harmonize imputes missing features with zeros and masks them") {
  std::vector<FcsWriteParam> params = full_panel_params();
  // drop CD117
  params.erase(std::remove_if(params.begin(), params.end(),
                              [](const FcsWriteParam& p) { return p.stain == "CD117"; }),
               params.end());
  const HarmonizedTube tube = harmonize(make_tube(params, 20, 1), schema());
  const std::size_t cd117 = feature("CD117");
  CHECK_FALSE(tube.present[cd117]);
  for (std::size_t i = 0; i < tube.n_events; ++i) {
    CHECK(tube.data[i * schema().size() + cd117] == 0.0f);
  }
  std::size_t measured = 0;
  for (bool b : tube.present) measured += b;
  CHECK(measured == schema().size() - 1);
}

TEST_CASE("harmonize with the full panel leaves nothing masked") {
  const HarmonizedTube tube = harmonize(make_tube(full_panel_params(), 15, 2), schema());
  for (bool b : tube.present) CHECK(b);
  for (float v : tube.data) CHECK(v > 0.0f);
}

TEST_CASE("scatter plus CD45 only: five measured, seventeen zero columns") {
  std::vector<FcsWriteParam> params = {
      {"FSC-A", ""}, {"FSC-W", ""}, {"FSC-H", ""}, {"SSC-A", ""}, {"FL1-A", "CD45 KO"}};
  const HarmonizedTube tube = harmonize(make_tube(params, 12, 3), schema());
  std::size_t measured = 0;
  for (bool b : tube.present) measured += b;
  CHECK(measured == 5);
  std::size_t zero_columns = 0;
  for (std::size_t f = 0; f < schema().size(); ++f) {
    bool all_zero = true;
    for (std::size_t i = 0; i < tube.n_events; ++i) {
      all_zero = all_zero && tube.data[i * schema().size() + f] == 0.0f;
    }
    zero_columns += all_zero;
    CHECK(all_zero == !tube.present[f]);  // zero-imputation invariant
  }
  CHECK(zero_columns == 17);
}

TEST_CASE("duplicate matches resolve to the first parameter and warn") {
  std::vector<FcsWriteParam> params = {
      {"FSC-A", ""}, {"FSC-W", ""}, {"FSC-H", ""}, {"SSC-A", ""},
      {"FL1-A", "CD45"}, {"FL2-A", "CD19 PE"}, {"FL3-A", "CD19 FITC"}};
  const FcsFile file = make_tube(params, 8, 4);
  const HarmonizedTube tube = harmonize(file, schema());
  bool warned = false;
  for (const auto& n : tube.notices) {
    warned = warned || n.find("duplicate match for CD19") != std::string::npos;
  }
  CHECK(warned);
  const std::size_t cd19 = feature("CD19");
  for (std::size_t i = 0; i < tube.n_events; ++i) {
    // column comes from FL2-A (parameter index 5), the first match
    CHECK(tube.data[i * schema().size() + cd19] ==
          static_cast<float>(file.events[i * file.n_params + 5]));
  }
}

TEST_CASE("out-of-panel parameters are dropped with a notice") {
  std::vector<FcsWriteParam> params = {
      {"FSC-A", ""}, {"FSC-W", ""}, {"FSC-H", ""}, {"SSC-A", ""},
      {"FL1-A", "CD45"}, {"FL2-A", "HLA-DR"}};
  const HarmonizedTube tube = harmonize(make_tube(params, 8, 5), schema());
  bool noticed = false;
  for (const auto& n : tube.notices) {
    noticed = noticed || n.find("HLA-DR") != std::string::npos;
  }
  CHECK(noticed);
}

TEST_CASE("a tube matching nothing is an empty-panel error") {
  std::vector<FcsWriteParam> params = {{"TIME", ""}, {"FL1-A", "HLA-DR"}};
  CHECK_THROWS_AS(harmonize(make_tube(params, 8, 6), schema()), EmptyPanelError);
}

TEST_CASE("cohort loading stacks tubes with offsets") {
  const fs::path dir = fs::temp_directory_path() / "fcmf_cohort_test";
  fs::create_directories(dir);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> dist(0.5, 5.0);
  const std::vector<std::size_t> tube_events = {1000, 2000, 1500};
  std::ostringstream manifest_text;
  manifest_text << "sample_id,label,tube_path\n";
  for (std::size_t t = 0; t < tube_events.size(); ++t) {
    const auto params = full_panel_params();
    std::vector<double> events(tube_events[t] * params.size());
    for (auto& v : events) v = static_cast<double>(static_cast<float>(dist(rng)));
    const std::string name = "s1_t" + std::to_string(t) + ".fcs";
    write_fcs_file((dir / name).string(), params, events, tube_events[t]);
    manifest_text << "s1,B-ALL," << name << "\n";
  }
  {
    std::ofstream out(dir / "manifest.csv");
    out << manifest_text.str();
  }

  const CohortManifest manifest = CohortManifest::load(dir / "manifest.csv");
  const Cohort cohort = load_cohort(manifest, schema());
  CHECK(cohort.failures.empty());
  REQUIRE(cohort.samples.size() == 1);
  const EventMatrix& s = cohort.samples[0];
  CHECK(s.n_rows() == 4500);
  CHECK(s.tube_offsets == std::vector<std::size_t>{0, 1000, 3000});
  CHECK(s.label == Lineage::b_all);
  CHECK(s.present_mask.size() == 3);
  fs::remove_all(dir);
}

TEST_CASE("manifest rejects unknown labels naming the row") {
  std::istringstream in("sample_id,label,tube_path\ns1,B-ALL,a.fcs\ns2,X-ALL,b.fcs\n");
  try {
    CohortManifest::parse(in);
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("X-ALL") != std::string::npos);
  }
}

TEST_CASE("manifest requires its header") {
  std::istringstream in("s1,B-ALL,a.fcs\n");
  CHECK_THROWS_AS(CohortManifest::parse(in), ManifestError);
}

TEST_CASE("empty manifest loads an empty cohort") {
  std::istringstream in("sample_id,label,tube_path\n");
  const CohortManifest manifest = CohortManifest::parse(in);
  const Cohort cohort = load_cohort(manifest, schema());
  CHECK(cohort.samples.empty());
  CHECK(cohort.failures.empty());
}

TEST_CASE("a missing tube fails its sample without aborting the cohort") {
  const fs::path dir = fs::temp_directory_path() / "fcmf_cohort_missing";
  fs::create_directories(dir);
  const auto params = full_panel_params();
  std::vector<double> events(10 * params.size(), 1.0);
  write_fcs_file((dir / "ok.fcs").string(), params, events, 10);
  {
    std::ofstream out(dir / "manifest.csv");
    out << "sample_id,label,tube_path\n"
        << "good,AML,ok.fcs\n"
        << "bad,AML,gone.fcs\n";
  }
  const Cohort cohort = load_cohort(CohortManifest::load(dir / "manifest.csv"), schema());
  REQUIRE(cohort.samples.size() == 1);
  CHECK(cohort.samples[0].sample_id == "good");
  REQUIRE(cohort.failures.size() == 1);
  CHECK(cohort.failures[0].sample_id == "bad");
  fs::remove_all(dir);
}

TEST_CASE("matrix CSV export carries the panel header in order") {
  EventMatrix m;
  m.sample_id = "x";
  m.n_cols = schema().size();
  m.data.assign(2 * m.n_cols, 1.5f);
  m.tube_offsets = {0};
  m.present_mask = {std::vector<bool>(m.n_cols, true)};
  std::ostringstream out;
  write_matrix_csv(out, m, schema());
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "FSC-A,FSC-W,FSC-H,SSC-A,CD45,CD71,CD34,CD19,(i)CD79A,(i)CD3,(i)CD22,CD10,CD5,CD7,"
        "CD13,CD117,CD33,SY41,LZ,(i)MPO,CD64,CD65");
  std::string row;
  std::size_t n_rows = 0;
  while (std::getline(lines, row)) ++n_rows;
  CHECK(n_rows == 2);
}
