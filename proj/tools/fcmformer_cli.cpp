// Command-line front end: synth, parse, train, evaluate, predict, params.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcmformer/checkpoint.hpp"
#include "fcmformer/cohort.hpp"
#include "fcmformer/errors.hpp"
#include "fcmformer/fcs.hpp"
#include "fcmformer/metrics.hpp"
#include "fcmformer/model.hpp"
#include "fcmformer/panel.hpp"
#include "fcmformer/runconfig.hpp"
#include "fcmformer/synth.hpp"
#include "fcmformer/training.hpp"

namespace fs = std::filesystem;
using namespace fcmformer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

RunConfig load_config_or_throw(const std::string& path) {
  if (!fs::exists(path)) {
    throw ConfigError("config file not found: " + path);
  }
  return RunConfig::load(path);
}

// Parses and harmonizes one or more tube files as a single sample.
EventMatrix assemble_sample(const std::vector<std::string>& tube_paths,
                            const std::string& sample_id, std::vector<std::string>* notices) {
  const PanelSchema& schema = PanelSchema::default_panel();
  EventMatrix sample;
  sample.sample_id =
      sample_id.empty() ? fs::path(tube_paths.front()).stem().string() : sample_id;
  sample.n_cols = schema.size();
  for (const auto& path : tube_paths) {
    const FcsFile file = parse_fcs_file(path);
    HarmonizedTube tube = harmonize(file, schema);
    if (notices) {
      for (auto& n : tube.notices) notices->push_back(path + ": " + n);
    }
    sample.tube_offsets.push_back(sample.n_rows());
    sample.present_mask.push_back(tube.present);
    sample.data.insert(sample.data.end(), tube.data.begin(), tube.data.end());
  }
  return sample;
}

int cmd_synth(const std::string& config_path) {
  const RunConfig cfg = load_config_or_throw(config_path);
  const Cohort cohort = generate_synth_cohort(cfg.synth);
  const fs::path manifest = write_synth_cohort(cfg.synth, cohort, cfg.out_dir);
  std::size_t events = 0;
  for (const auto& s : cohort.samples) events += s.n_rows();
  std::cout << "wrote " << cohort.samples.size() << " samples (" << events << " events) under "
            << cfg.out_dir << "\n"
            << "manifest: " << manifest.string() << "\n";
  return kExitOk;
}

int cmd_parse(const std::vector<std::string>& tubes, const std::string& sample_id,
              const std::string& csv_path) {
  for (const auto& t : tubes) {
    if (!fs::exists(t)) throw ConfigError("tube file not found: " + t);
  }
  std::vector<std::string> notices;
  const EventMatrix sample = assemble_sample(tubes, sample_id, &notices);
  const PanelSchema& schema = PanelSchema::default_panel();
  std::cout << "sample " << sample.sample_id << ": " << sample.n_rows() << " events in "
            << sample.n_tubes() << " tube(s)\n";
  for (std::size_t t = 0; t < sample.n_tubes(); ++t) {
    std::size_t present = 0;
    for (bool b : sample.present_mask[t]) present += b;
    std::cout << "  tube " << t << ": rows [" << sample.tube_offsets[t] << ", "
              << sample.tube_end(t) << "), " << present << "/" << schema.size()
              << " panel features measured\n";
  }
  for (const auto& n : notices) std::cerr << "notice: " << n << "\n";
  if (!csv_path.empty()) {
    write_matrix_csv_file(csv_path, sample, schema);
    std::cout << "matrix csv: " << csv_path << "\n";
  }
  return kExitOk;
}

int cmd_params(const std::string& config_path) {
  const RunConfig cfg = load_config_or_throw(config_path);
  const ParameterLedger ledger = parameter_count(cfg.model);
  for (const auto& e : ledger.entries) {
    std::cout << e.name << " " << shape_to_string(e.shape) << " " << e.count << "\n";
  }
  std::cout << "total " << ledger.total << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path) {
  const RunConfig cfg = load_config_or_throw(config_path);
  if (cfg.manifest.empty()) {
    throw ConfigError("config: 'manifest' is required for train");
  }
  if (!fs::exists(cfg.manifest)) {
    throw ConfigError("manifest not found: " + cfg.manifest);
  }
  cfg.model.validate();
  cfg.train.validate();

  const CohortManifest manifest = CohortManifest::load(cfg.manifest);
  std::vector<std::string> notices;
  const Cohort cohort = load_cohort(manifest, PanelSchema::default_panel(), &notices);
  for (const auto& n : notices) std::cerr << "notice: " << n << "\n";
  for (const auto& f : cohort.failures) {
    std::cerr << "sample " << f.sample_id << " failed to load: " << f.error << "\n";
  }
  if (cohort.samples.empty()) {
    throw ConfigError("no usable samples in manifest " + cfg.manifest);
  }

  const CvResult<float> cv = run_cv<float>(cohort.samples, cfg.model, cfg.train);

  fs::create_directories(cfg.out_dir);
  const fs::path out_dir(cfg.out_dir);
  {
    std::ofstream report(out_dir / "report.csv", std::ios::trunc);
    write_report_csv(report, cv.reports);
  }
  for (std::size_t f = 0; f < cv.reports.size(); ++f) {
    std::ofstream confusion(out_dir / ("confusion_fold" + std::to_string(f) + ".csv"),
                            std::ios::trunc);
    write_confusion_csv(confusion, cv.reports[f]);
    save_checkpoint(out_dir / ("checkpoint_fold" + std::to_string(f) + ".fcmf"), cv.models[f]);
  }
  {
    std::ofstream run_manifest(out_dir / "run_manifest.txt", std::ios::trunc);
    run_manifest << cfg.resolved_text();
  }

  for (const auto& r : cv.reports) {
    std::cout << "fold " << r.fold_index << ": best_epoch=" << r.best_epoch
              << " val_acc=" << fmt(r.best_val_accuracy) << " test_acc=" << fmt(r.test.accuracy)
              << " test_auc=" << fmt(r.test.roc_auc) << "\n";
  }
  std::cout << "accuracy " << fmt(cv.mean_accuracy) << " +- " << fmt(cv.std_accuracy)
            << ", roc-auc " << fmt(cv.mean_auc) << " +- " << fmt(cv.std_auc) << "\n"
            << "reports under " << cfg.out_dir << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& manifest_path) {
  if (!fs::exists(checkpoint_path)) {
    throw ConfigError("checkpoint not found: " + checkpoint_path);
  }
  if (!fs::exists(manifest_path)) {
    throw ConfigError("manifest not found: " + manifest_path);
  }
  const ModelParams<float> params = load_checkpoint(checkpoint_path);
  const CohortManifest manifest = CohortManifest::load(manifest_path);
  const Cohort cohort = load_cohort(manifest, PanelSchema::default_panel());
  for (const auto& f : cohort.failures) {
    std::cerr << "sample " << f.sample_id << " failed to load: " << f.error << "\n";
  }
  if (cohort.samples.empty()) {
    throw ConfigError("no usable samples in manifest " + manifest_path);
  }
  std::vector<std::size_t> preds, truth;
  std::vector<std::vector<double>> probs;
  for (const auto& sample : cohort.samples) {
    if (!sample.label) continue;
    const Prediction<float> p = predict(params, sample);
    preds.push_back(p.label);
    probs.emplace_back(p.probabilities.begin(), p.probabilities.end());
    truth.push_back(static_cast<std::size_t>(*sample.label));
  }
  const EvalResult result =
      evaluate_predictions(preds, probs, truth, params.config.n_classes);
  std::cout << "samples " << preds.size() << "\n"
            << "accuracy " << fmt(result.accuracy) << "\n"
            << "roc_auc " << fmt(result.roc_auc) << "\n";
  for (std::size_t r = 0; r < result.confusion.size(); ++r) {
    std::cout << "confusion[" << lineage_name(static_cast<Lineage>(r)) << "]";
    for (std::size_t c = 0; c < result.confusion[r].size(); ++c) {
      std::cout << " " << result.confusion[r][c];
    }
    std::cout << "\n";
  }
  return kExitOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::vector<std::string>& tubes,
                const std::string& sample_id) {
  if (!fs::exists(checkpoint_path)) {
    throw ConfigError("checkpoint not found: " + checkpoint_path);
  }
  for (const auto& t : tubes) {
    if (!fs::exists(t)) throw ConfigError("tube file not found: " + t);
  }
  const ModelParams<float> params = load_checkpoint(checkpoint_path);
  const PanelSchema& schema = PanelSchema::default_panel();
  if (params.config.n_features != schema.size()) {
    throw CheckpointError("checkpoint expects " + std::to_string(params.config.n_features) +
                          " features, panel provides " + std::to_string(schema.size()));
  }
  const EventMatrix sample = assemble_sample(tubes, sample_id, nullptr);
  const Prediction<float> p = predict(params, sample);
  std::cout << sample.sample_id << "," << lineage_name(static_cast<Lineage>(p.label));
  for (float prob : p.probabilities) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(prob));
    std::cout << "," << buf;
  }
  std::cout << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FCM-Former: set-transformer lineage classification for flow cytometry samples"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  std::string manifest_path;
  std::string sample_id;
  std::string csv_path;
  std::vector<std::string> tube_paths;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort (FCS + manifest)");
  synth->add_option("config", config_path, "run configuration file")->required();

  CLI::App* parse = app.add_subcommand("parse", "parse and harmonize tube files as one sample");
  parse->add_option("tubes", tube_paths, "FCS tube files")->required()->expected(-1);
  parse->add_option("--sample-id", sample_id, "sample id for the output");
  parse->add_option("--csv", csv_path, "write the harmonized matrix as CSV");

  CLI::App* train = app.add_subcommand("train", "run cross-validated training");
  train->add_option("config", config_path, "run configuration file")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a cohort");
  evaluate->add_option("checkpoint", checkpoint_path, "model checkpoint")->required();
  evaluate->add_option("manifest", manifest_path, "cohort manifest CSV")->required();

  CLI::App* predict = app.add_subcommand("predict", "classify one sample from its tube files");
  predict->add_option("checkpoint", checkpoint_path, "model checkpoint")->required();
  predict->add_option("tubes", tube_paths, "FCS tube files")->required()->expected(-1);
  predict->add_option("--sample-id", sample_id, "sample id for the output line");

  CLI::App* params = app.add_subcommand("params", "print the itemized parameter ledger");
  params->add_option("config", config_path, "run configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(config_path);
    if (parse->parsed()) return cmd_parse(tube_paths, sample_id, csv_path);
    if (train->parsed()) return cmd_train(config_path);
    if (evaluate->parsed()) return cmd_evaluate(checkpoint_path, manifest_path);
    if (predict->parsed()) return cmd_predict(checkpoint_path, tube_paths, sample_id);
    if (params->parsed()) return cmd_params(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ManifestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
