// seqoc: train and apply one-class recurrent anomaly detectors.
//
//   seqoc run   --config exp.toml [--seed N] [--out DIR] [--quiet]
//   seqoc score MODEL DATA [--out scores.csv]
//   seqoc synth --config exp.toml [--seed N] [--out data.jsonl]
//   seqoc roc   SCORES [--data DATA] [--out DIR]

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "seqoc/experiment.hpp"

namespace {

namespace ex = seqoc::experiment;

void emit(const std::optional<std::string>& path, const std::string& text) {
  if (path) {
    ex::write_file_atomic(*path, text);
  } else {
    std::cout << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-class anomaly detection for variable-length sequences"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  std::string model_path, data_path, scores_path;
  std::optional<std::string> label_data;

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "experiment config")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out, "output directory (overrides run.out)");
  run->add_flag("--quiet", quiet, "suppress the summary line");

  auto* score = app.add_subcommand("score", "score sequences with a trained model");
  score->add_option("model", model_path, "model JSON")->required();
  score->add_option("data", data_path, "JSONL or CSV sequences")->required();
  score->add_option("--out", out, "output CSV (default stdout)");
  score->add_flag("--quiet", quiet);

  auto* synth = app.add_subcommand("synth", "write the configured synthetic data set as JSONL");
  synth->add_option("--config", config_path, "experiment config")->required();
  synth->add_option("--seed", seed, "override the config seed");
  synth->add_option("--out", out, "output JSONL (default stdout)");
  synth->add_flag("--quiet", quiet);

  auto* roc = app.add_subcommand("roc", "ROC curve and AUC from a score CSV");
  roc->add_option("scores", scores_path, "CSV with score and label (or id) columns")->required();
  roc->add_option("--data", label_data, "labeled data file to look up labels by id");
  roc->add_option("--out", out, "output directory for roc.csv and auc.json (default stdout)");
  roc->add_flag("--quiet", quiet);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = ex::load_config(config_path);
      if (seed) ex::override_seed(cfg, *seed);
      if (out) cfg.out_dir = *out;
      const auto summary = ex::cmd_run(cfg);
      if (!quiet) {
        std::cout << "auc " << summary["auc"]["auc"].get<double>() << " (n_test " << summary["n_test"]
                  << ", iterations " << summary["iterations"] << ") -> " << cfg.out_dir << "\n";
      }
    } else if (*score) {
      emit(out, ex::cmd_score(model_path, data_path));
    } else if (*synth) {
      auto cfg = ex::load_config(config_path);
      if (seed) ex::override_seed(cfg, *seed);
      emit(out, ex::cmd_synth(cfg));
    } else if (*roc) {
      const auto curve = ex::cmd_roc(scores_path, label_data);
      const auto summary = seqoc::eval::auc_summary(curve).dump(2) + "\n";
      if (out) {
        ex::OutputSet files(*out);
        files.write("roc.csv", ex::roc_csv(curve));
        files.write("auc.json", summary);
        files.commit();
        if (!quiet) std::cout << summary;
      } else {
        std::cout << ex::roc_csv(curve);
        if (!quiet) std::cerr << summary;
      }
    }
  } catch (const seqoc::Error& e) {
    std::cerr << "seqoc: " << e.what() << "\n";
    return ex::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "seqoc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
