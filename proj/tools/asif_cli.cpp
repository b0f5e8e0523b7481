/*
 * Copyright 2026 The ASIF Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: each subcommand reads and writes plain files so
// the protocols compose.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <unordered_map>

#include <CLI11.hpp>

#include "asif/analysis.hpp"
#include "asif/config.hpp"
#include "asif/experiment.hpp"
#include "asif/noise.hpp"

namespace fs = std::filesystem;
using namespace asif;

namespace {

ExperimentConfig read_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                             const std::optional<int>& repeats) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  if (seed) cfg.seed = *seed;
  if (repeats) cfg.repeats = *repeats;
  cfg.validate();
  return cfg;
}

std::vector<int> labels_for(const FrozenFeatures& f, const std::map<SampleId, int>& labels) {
  std::vector<int> out;
  for (SampleId id : f.ids) {
    const auto it = labels.find(id);
    if (it == labels.end()) throw DomainError("no label for sample " + std::to_string(id));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"asif: identity-suppressing training for noisy labels"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::string out_dir = "out";

  auto* train = app.add_subcommand("train", "run an experiment; writes metrics.jsonl, report.json and per-repeat artifacts");
  train->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--repeats", repeats, "override the repeat count");
  train->add_option("--out", out_dir, "output directory");

  auto* inject = app.add_subcommand("inject-noise", "write the noise ledger and noisy training set of a config");
  inject->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  inject->add_option("--seed", seed, "override the config seed");
  inject->add_option("--out", out_dir, "output directory");

  std::string losses_path, ledger_path;
  std::optional<double> eta;
  auto* detect = app.add_subcommand("detect", "flag the round(N eta) largest losses and score them against a ledger");
  detect->add_option("--losses", losses_path, "sample_id,loss CSV")->required()->check(CLI::ExistingFile);
  detect->add_option("--ledger", ledger_path, "noise ledger CSV")->required()->check(CLI::ExistingFile);
  detect->add_option("--eta", eta, "noise rate (default: the ledger's flip fraction)");

  std::string features_path, labels_path, eval_features_path, eval_labels_path;
  ProbeOptions probe_opts;
  auto* probe = app.add_subcommand("probe", "identity probe on frozen features");
  probe->add_option("--features", features_path, "features CSV")->required()->check(CLI::ExistingFile);
  probe->add_option("--patience", probe_opts.patience);
  probe->add_option("--max-epochs", probe_opts.max_epochs);
  probe->add_option("--lr", probe_opts.lr);

  PruningOptions prune_opts;
  int classes = 0;
  auto* prune = app.add_subcommand("prune", "least-important-dimension pruning curve (JSON lines)");
  prune->add_option("--features", features_path, "training features CSV")->required()->check(CLI::ExistingFile);
  prune->add_option("--labels", labels_path, "sample_id,label CSV or ledger")->required()->check(CLI::ExistingFile);
  prune->add_option("--eval-features", eval_features_path, "evaluation features CSV (default: training)");
  prune->add_option("--eval-labels", eval_labels_path, "evaluation labels CSV");
  prune->add_option("--classes", classes, "number of classes (default: max label + 1)");
  prune->add_option("--drop-fraction", prune_opts.schedule.drop_fraction);
  prune->add_option("--drop", prune_opts.schedule.fixed_drop, "drop exactly this many dims per step");
  prune->add_option("--min-dims", prune_opts.schedule.min_dims);

  std::string checkpoint_path;
  auto* eval = app.add_subcommand("eval", "test macro-F1 of a saved checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint.bin")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const RunReport report = run_experiment(read_config(config_path, seed, repeats), fs::path(out_dir));
      std::cout << report_json(report) << '\n';
    } else if (*inject) {
      const ExperimentConfig cfg = read_config(config_path, seed, std::nullopt);
      const Splits splits = load_splits(cfg, cfg.seed);
      const NoiseLedger ledger = make_noise(cfg, splits.train, cfg.seed);
      fs::create_directories(out_dir);
      write_ledger_csv(ledger, fs::path(out_dir) / "ledger.csv");
      write_csv(apply_ledger(splits.train, ledger), fs::path(out_dir) / "train.csv", true);
      std::cout << "{\"samples\":" << ledger.records.size() << ",\"flips\":" << ledger.flip_count() << "}\n";
    } else if (*detect) {
      const NoiseLedger ledger = read_ledger_csv(ledger_path);
      const auto losses = read_losses_csv(losses_path);
      const double rate = eta.value_or(ledger.records.empty() ? 0.0
                                                              : static_cast<double>(ledger.flip_count()) /
                                                                    static_cast<double>(ledger.records.size()));
      std::cout << detection_json(detection_metrics(detect_noisy(losses, rate), ledger)) << '\n';
    } else if (*probe) {
      std::cout << probe_json(identity_probe(read_features_csv(features_path).values, probe_opts)) << '\n';
    } else if (*prune) {
      const FrozenFeatures tr = read_features_csv(features_path);
      const std::vector<int> tr_labels = labels_for(tr, read_labels_csv(labels_path));
      FrozenFeatures ev = tr;
      std::vector<int> ev_labels = tr_labels;
      if (!eval_features_path.empty()) {
        if (eval_labels_path.empty()) throw DomainError("--eval-features needs --eval-labels");
        ev = read_features_csv(eval_features_path);
        ev_labels = labels_for(ev, read_labels_csv(eval_labels_path));
      }
      if (classes == 0) {
        for (int l : tr_labels) classes = std::max(classes, l + 1);
        for (int l : ev_labels) classes = std::max(classes, l + 1);
      }
      std::cout << pruning_jsonl(
          feature_pruning_curve(tr.values, tr_labels, ev.values, ev_labels, classes, prune_opts));
    } else if (*eval) {
      std::cout.precision(17);
      std::cout << "{\"test_macro_f1\":" << evaluate_checkpoint(checkpoint_path) << "}\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error in '" << e.field() << "': " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
