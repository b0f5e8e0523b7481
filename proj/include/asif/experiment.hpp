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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asif/analysis.hpp"
#include "asif/config.hpp"
#include "asif/data.hpp"
#include "asif/noise.hpp"

namespace asif {

/// Reads ASIF_LOG_LEVEL (trace, debug, info, warn, error, off). Default warn.
void configure_logging();

struct Splits {
  Dataset train;  // after subsampling, clean labels
  Dataset test;
};

/// Loads (or generates) the train and test splits for one run seed and
/// applies the train_size subsample.
Splits load_splits(const ExperimentConfig& config, std::uint64_t run_seed);
/// Test split only; does not depend on noise or training.
Dataset load_test_split(const ExperimentConfig& config, std::uint64_t run_seed);

/// Noise ledger for the configured kind and eta.
NoiseLedger make_noise(const ExperimentConfig& config, const Dataset& train, std::uint64_t run_seed);

ModelConfig model_config_for(const ExperimentConfig& config, const Dataset& train, const IdentityRegistry* registry);

/// Lambda stored in the DGR state so that asif_fixed always reverses the
/// gradient with strength `fixed_lambda`, whatever the sign convention.
double fixed_state_lambda(double strength, DgrSign sign);

struct EpochRecord {
  int repeat = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double classification_loss = 0.0;
  double train_macro_f1 = 0.0;  // against observed labels
  double test_macro_f1 = 0.0;
  std::map<int, double> id_losses;  // identifier methods only
  std::vector<double> lambdas;      // identifier methods only
  std::optional<DetectionMetrics> detection;
};

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  double final_train_macro_f1 = 0.0;
  double final_test_macro_f1 = 0.0;
  std::size_t flips = 0;
  std::optional<DetectionMetrics> detection_final;
  std::optional<DetectionMetrics> detection_best;  // highest F1 over epochs
  int detection_best_epoch = -1;
  std::optional<ProbeReport> probe;
  std::optional<PruningCurve> pruning;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<RepeatResult> repeats;
  double mean_test_macro_f1 = 0.0;
  double std_test_macro_f1 = 0.0;  // sample std (n - 1); 0 for one repeat
};

/// One isolated session with seed config.seed + repeat. When `out` is set,
/// writes metrics lines and the per-repeat artifacts under out/r{repeat}.
RepeatResult run_repeat(const ExperimentConfig& config, int repeat, const std::optional<std::filesystem::path>& out);

/// All repeats plus the mean/std summary. With `out`, also writes
/// metrics.jsonl (one object per epoch) and report.json.
RunReport run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out = {});

std::string epoch_json(const EpochRecord& record);
std::string report_json(const RunReport& report);
std::string probe_json(const ProbeReport& report);
/// One JSON object per pruning step, newline separated.
std::string pruning_jsonl(const PruningCurve& curve);
std::string detection_json(const DetectionMetrics& metrics);

/// Test macro-F1 of a saved checkpoint, using the test split described by
/// its stored config.
double evaluate_checkpoint(const std::filesystem::path& checkpoint_path);

}  // namespace asif
