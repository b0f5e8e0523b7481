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
#include <optional>
#include <string>
#include <vector>

#include "asif/analysis.hpp"
#include "asif/data.hpp"
#include "asif/model.hpp"
#include "asif/noise.hpp"

namespace asif {

enum class DatasetSource { Synthetic, Idx, Csv };
enum class Method { CE, GCE, PHuber, ASIF, ASIFFixed };

/// One experiment, stored as a flat `key = value` document. Lines starting
/// with '#' are comments. Unknown keys are rejected. `N` is an alias of
/// train_size and `lambda_if` of lambda_id.
struct ExperimentConfig {
  // data
  DatasetSource dataset = DatasetSource::Synthetic;
  std::string train_images, train_labels, test_images, test_labels;  // idx
  std::string train_csv, test_csv;                                     // csv
  bool csv_header = false;
  int num_classes = 10;  // idx / csv
  SyntheticSpec synthetic;
  int synthetic_test_per_class = 250;
  std::optional<std::uint64_t> synthetic_seed;  // unset: follows the run seed
  Index train_size = 0;                         // 0 keeps every sample

  // noise
  NoiseKind noise = NoiseKind::None;
  double eta = 0.0;
  int warmup_epochs = 10;
  double warmup_lr = 0.01;

  // method and optimisation
  Method method = Method::ASIF;
  double gce_q = 0.7;
  double phuber_tau = 10.0;
  double lr = 1e-3;
  double momentum = 0.9;
  double lambda_id = 1.0;
  Index batch_size = 128;
  int epochs = 100;
  std::uint64_t seed = 0;
  int repeats = 1;

  // architecture
  std::vector<Index> extractor_widths{128, 64};
  double extractor_dropout = 0.0;
  Index identifier_hidden = 128;
  Index identifier_output = 128;
  double identifier_dropout = 0.5;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  DgrSign dgr_sign = DgrSign::Suppression;
  double fixed_lambda = 1.0;  // reversal strength of the asif_fixed method

  // analyses
  bool detect = true;
  bool probe = false;
  bool prune = false;
  ProbeOptions probe_options;
  PruningOptions prune_options;

  bool uses_identifier() const { return method == Method::ASIF || method == Method::ASIFFixed; }
  LossKind loss_kind() const;
  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field, one per line, in a fixed order; parse_config inverts it.
std::string serialize_config(const ExperimentConfig& config);

/// Applies `key = value` to a config, as the file parser does.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

std::string to_string(Method m);
std::string to_string(NoiseKind k);

}  // namespace asif
