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
#include <set>
#include <vector>

#include "asif/data.hpp"

namespace asif {

enum class NoiseKind { None, Symmetric, InstanceDependent };

/// Reference classifier trained on clean labels to rank samples by loss.
struct WarmupConfig {
  int epochs = 10;
  double lr = 0.01;
  double momentum = 0.9;
  Index batch_size = 128;
  std::vector<Index> extractor_widths{128, 64};
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
};

struct NoiseRecord {
  SampleId sample_id;
  int true_label;
  int observed_label;
  bool was_flipped;

  friend bool operator==(const NoiseRecord&, const NoiseRecord&) = default;
};

/// Per-sample audit trail of a noise injection, in dataset row order.
struct NoiseLedger {
  std::vector<NoiseRecord> records;

  std::size_t flip_count() const;
  std::vector<int> observed_labels() const;
  friend bool operator==(const NoiseLedger&, const NoiseLedger&) = default;
};

/// round(n * eta), halves rounded up.
std::size_t flip_count_for(std::size_t n, double eta);

/// Ledger with no flips; observed labels copied from `data`.
NoiseLedger clean_ledger(const Dataset& data);
/// New dataset whose observed labels come from the ledger.
Dataset apply_ledger(const Dataset& data, const NoiseLedger& ledger);

/// Flips round(N eta) distinct samples chosen uniformly; each new label is
/// uniform over the C-1 classes other than the true one.
NoiseLedger inject_symmetric(const Dataset& data, double eta, RngStream& rng);

struct LossRanking {
  std::vector<SampleId> order;  // descending average loss, ties by id
  std::map<SampleId, double> average_loss;
};

/// Trains a fresh CE classifier on true labels for warmup.epochs, averages
/// every sample's per-epoch loss and sorts descending.
LossRanking rank_samples_by_loss(const Dataset& data, const WarmupConfig& warmup);

/// Flips the top round(N eta) samples of rank_samples_by_loss.
NoiseLedger inject_instance_dependent(const Dataset& data, double eta, const WarmupConfig& warmup, RngStream& rng);

/// IDs of the round(N eta) largest losses; ties by id ascending.
std::set<SampleId> detect_noisy(const std::map<SampleId, double>& losses, double eta);

struct DetectionMetrics {
  double f1 = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Binary scores of `flagged` against the ledger's was_flipped column. F1 is
/// 0 when it is undefined; balanced accuracy averages the rates that exist.
DetectionMetrics detection_metrics(const std::set<SampleId>& flagged, const NoiseLedger& ledger);

/// CSV: sample_id,true_label,observed_label,was_flipped (header included).
void write_ledger_csv(const NoiseLedger& ledger, const std::filesystem::path& path);
NoiseLedger read_ledger_csv(const std::filesystem::path& path);

/// CSV: sample_id,loss (header included).
void write_losses_csv(const std::map<SampleId, double>& losses, const std::filesystem::path& path);
std::map<SampleId, double> read_losses_csv(const std::filesystem::path& path);

}  // namespace asif
