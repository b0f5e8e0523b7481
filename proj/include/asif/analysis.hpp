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

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "asif/data.hpp"

namespace asif {

/// Feature vectors of a frozen extractor, one row per sample.
struct FrozenFeatures {
  std::vector<SampleId> ids;
  Matrix values;
};

/// CSV: sample_id,f0,...,f{F-1} with a header row.
void write_features_csv(const FrozenFeatures& features, const std::filesystem::path& path);
FrozenFeatures read_features_csv(const std::filesystem::path& path);

/// CSV: sample_id,label with a header row. read_labels_csv also accepts a
/// noise ledger, taking its true_label column.
void write_labels_csv(const std::vector<SampleId>& ids, std::span<const int> labels, const std::filesystem::path& path);
std::map<SampleId, int> read_labels_csv(const std::filesystem::path& path);

struct ProbeOptions {
  int patience = 10;
  int max_epochs = 500;
  double lr = 0.05;
  double min_improvement = 1e-6;
};

struct ProbeReport {
  double best_loss = 0.0;
  int epochs_run = 0;
  std::vector<double> curve;  // training loss per epoch
};

/// Single linear layer F -> N trained with cross entropy to recover each
/// sample's identity from its frozen features (zero init, full-batch Adam).
/// Stops after `patience` epochs without improvement.
ProbeReport identity_probe(const Matrix& features, const ProbeOptions& options = {});

struct PruningSchedule {
  double drop_fraction = 0.1;  // of the remaining dims, at least one
  Index fixed_drop = 0;        // when > 0, drop exactly this many per step
  Index min_dims = 5;
};

struct PruningOptions {
  PruningSchedule schedule;
  int patience = 10;
  int max_epochs = 300;
  double lr = 0.05;
};

struct PruningStep {
  Index retained_dims = 0;
  double best_accuracy = 0.0;
  std::vector<Index> retained;  // original dimension indices, ascending
};

struct PruningCurve {
  std::vector<PruningStep> steps;
};

/// Repeatedly trains a fresh linear classifier on the retained dims, records
/// its best eval accuracy, scores each dim by the L1 norm of its weights
/// across classes and drops the lowest-scoring dims until min_dims remain.
PruningCurve feature_pruning_curve(const Matrix& train_features, std::span<const int> train_labels,
                                   const Matrix& eval_features, std::span<const int> eval_labels, int num_classes,
                                   const PruningOptions& options = {});

}  // namespace asif
