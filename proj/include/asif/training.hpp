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

#include <map>
#include <vector>

#include "asif/data.hpp"
#include "asif/model.hpp"

namespace asif {

enum class LabelSource { Observed, True };

struct EpochSummary {
  double classification_loss = 0.0;  // batch-size weighted mean over the epoch
  double total_loss = 0.0;
  std::map<int, double> id_losses;   // per class, weighted by rows routed to it
  std::vector<double> lambdas;       // per-head lambda at the end of the epoch
};

/// Runs one epoch of asif_training_step over `data`. `registry` may be null
/// for models without an identifier. Training batches receive the
/// dataset's jitter from `jitter_rng`.
EpochSummary train_epoch(AsifModel& model, std::vector<DgrState>& dgr, Sgd& optimizer, const Dataset& data,
                         const IdentityRegistry* registry, BatchIterator& batches, RngStream& jitter_rng,
                         const StepOptions& options, LabelSource labels = LabelSource::Observed);

/// Eval-mode cross entropy of every sample, keyed by sample id.
std::map<SampleId, double> per_sample_losses(AsifModel& model, const Dataset& data, LabelSource labels);

/// Eval-mode macro F1 of the classifier against the chosen labels.
double evaluate_macro_f1(AsifModel& model, const Dataset& data, LabelSource labels);

}  // namespace asif
