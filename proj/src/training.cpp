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

#include "asif/training.hpp"

namespace asif {

namespace {

const std::vector<int>& pick_labels(const Dataset& data, LabelSource labels) {
  return labels == LabelSource::True ? data.true_labels() : data.observed_labels();
}

}  // namespace

EpochSummary train_epoch(AsifModel& model, std::vector<DgrState>& dgr, Sgd& optimizer, const Dataset& data,
                         const IdentityRegistry* registry, BatchIterator& batches, RngStream& jitter_rng,
                         const StepOptions& options, LabelSource labels) {
  if (model.has_identifier() && registry == nullptr) throw DomainError("train_epoch: identifier needs a registry");
  const std::vector<int>& y = pick_labels(data, labels);
  EpochSummary summary;
  std::map<int, double> id_rows;
  double seen = 0.0;
  for (const auto& rows : batches.next_epoch()) {
    const Matrix x = assemble_batch(data, rows, &jitter_rng);
    std::vector<int> batch_labels;
    std::vector<int> identity;
    for (Index r : rows) {
      batch_labels.push_back(y[static_cast<std::size_t>(r)]);
      if (registry != nullptr) identity.push_back(registry->at_row(r).index);
    }
    const StepReport rep = asif_training_step(model, dgr, optimizer, x, batch_labels, identity, options);
    const double b = static_cast<double>(rows.size());
    summary.classification_loss += b * rep.classification_loss;
    summary.total_loss += b * rep.total_loss;
    for (const auto& [c, loss] : rep.id_losses) {
      const double bc = rep.shares.at(c) * b;
      summary.id_losses[c] += bc * loss;
      id_rows[c] += bc;
    }
    seen += b;
  }
  summary.classification_loss /= seen;
  summary.total_loss /= seen;
  for (auto& [c, v] : summary.id_losses) v /= id_rows[c];
  for (const DgrState& s : dgr) summary.lambdas.push_back(s.lambda);
  return summary;
}

std::map<SampleId, double> per_sample_losses(AsifModel& model, const Dataset& data, LabelSource labels) {
  const Vector losses = cross_entropy_per_sample(predict_logits(model, data.features()), pick_labels(data, labels));
  std::map<SampleId, double> out;
  for (Index i = 0; i < data.size(); ++i) out.emplace(data.ids()[static_cast<std::size_t>(i)], losses(i));
  return out;
}

double evaluate_macro_f1(AsifModel& model, const Dataset& data, LabelSource labels) {
  return macro_f1(confusion_from_logits(predict_logits(model, data.features()), pick_labels(data, labels)));
}

}  // namespace asif
