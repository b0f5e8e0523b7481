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

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asif/tensor.hpp"

namespace asif {

/// Classification loss applied to the classifier logits.
struct LossKind {
  enum class Tag { CE, GCE, PHuber };
  Tag tag = Tag::CE;
  double q = 0.7;     // GCE exponent, (0, 1]
  double tau = 10.0;  // PHuber clipping threshold, > 1

  static LossKind ce() { return {}; }
  static LossKind gce(double q);
  static LossKind phuber(double tau);

  friend bool operator==(const LossKind&, const LossKind&) = default;
};

// Scalar forms, shared by the recorded ops and by tests/evaluation code.

/// (1 - p^q) / q, as -expm1(q log p) / q so small q does not cancel.
template <typename Scalar>
Scalar gce_value(Scalar p, Scalar q) {
  using std::expm1;
  using std::log;
  return -expm1(q * log(p)) / q;
}

/// -tau p + log(tau) + 1 for p <= 1/tau, else -log(p).
template <typename Scalar>
Scalar phuber_value(Scalar p, Scalar tau) {
  using std::log;
  return p <= Scalar(1) / tau ? -tau * p + log(tau) + Scalar(1) : -log(p);
}

/// d/dp of phuber_value; bounded by tau in magnitude.
template <typename Scalar>
Scalar phuber_slope(Scalar p, Scalar tau) {
  return p <= Scalar(1) / tau ? -tau : -Scalar(1) / p;
}

/// Mean generalized cross entropy over rows of `probs`.
Var gce_loss(const Var& probs, std::span<const int> targets, double q);
/// Mean partially Huberised cross entropy over rows of `probs`.
Var phuber_loss(const Var& probs, std::span<const int> targets, double tau);
/// CE consumes logits; GCE and PHuber go through softmax first.
Var classification_loss(const Var& logits, std::span<const int> targets, const LossKind& kind);

/// Identity logits and within-class targets for one private head.
struct IdentityBranch {
  Var logits;                     // [B_c, N_c]
  std::vector<int> targets;       // within-class identity indices
  std::vector<Index> batch_rows;  // rows of the mini-batch routed here
};

/// Cross entropy per head over within-class identity targets. Heads absent
/// from `branches` are absent from the result.
std::map<int, Var> per_class_identifier_loss(const std::map<int, IdentityBranch>& branches);

/// cls + lambda_id * sum_c share_c * id_c. `shares` must have exactly the
/// keys of `id_losses` and sum to 1.
Var combine_asif_losses(const Var& cls_loss, const std::map<int, Var>& id_losses,
                        const std::map<int, double>& shares, double lambda_id);
double combine_asif_losses(double cls_loss, const std::map<int, double>& id_losses,
                           const std::map<int, double>& shares, double lambda_id);

/// Counts with rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionMatrix(int num_classes);
  explicit ConfusionMatrix(Counts counts);

  void add(int true_label, int predicted, std::int64_t count = 1);
  int num_classes() const { return static_cast<int>(counts_.rows()); }
  std::int64_t total() const { return counts_.sum(); }
  const Counts& counts() const { return counts_; }

  /// 2TP / (2TP + FP + FN); 0 when the class has no support and no predictions.
  double f1(int c) const;

 private:
  Counts counts_;
};

ConfusionMatrix confusion_from_logits(const Matrix& logits, std::span<const int> labels);

/// Unweighted mean of per-class F1.
double macro_f1(const ConfusionMatrix& cm);

}  // namespace asif
