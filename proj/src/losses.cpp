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

#include "asif/losses.hpp"

#include <string>

namespace asif {

LossKind LossKind::gce(double q) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("GCE q must lie in (0, 1], got " + std::to_string(q));
  return {Tag::GCE, q, 10.0};
}

LossKind LossKind::phuber(double tau) {
  if (!(tau > 1.0) || !std::isfinite(tau)) throw DomainError("PHuber tau must exceed 1, got " + std::to_string(tau));
  return {Tag::PHuber, 0.7, tau};
}

namespace {

std::vector<double> target_probs(const Matrix& probs, std::span<const int> targets, const char* op) {
  if (static_cast<Index>(targets.size()) != probs.rows() || probs.rows() == 0) {
    throw ShapeError(std::string(op) + ": need one target per row of a nonempty batch");
  }
  std::vector<double> p(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int y = targets[i];
    if (y < 0 || y >= probs.cols()) throw DomainError(std::string(op) + ": target out of range");
    p[i] = probs(static_cast<Index>(i), y);
  }
  return p;
}

// Records mean_i f(p_i) where p_i = probs[i, target_i], with dp given by `slope`.
template <typename Value, typename Slope>
Var target_prob_loss(const char* op, const Var& probs, std::span<const int> targets, Value value,
                     Slope slope) {
  const std::vector<double> p = target_probs(probs.value(), targets, op);
  const double n = static_cast<double>(p.size());
  Matrix out(1, 1);
  out(0, 0) = 0.0;
  for (double pi : p) out(0, 0) += value(pi);
  out(0, 0) /= n;
  std::vector<int> y(targets.begin(), targets.end());
  return probs.tape().record(op, std::move(out), {probs},
                             [probs, p, y = std::move(y), n, slope](Tape& t, const Matrix& g) {
                               Matrix dp = Matrix::Zero(probs.rows(), probs.cols());
                               for (std::size_t i = 0; i < p.size(); ++i) {
                                 dp(static_cast<Index>(i), y[i]) = g(0, 0) * slope(p[i]) / n;
                               }
                               t.accumulate(probs, dp);
                             });
}

}  // namespace

Var gce_loss(const Var& probs, std::span<const int> targets, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("gce_loss: q must lie in (0, 1]");
  return target_prob_loss(
      "gce_loss", probs, targets, [q](double p) { return gce_value(p, q); },
      [q](double p) { return -std::pow(p, q - 1.0); });
}

Var phuber_loss(const Var& probs, std::span<const int> targets, double tau) {
  if (!(tau > 1.0)) throw DomainError("phuber_loss: tau must exceed 1");
  return target_prob_loss(
      "phuber_loss", probs, targets, [tau](double p) { return phuber_value(p, tau); },
      [tau](double p) { return phuber_slope(p, tau); });
}

Var classification_loss(const Var& logits, std::span<const int> targets, const LossKind& kind) {
  switch (kind.tag) {
    case LossKind::Tag::CE:
      return softmax_cross_entropy(logits, targets);
    case LossKind::Tag::GCE:
      return gce_loss(softmax(logits), targets, kind.q);
    case LossKind::Tag::PHuber:
      return phuber_loss(softmax(logits), targets, kind.tau);
  }
  throw Error("unknown loss kind");
}

std::map<int, Var> per_class_identifier_loss(const std::map<int, IdentityBranch>& branches) {
  std::map<int, Var> out;
  for (const auto& [c, branch] : branches) {
    if (branch.targets.empty()) continue;
    out.emplace(c, softmax_cross_entropy(branch.logits, branch.targets));
  }
  return out;
}

namespace {

void check_shares(const std::map<int, double>& shares, const std::vector<int>& keys) {
  if (shares.size() != keys.size()) throw DomainError("combine_asif_losses: share/loss class mismatch");
  double total = 0.0;
  for (int c : keys) {
    auto it = shares.find(c);
    if (it == shares.end()) throw DomainError("combine_asif_losses: no share for class " + std::to_string(c));
    total += it->second;
  }
  if (!keys.empty() && std::abs(total - 1.0) > 1e-9) {
    throw DomainError("combine_asif_losses: shares sum to " + std::to_string(total));
  }
}

}  // namespace

Var combine_asif_losses(const Var& cls_loss, const std::map<int, Var>& id_losses,
                        const std::map<int, double>& shares, double lambda_id) {
  std::vector<int> keys;
  for (const auto& kv : id_losses) keys.push_back(kv.first);
  check_shares(shares, keys);
  Var total = cls_loss;
  for (const auto& [c, loss] : id_losses) {
    total = add(total, scale(loss, lambda_id * shares.at(c)));
  }
  return total;
}

double combine_asif_losses(double cls_loss, const std::map<int, double>& id_losses,
                           const std::map<int, double>& shares, double lambda_id) {
  std::vector<int> keys;
  for (const auto& kv : id_losses) keys.push_back(kv.first);
  check_shares(shares, keys);
  double total = cls_loss;
  for (const auto& [c, loss] : id_losses) total += lambda_id * shares.at(c) * loss;
  return total;
}

ConfusionMatrix::ConfusionMatrix(int num_classes) {
  if (num_classes < 1) throw DomainError("ConfusionMatrix: need at least one class");
  counts_ = Counts::Zero(num_classes, num_classes);
}

ConfusionMatrix::ConfusionMatrix(Counts counts) : counts_(std::move(counts)) {
  if (counts_.rows() != counts_.cols() || counts_.rows() == 0) throw ShapeError("ConfusionMatrix: counts must be square and nonempty");
  if ((counts_.array() < 0).any()) throw DomainError("ConfusionMatrix: negative count");
}

void ConfusionMatrix::add(int true_label, int predicted, std::int64_t count) {
  if (true_label < 0 || true_label >= num_classes() || predicted < 0 || predicted >= num_classes()) {
    throw DomainError("ConfusionMatrix: label out of range");
  }
  counts_(true_label, predicted) += count;
}

double ConfusionMatrix::f1(int c) const {
  const auto tp = static_cast<double>(counts_(c, c));
  const auto fp = static_cast<double>(counts_.col(c).sum()) - tp;
  const auto fn = static_cast<double>(counts_.row(c).sum()) - tp;
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

ConfusionMatrix confusion_from_logits(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) throw ShapeError("confusion_from_logits: label count mismatch");
  ConfusionMatrix cm(static_cast<int>(logits.cols()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index pred = 0;
    logits.row(i).maxCoeff(&pred);
    cm.add(labels[static_cast<std::size_t>(i)], static_cast<int>(pred));
  }
  return cm;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DomainError("macro_f1: empty confusion matrix");
  double acc = 0.0;
  for (int c = 0; c < cm.num_classes(); ++c) acc += cm.f1(c);
  return acc / cm.num_classes();
}

}  // namespace asif
