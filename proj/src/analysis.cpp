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

#include "asif/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>

#include "asif/nn.hpp"

namespace asif {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

template <typename T>
T parse_cell(const std::string& s, std::uint64_t line) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("cannot parse '" + s + "'", line);
  return v;
}

/// Zero-initialised softmax regression trained full-batch with Adam.
class LinearProbe {
 public:
  LinearProbe(Index in, Index classes, double lr)
      : weight_(Matrix::Zero(in, classes), true), bias_(Matrix::Zero(1, classes), true), adam_(lr) {}

  /// Loss before the update.
  double step(const Matrix& x, std::span<const int> targets) {
    Tape tape;
    Var logits = add_rowwise(matmul(tape.constant(x), tape.parameter(weight_)), tape.parameter(bias_));
    Var loss = softmax_cross_entropy(logits, targets);
    const double value = loss.item();
    tape.backward(loss);
    Tensor* params[] = {&weight_, &bias_};
    adam_.step(params);
    return value;
  }

  Matrix logits(const Matrix& x) const { return (x * weight_.data).rowwise() + bias_.data.row(0); }
  const Matrix& weight() const { return weight_.data; }

 private:
  Tensor weight_;
  Tensor bias_;
  Adam adam_;
};

double accuracy(const Matrix& logits, std::span<const int> labels) {
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index pred = 0;
    logits.row(i).maxCoeff(&pred);
    correct += pred == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

void write_features_csv(const FrozenFeatures& features, const std::filesystem::path& path) {
  if (static_cast<Index>(features.ids.size()) != features.values.rows()) throw ShapeError("features: id count mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id";
  for (Index j = 0; j < features.values.cols(); ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < features.values.rows(); ++i) {
    out << features.ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < features.values.cols(); ++j) out << ',' << features.values(i, j);
    out << '\n';
  }
}

FrozenFeatures read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id", 0) != 0) throw ParseError("features: missing header", 1);
  const std::size_t width = split_line(line).size() - 1;
  if (width == 0) throw ParseError("features: no feature columns", 1);
  std::vector<SampleId> ids;
  std::vector<double> flat;
  std::uint64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != width + 1) throw ParseError("features: ragged row", lineno);
    ids.push_back(parse_cell<SampleId>(cells[0], lineno));
    for (std::size_t k = 1; k < cells.size(); ++k) flat.push_back(parse_cell<double>(cells[k], lineno));
  }
  FrozenFeatures f;
  f.values = Eigen::Map<Matrix>(flat.data(), static_cast<Index>(ids.size()), static_cast<Index>(width));
  f.ids = std::move(ids);
  return f;
}

void write_labels_csv(const std::vector<SampleId>& ids, std::span<const int> labels, const std::filesystem::path& path) {
  if (ids.size() != labels.size()) throw ShapeError("labels: id count mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << labels[i] << '\n';
}

std::map<SampleId, int> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("labels: empty file", 1);
  const auto header = split_line(line);
  std::size_t column = 0;
  if (header.size() == 2 && header[0] == "sample_id" && header[1] == "label") {
    column = 1;
  } else if (header.size() == 4 && header[0] == "sample_id" && header[1] == "true_label") {
    column = 1;
  } else {
    throw ParseError("labels: expected 'sample_id,label' or a noise ledger header", 1);
  }
  std::map<SampleId, int> out;
  std::uint64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) throw ParseError("labels: ragged row", lineno);
    out[parse_cell<SampleId>(cells[0], lineno)] = parse_cell<int>(cells[column], lineno);
  }
  return out;
}

ProbeReport identity_probe(const Matrix& features, const ProbeOptions& options) {
  if (features.rows() == 0) throw DomainError("identity_probe: empty feature set");
  check_finite(features, "identity_probe features");
  ProbeReport report;
  const Index n = features.rows();
  if (n == 1) {
    report.curve.push_back(0.0);
    report.epochs_run = 1;
    return report;
  }
  std::vector<int> targets(static_cast<std::size_t>(n));
  std::iota(targets.begin(), targets.end(), 0);

  LinearProbe probe(features.cols(), n, options.lr);
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    const double loss = probe.step(features, targets);
    report.curve.push_back(loss);
    ++report.epochs_run;
    if (loss < best - options.min_improvement) {
      best = loss;
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  report.best_loss = *std::min_element(report.curve.begin(), report.curve.end());
  return report;
}

PruningCurve feature_pruning_curve(const Matrix& train_features, std::span<const int> train_labels,
                                   const Matrix& eval_features, std::span<const int> eval_labels, int num_classes,
                                   const PruningOptions& options) {
  const PruningSchedule& sched = options.schedule;
  if (sched.min_dims < 1) throw DomainError("pruning: min_dims must be positive");
  if (train_features.cols() < sched.min_dims) {
    throw DomainError("pruning: need at least " + std::to_string(sched.min_dims) + " feature dims");
  }
  if (eval_features.cols() != train_features.cols()) throw ShapeError("pruning: train/eval widths differ");
  if (static_cast<Index>(train_labels.size()) != train_features.rows() ||
      static_cast<Index>(eval_labels.size()) != eval_features.rows() || train_features.rows() == 0 ||
      eval_features.rows() == 0) {
    throw ShapeError("pruning: need one label per (nonempty) feature row");
  }
  if (sched.fixed_drop <= 0 && !(sched.drop_fraction > 0.0 && sched.drop_fraction < 1.0)) {
    throw DomainError("pruning: drop_fraction must lie in (0, 1)");
  }

  std::vector<Index> retained(static_cast<std::size_t>(train_features.cols()));
  std::iota(retained.begin(), retained.end(), Index{0});

  PruningCurve curve;
  while (true) {
    const Matrix xt = train_features(Eigen::all, retained);
    const Matrix xe = eval_features(Eigen::all, retained);
    LinearProbe clf(xt.cols(), num_classes, options.lr);
    double best_loss = std::numeric_limits<double>::infinity();
    double best_acc = 0.0;
    int stale = 0;
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
      const double loss = clf.step(xt, train_labels);
      best_acc = std::max(best_acc, accuracy(clf.logits(xe), eval_labels));
      if (loss < best_loss - 1e-6) {
        best_loss = loss;
        stale = 0;
      } else if (++stale >= options.patience) {
        break;
      }
    }
    curve.steps.push_back({static_cast<Index>(retained.size()), best_acc, retained});

    const auto remaining = static_cast<Index>(retained.size());
    if (remaining <= sched.min_dims) break;
    const Index drop = sched.fixed_drop > 0
                           ? sched.fixed_drop
                           : std::max<Index>(1, static_cast<Index>(std::floor(static_cast<double>(remaining) * sched.drop_fraction)));
    const Index keep = std::max(sched.min_dims, remaining - drop);

    // Importance: L1 norm of each dim's weight row across classes.
    const Vector score = clf.weight().cwiseAbs().rowwise().sum();
    std::vector<Index> order(retained.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return score(a) > score(b); });
    std::vector<Index> next;
    for (Index k = 0; k < keep; ++k) next.push_back(retained[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
    std::sort(next.begin(), next.end());
    retained = std::move(next);
  }
  return curve;
}

}  // namespace asif
