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

#include "asif/noise.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "asif/training.hpp"

namespace asif {

std::size_t NoiseLedger::flip_count() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const NoiseRecord& r) { return r.was_flipped; }));
}

std::vector<int> NoiseLedger::observed_labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.observed_label);
  return out;
}

std::size_t flip_count_for(std::size_t n, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("noise: eta must lie in [0, 1], got " + std::to_string(eta));
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * eta + 0.5));
}

NoiseLedger clean_ledger(const Dataset& data) {
  NoiseLedger ledger;
  for (Index i = 0; i < data.size(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    ledger.records.push_back({data.ids()[r], data.true_labels()[r], data.observed_labels()[r], false});
  }
  return ledger;
}

Dataset apply_ledger(const Dataset& data, const NoiseLedger& ledger) {
  std::vector<int> observed = data.observed_labels();
  for (const auto& rec : ledger.records) {
    const Index row = data.row_of(rec.sample_id);
    if (data.true_labels()[static_cast<std::size_t>(row)] != rec.true_label) {
      throw DomainError("apply_ledger: true label mismatch for sample " + std::to_string(rec.sample_id));
    }
    observed[static_cast<std::size_t>(row)] = rec.observed_label;
  }
  return data.with_observed_labels(std::move(observed));
}

namespace {

int other_class(int true_label, int classes, RngStream& rng) {
  const int draw = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes - 1)));
  return draw < true_label ? draw : draw + 1;
}

// Flips the given rows (in the given order) to uniformly chosen other classes.
NoiseLedger flip_rows(const Dataset& data, const std::vector<Index>& rows, RngStream& rng) {
  NoiseLedger ledger;
  for (Index i = 0; i < data.size(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    ledger.records.push_back({data.ids()[r], data.true_labels()[r], data.true_labels()[r], false});
  }
  for (Index row : rows) {
    auto& rec = ledger.records[static_cast<std::size_t>(row)];
    rec.observed_label = other_class(rec.true_label, data.num_classes(), rng);
    rec.was_flipped = true;
  }
  return ledger;
}

}  // namespace

NoiseLedger inject_symmetric(const Dataset& data, double eta, RngStream& rng) {
  const std::size_t k = flip_count_for(static_cast<std::size_t>(data.size()), eta);
  if (k > 0 && data.num_classes() < 2) throw DomainError("inject_symmetric: need at least 2 classes to flip labels");
  std::vector<Index> rows;
  for (std::size_t r : rng.sample_without_replacement(static_cast<std::size_t>(data.size()), k)) rows.push_back(static_cast<Index>(r));
  return flip_rows(data, rows, rng);
}

LossRanking rank_samples_by_loss(const Dataset& data, const WarmupConfig& warmup) {
  if (data.size() == 0) throw DomainError("rank_samples_by_loss: empty dataset");
  if (warmup.epochs < 1) throw DomainError("rank_samples_by_loss: warmup epochs must be >= 1");

  ModelConfig cfg;
  cfg.input_dim = data.feature_dim();
  cfg.num_classes = data.num_classes();
  cfg.extractor_widths = warmup.extractor_widths;
  cfg.bn_eps = warmup.bn_eps;
  cfg.bn_momentum = warmup.bn_momentum;
  cfg.with_identifier = false;

  const RngStream root(warmup.seed);
  AsifModel model(cfg, warmup.seed);
  std::vector<DgrState> no_dgr;
  Sgd sgd(warmup.lr, warmup.momentum);
  BatchIterator batches(data.size(), warmup.batch_size, root.derive(11));
  RngStream jitter = root.derive(12);
  StepOptions opts;

  std::map<SampleId, double> total;
  for (int e = 0; e < warmup.epochs; ++e) {
    train_epoch(model, no_dgr, sgd, data, nullptr, batches, jitter, opts, LabelSource::True);
    for (const auto& [id, loss] : per_sample_losses(model, data, LabelSource::True)) total[id] += loss;
  }

  LossRanking ranking;
  for (auto& [id, sum] : total) {
    ranking.average_loss.emplace(id, sum / warmup.epochs);
    ranking.order.push_back(id);
  }
  std::stable_sort(ranking.order.begin(), ranking.order.end(), [&](SampleId a, SampleId b) {
    const double la = ranking.average_loss.at(a);
    const double lb = ranking.average_loss.at(b);
    return la != lb ? la > lb : a < b;
  });
  return ranking;
}

NoiseLedger inject_instance_dependent(const Dataset& data, double eta, const WarmupConfig& warmup, RngStream& rng) {
  const std::size_t k = flip_count_for(static_cast<std::size_t>(data.size()), eta);
  if (k == 0) return flip_rows(data, {}, rng);
  if (data.num_classes() < 2) throw DomainError("inject_instance_dependent: need at least 2 classes to flip labels");
  const LossRanking ranking = rank_samples_by_loss(data, warmup);
  std::vector<Index> rows;
  for (std::size_t i = 0; i < k; ++i) rows.push_back(data.row_of(ranking.order[i]));
  return flip_rows(data, rows, rng);
}

std::set<SampleId> detect_noisy(const std::map<SampleId, double>& losses, double eta) {
  const std::size_t k = flip_count_for(losses.size(), eta);
  std::vector<std::pair<SampleId, double>> items(losses.begin(), losses.end());
  for (const auto& [id, l] : items) {
    if (!std::isfinite(l)) throw NumericError("detect_noisy: non-finite loss for sample " + std::to_string(id));
  }
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::set<SampleId> flagged;
  for (std::size_t i = 0; i < k; ++i) flagged.insert(items[i].first);
  return flagged;
}

DetectionMetrics detection_metrics(const std::set<SampleId>& flagged, const NoiseLedger& ledger) {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  std::set<SampleId> known;
  for (const auto& rec : ledger.records) {
    known.insert(rec.sample_id);
    const bool f = flagged.contains(rec.sample_id);
    if (rec.was_flipped) {
      (f ? tp : fn) += 1;
    } else {
      (f ? fp : tn) += 1;
    }
  }
  for (SampleId id : flagged) {
    if (!known.contains(id)) throw DomainError("detection_metrics: flagged id " + std::to_string(id) + " not in ledger");
  }
  DetectionMetrics m;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  double rates = 0.0;
  int terms = 0;
  if (tp + fn > 0) {
    rates += tp / (tp + fn);
    ++terms;
  }
  if (tn + fp > 0) {
    rates += tn / (tn + fp);
    ++terms;
  }
  m.balanced_accuracy = terms > 0 ? rates / terms : 0.0;
  return m;
}

// ---------------------------------------------------------------------------

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

bool parse_bool(const std::string& s, std::uint64_t line) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw ParseError("expected boolean, got '" + s + "'", line);
}

}  // namespace

void write_ledger_csv(const NoiseLedger& ledger, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id,true_label,observed_label,was_flipped\n";
  for (const auto& r : ledger.records) {
    out << r.sample_id << ',' << r.true_label << ',' << r.observed_label << ',' << (r.was_flipped ? 1 : 0) << '\n';
  }
}

NoiseLedger read_ledger_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::uint64_t lineno = 1;
  if (!std::getline(in, line) || line.rfind("sample_id,true_label,observed_label,was_flipped", 0) != 0) {
    throw ParseError("ledger: missing header", 1);
  }
  NoiseLedger ledger;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != 4) throw ParseError("ledger: expected 4 columns", lineno);
    NoiseRecord r{parse_cell<SampleId>(cells[0], lineno), parse_cell<int>(cells[1], lineno),
                  parse_cell<int>(cells[2], lineno), parse_bool(cells[3], lineno)};
    if (r.was_flipped && r.true_label == r.observed_label) throw ParseError("ledger: flipped record keeps its label", lineno);
    ledger.records.push_back(r);
  }
  return ledger;
}

void write_losses_csv(const std::map<SampleId, double>& losses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id,loss\n" << std::setprecision(17);
  for (const auto& [id, l] : losses) out << id << ',' << l << '\n';
}

std::map<SampleId, double> read_losses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::uint64_t lineno = 1;
  if (!std::getline(in, line) || line.rfind("sample_id,loss", 0) != 0) throw ParseError("losses: missing header", 1);
  std::map<SampleId, double> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != 2) throw ParseError("losses: expected 2 columns", lineno);
    if (!out.emplace(parse_cell<SampleId>(cells[0], lineno), parse_cell<double>(cells[1], lineno)).second) {
      throw ParseError("losses: duplicate sample id", lineno);
    }
  }
  return out;
}

}  // namespace asif
