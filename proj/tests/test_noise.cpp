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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include <unistd.h>

#include "asif/noise.hpp"

using namespace asif;

namespace {

Dataset labels_only(std::size_t n, int classes, std::uint64_t seed = 0) {
  RngStream rng(seed);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
  return Dataset::from_labels(Matrix::Zero(static_cast<Index>(n), 1), std::move(labels), classes);
}

/// Two well-separated 2-d Gaussian blobs, 40 per class.
Matrix blobs(std::vector<int>& labels, std::uint64_t seed) {
  RngStream rng(seed);
  Matrix x(80, 2);
  labels.assign(80, 0);
  for (Index i = 0; i < 80; ++i) {
    const int c = i < 40 ? 0 : 1;
    labels[static_cast<std::size_t>(i)] = c;
    x(i, 0) = (c == 0 ? -3.0 : 3.0) + 0.5 * rng.normal();
    x(i, 1) = 0.5 * rng.normal();
  }
  return x;
}

Dataset blob_dataset(std::uint64_t seed) {
  std::vector<int> labels;
  Matrix x = blobs(labels, seed);
  return Dataset::from_labels(std::move(x), std::move(labels), 2);
}

WarmupConfig small_warmup(int epochs = 20) {
  WarmupConfig w;
  w.epochs = epochs;
  w.lr = 0.05;
  w.batch_size = 16;
  w.extractor_widths = {16, 8};
  w.seed = 3;
  return w;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("asif_noise_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(FlipCount, RoundsHalfUp) {
  EXPECT_EQ(flip_count_for(10, 0.25), 3u);
  EXPECT_EQ(flip_count_for(10, 0.24), 2u);
  EXPECT_EQ(flip_count_for(7, 0.0), 0u);
  EXPECT_EQ(flip_count_for(7, 1.0), 7u);
  EXPECT_THROW(flip_count_for(7, 1.1), DomainError);
  EXPECT_THROW(flip_count_for(7, -0.1), DomainError);
}

TEST(Symmetric, ZeroEtaLeavesLabelsUnchanged) {
  const Dataset data = labels_only(100, 10);
  RngStream rng(1);
  const NoiseLedger ledger = inject_symmetric(data, 0.0, rng);
  EXPECT_EQ(ledger.flip_count(), 0u);
  EXPECT_EQ(ledger.observed_labels(), data.true_labels());
}

TEST(Symmetric, FiftyThousandAtEightyPercentFlipsFortyThousand) {
  const Dataset data = labels_only(50000, 10);
  RngStream rng(2);
  EXPECT_EQ(inject_symmetric(data, 0.8, rng).flip_count(), 40000u);
}

TEST(Symmetric, FlipCountsOnTheNoiseGrid) {
  for (std::size_t n : {97u, 1000u, 1234u}) {
    const Dataset data = labels_only(n, 10, n);
    for (double eta : {0.0, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9}) {
      RngStream rng(n);
      const NoiseLedger ledger = inject_symmetric(data, eta, rng);
      const auto expected = static_cast<std::size_t>(std::floor(static_cast<double>(n) * eta + 0.5));
      EXPECT_EQ(ledger.flip_count(), expected) << n << " " << eta;
    }
  }
}

TEST(Symmetric, FlipsNeverSelfMap) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset data = labels_only(500, 2 + static_cast<int>(seed % 9), seed);
    RngStream rng(seed);
    const NoiseLedger ledger = inject_symmetric(data, 0.9, rng);
    for (const auto& rec : ledger.records) {
      EXPECT_EQ(rec.was_flipped, rec.observed_label != rec.true_label);
      EXPECT_EQ(rec.true_label, data.true_labels()[static_cast<std::size_t>(data.row_of(rec.sample_id))]);
    }
  }
}

// Pearson chi-square over the C - 1 possible targets of a flip, 10^4 flips.
TEST(Symmetric, NewLabelsAreUniformOverOtherClasses) {
  const int classes = 10;
  const Dataset data = labels_only(12500, classes, 4);
  RngStream rng(5);
  const NoiseLedger ledger = inject_symmetric(data, 0.8, rng);
  ASSERT_EQ(ledger.flip_count(), 10000u);
  std::vector<double> counts(classes - 1, 0.0);
  for (const auto& rec : ledger.records) {
    if (!rec.was_flipped) continue;
    const int offset = (rec.observed_label - rec.true_label + classes) % classes;  // 1..C-1
    counts[static_cast<std::size_t>(offset - 1)] += 1.0;
  }
  const double expected = 10000.0 / (classes - 1);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with 8 degrees of freedom.
  EXPECT_LT(chi2, 20.090);
}

TEST(Symmetric, NeedsTwoClassesToFlip) {
  const Dataset data = Dataset::from_labels(Matrix::Zero(4, 1), {0, 0, 0, 0}, 1);
  RngStream rng(6);
  EXPECT_THROW(inject_symmetric(data, 0.5, rng), DomainError);
  EXPECT_EQ(inject_symmetric(data, 0.0, rng).flip_count(), 0u);
}

TEST(Ranking, OrderIsDescendingAverageLossWithIdTieBreak) {
  const Dataset data = blob_dataset(7);
  const LossRanking ranking = rank_samples_by_loss(data, small_warmup(1));
  ASSERT_EQ(ranking.order.size(), 80u);
  for (std::size_t i = 1; i < ranking.order.size(); ++i) {
    const double prev = ranking.average_loss.at(ranking.order[i - 1]);
    const double cur = ranking.average_loss.at(ranking.order[i]);
    EXPECT_TRUE(prev > cur || (prev == cur && ranking.order[i - 1] < ranking.order[i]));
  }
}

TEST(Ranking, ContradictoryLabelOutranksDuplicateOfEasySample) {
  std::vector<int> labels;
  Matrix x = blobs(labels, 8);
  // row 78: a duplicate of the easy class-0 sample 0; row 79: a point deep in
  // class 0 labelled 1.
  x.row(78) = x.row(0);
  labels[78] = 0;
  x.row(79) << -3.0, 0.0;
  labels[79] = 1;
  const Dataset data = Dataset::from_labels(x, labels, 2);
  const LossRanking ranking = rank_samples_by_loss(data, small_warmup());
  const auto pos = [&](SampleId id) { return std::find(ranking.order.begin(), ranking.order.end(), id) - ranking.order.begin(); };
  EXPECT_EQ(pos(79), 0);
  EXPECT_GT(pos(78), pos(79));
}

TEST(Ranking, DeterministicUnderFixedSeed) {
  const Dataset data = blob_dataset(9);
  const LossRanking a = rank_samples_by_loss(data, small_warmup(3));
  const LossRanking b = rank_samples_by_loss(data, small_warmup(3));
  EXPECT_EQ(a.order, b.order);
  EXPECT_EQ(a.average_loss, b.average_loss);
}

TEST(Ranking, RejectsEmptyDatasetAndZeroEpochs) {
  const Dataset empty = Dataset::from_labels(Matrix::Zero(0, 2), {}, 2);
  EXPECT_THROW(rank_samples_by_loss(empty, small_warmup()), DomainError);
  const Dataset data = blob_dataset(1);
  EXPECT_THROW(rank_samples_by_loss(data, small_warmup(0)), DomainError);
}

TEST(InstanceDependent, ZeroEtaFlipsNothing) {
  const Dataset data = blob_dataset(10);
  RngStream rng(1);
  EXPECT_EQ(inject_instance_dependent(data, 0.0, small_warmup(), rng).flip_count(), 0u);
}

TEST(InstanceDependent, FlipsExactlyTheTopOfTheRanking) {
  const Dataset data = blob_dataset(11);
  const LossRanking ranking = rank_samples_by_loss(data, small_warmup());
  RngStream rng(2);
  const NoiseLedger ledger = inject_instance_dependent(data, 0.3, small_warmup(), rng);
  std::set<SampleId> flipped, top(ranking.order.begin(), ranking.order.begin() + 24);
  for (const auto& rec : ledger.records) {
    if (rec.was_flipped) {
      flipped.insert(rec.sample_id);
      EXPECT_NE(rec.observed_label, rec.true_label);
    }
  }
  EXPECT_EQ(flipped, top);
}

TEST(InstanceDependent, FindsPlantedAmbiguousSamples) {
  std::vector<int> labels;
  Matrix x = blobs(labels, 12);
  // Ten samples moved onto the other class's blob, label kept.
  std::set<SampleId> planted;
  RngStream rng(13);
  for (Index i = 0; i < 10; ++i) {
    const Index row = i < 5 ? i : 40 + i;
    x(row, 0) = -x(row, 0);
    planted.insert(row);
  }
  const Dataset data = Dataset::from_labels(x, labels, 2);
  const NoiseLedger ledger = inject_instance_dependent(data, 10.0 / 80.0, small_warmup(), rng);
  int hits = 0;
  for (const auto& rec : ledger.records) hits += rec.was_flipped && planted.contains(rec.sample_id);
  EXPECT_EQ(ledger.flip_count(), 10u);
  EXPECT_GE(hits, 8);
}

TEST(InstanceDependent, DeterministicFunctionOfInputs) {
  const Dataset data = blob_dataset(14);
  RngStream a(15), b(15);
  EXPECT_EQ(inject_instance_dependent(data, 0.4, small_warmup(), a),
            inject_instance_dependent(data, 0.4, small_warmup(), b));
}

TEST(Detect, EtaOneFlagsEverything) {
  const std::map<SampleId, double> losses{{0, 1.0}, {1, 2.0}, {2, 3.0}};
  EXPECT_EQ(detect_noisy(losses, 1.0).size(), 3u);
}

TEST(Detect, TopKByLoss) {
  const std::map<SampleId, double> losses{{0, 5.0}, {1, 1.0}, {2, 4.0}, {3, 2.0}};
  EXPECT_EQ(detect_noisy(losses, 0.5), (std::set<SampleId>{0, 2}));
}

TEST(Detect, TiesBreakTowardSmallerId) {
  const std::map<SampleId, double> losses{{4, 1.0}, {9, 1.0}, {2, 1.0}, {7, 0.5}};
  EXPECT_EQ(detect_noisy(losses, 0.5), (std::set<SampleId>{2, 4}));
}

TEST(Detect, OracleLossesGivePerfectF1) {
  const Dataset data = labels_only(200, 5, 16);
  RngStream rng(17);
  const NoiseLedger ledger = inject_symmetric(data, 0.3, rng);
  std::map<SampleId, double> losses;
  for (const auto& rec : ledger.records) losses[rec.sample_id] = rec.was_flipped ? 10.0 : 0.0;
  const DetectionMetrics m = detection_metrics(detect_noisy(losses, 0.3), ledger);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.balanced_accuracy, 1.0);
}

TEST(Detect, ScaleInvariant) {
  RngStream rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    std::map<SampleId, double> losses, scaled;
    const double factor = std::exp(rng.uniform(-5.0, 5.0));
    for (SampleId id = 0; id < 100; ++id) {
      losses[id] = rng.uniform(0.0, 3.0);
      scaled[id] = losses[id] * factor;
    }
    const double eta = rng.uniform();
    EXPECT_EQ(detect_noisy(losses, eta), detect_noisy(scaled, eta));
  }
}

TEST(Detect, RejectsNonFiniteLoss) {
  const std::map<SampleId, double> losses{{0, std::nan("")}};
  EXPECT_THROW(detect_noisy(losses, 0.5), NumericError);
}

TEST(DetectionMetrics, EmptyFlagSetScoresZero) {
  const Dataset data = labels_only(10, 3, 19);
  RngStream rng(20);
  const NoiseLedger ledger = inject_symmetric(data, 0.4, rng);
  EXPECT_EQ(detection_metrics({}, ledger).f1, 0.0);
}

TEST(DetectionMetrics, HandConfusionOracle) {
  // N = 10, samples 0..3 noisy; flag 2 noisy and 2 clean.
  NoiseLedger ledger;
  for (SampleId id = 0; id < 10; ++id) ledger.records.push_back({id, 0, id < 4 ? 1 : 0, id < 4});
  const DetectionMetrics m = detection_metrics({0, 1, 6, 7}, ledger);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);
  // TPR 2/4, TNR 4/6
  EXPECT_NEAR(m.balanced_accuracy, (0.5 + 4.0 / 6.0) / 2.0, 1e-15);
  EXPECT_NEAR(m.balanced_accuracy, 0.5833, 1e-4);
}

TEST(DetectionMetrics, UnknownFlaggedIdIsRejected) {
  NoiseLedger ledger;
  ledger.records.push_back({0, 0, 0, false});
  EXPECT_THROW(detection_metrics({5}, ledger), DomainError);
}

TEST(LedgerCsv, RoundTrip) {
  const Dataset data = labels_only(50, 4, 21);
  RngStream rng(22);
  const NoiseLedger ledger = inject_symmetric(data, 0.5, rng);
  const auto path = temp_path("ledger.csv");
  write_ledger_csv(ledger, path);
  EXPECT_EQ(read_ledger_csv(path), ledger);
  std::filesystem::remove(path);
}

TEST(LossesCsv, RoundTripIsExact) {
  std::map<SampleId, double> losses{{0, 0.1}, {3, 1.0 / 3.0}, {7, 1e-300}};
  const auto path = temp_path("losses.csv");
  write_losses_csv(losses, path);
  EXPECT_EQ(read_losses_csv(path), losses);
  std::filesystem::remove(path);
}

TEST(ApplyLedger, ObservedLabelsFollowTheLedger) {
  const Dataset data = labels_only(30, 3, 23);
  RngStream rng(24);
  const NoiseLedger ledger = inject_symmetric(data, 0.5, rng);
  const Dataset noisy = apply_ledger(data, ledger);
  EXPECT_EQ(noisy.observed_labels(), ledger.observed_labels());
  EXPECT_EQ(noisy.true_labels(), data.true_labels());
  EXPECT_EQ(noisy.ids(), data.ids());
}
