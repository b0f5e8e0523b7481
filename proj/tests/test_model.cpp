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

#include <cmath>

#include "asif/model.hpp"
#include "support/toy_models.hpp"

using namespace asif;
using namespace asif::testing;

TEST(IdealLoss, MaximumEntropyValues) {
  EXPECT_EQ(ideal_identification_loss(1), 0.0);
  EXPECT_EQ(ideal_identification_loss(10), std::log(10.0));
  EXPECT_NEAR(ideal_identification_loss(10), 2.302585, 1e-6);
  // 50,000 CIFAR10 training images split evenly over ten classes
  EXPECT_NEAR(ideal_identification_loss(50000 / 10), 8.5172, 1e-4);
  EXPECT_THROW(ideal_identification_loss(0), DomainError);
}

TEST(Dgr, InitialLambdaIsOne) {
  EXPECT_EQ(DgrState::dynamic(10).lambda, 1.0);
  EXPECT_EQ(DgrState::dynamic(10).ideal_loss, std::log(10.0));
}

TEST(Dgr, UpdateRule) {
  const DgrState s = DgrState::dynamic(10);
  const double ideal = s.ideal_loss;
  EXPECT_EQ(dgr_update(s, ideal).lambda, 0.0);
  EXPECT_EQ(dgr_update(s, 2.0 * ideal).lambda, 1.0);
  EXPECT_EQ(dgr_update(s, 0.0).lambda, -1.0);
  EXPECT_EQ(dgr_update(s, 1.5 * ideal).ideal_loss, ideal);
}

TEST(Dgr, FixedModeNeverChanges) {
  DgrState s = DgrState::fixed(8, 0.3);
  for (double loss : {0.0, 1.0, 5.0, 100.0}) s = dgr_update(s, loss);
  EXPECT_EQ(s.lambda, 0.3);
}

TEST(Dgr, FixedPointIsStable) {
  DgrState s = DgrState::dynamic(16);
  for (int i = 0; i < 5; ++i) s = dgr_update(s, s.ideal_loss);
  EXPECT_EQ(s.lambda, 0.0);
}

TEST(Dgr, RejectsNonFiniteLoss) {
  EXPECT_THROW(dgr_update(DgrState::dynamic(4), std::nan("")), NumericError);
}

TEST(Dgr, SignConventions) {
  // gradient_reversal multiplies the backward pass by -coefficient.
  EXPECT_EQ(-reversal_coefficient(0.5, DgrSign::Literal), -0.5);
  EXPECT_EQ(-reversal_coefficient(0.5, DgrSign::Suppression), 0.5);
  EXPECT_EQ(-reversal_coefficient(-0.5, DgrSign::Suppression), -0.5);  // confident identifier: reversed
  EXPECT_EQ(reversal_coefficient(0.0, DgrSign::Literal), 0.0);
  EXPECT_EQ(reversal_coefficient(0.0, DgrSign::Suppression), 0.0);
}

TEST(Routing, SingleSampleHasOneHead) {
  const Dataset data = toy_dataset(1);
  AsifModel model(toy_model_config(data, true), 1);
  const std::vector<Index> rows{13};
  const ToyBatch b = toy_batch(data, rows);
  Tape tape;
  const ForwardResult out = forward(model, tape, b.x, b.labels, b.identity, false);
  ASSERT_EQ(out.identity.size(), 1u);
  EXPECT_EQ(out.identity.begin()->first, b.labels[0]);
  EXPECT_EQ(out.identity.begin()->second.logits.rows(), 1);
}

TEST(Routing, AllClassesPresentPartitionsTheBatch) {
  const Dataset data = toy_dataset(2);
  AsifModel model(toy_model_config(data, true), 2);
  std::vector<Index> rows(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Index>(i);
  const ToyBatch b = toy_batch(data, rows);
  Tape tape;
  const ForwardResult out = forward(model, tape, b.x, b.labels, b.identity, true);
  ASSERT_EQ(out.identity.size(), 3u);
  Index total = 0;
  for (const auto& [c, branch] : out.identity) {
    EXPECT_EQ(branch.logits.cols(), model.config().identities_per_class[static_cast<std::size_t>(c)]);
    for (Index r : branch.batch_rows) EXPECT_EQ(b.labels[static_cast<std::size_t>(r)], c);
    total += branch.logits.rows();
  }
  EXPECT_EQ(total, data.size());
  EXPECT_EQ(out.class_logits.rows(), data.size());
  EXPECT_EQ(out.class_logits.cols(), 3);
}

TEST(Routing, IdentityIndexOutOfRangeIsRejected) {
  const Dataset data = toy_dataset(3);
  AsifModel model(toy_model_config(data, true), 3);
  const std::vector<Index> rows{0, 1};
  ToyBatch b = toy_batch(data, rows);
  b.identity[1] = 10;  // class sizes are 10, so valid indices are 0..9
  Tape tape;
  EXPECT_THROW(forward(model, tape, b.x, b.labels, b.identity, true), DomainError);
}

// Random-logit expectation: an untrained identifier is close to chance.
TEST(Routing, UntrainedIdentifierIsNearChance) {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.per_class = 8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    const Dataset data = generate_synthetic(spec);
    ModelConfig cfg;
    cfg.input_dim = data.feature_dim();
    cfg.num_classes = 2;
    cfg.identities_per_class = {8, 8};
    AsifModel model(cfg, seed);
    std::vector<Index> rows(16);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Index>(i);
    const ToyBatch b = toy_batch(data, rows);
    Tape tape;
    const ForwardResult out = forward(model, tape, b.x, b.labels, b.identity, false);
    for (const auto& [c, loss] : per_class_identifier_loss(out.identity)) {
      EXPECT_NEAR(loss.item(), std::log(8.0), 0.5) << "seed " << seed << " class " << c;
    }
  }
}

TEST(TrainingStep, ZeroLambdaIdMatchesCrossEntropyBitwise) {
  EXPECT_TRUE(zero_lambda_matches_ce(5, 3));
}

TEST(TrainingStep, PrivateHeadIsolation) {
  for (int c = 0; c < 3; ++c) EXPECT_TRUE(private_heads_isolated(6, c)) << "class " << c;
}

TEST(TrainingStep, ClassThreeBatchTouchesOnlyHeadThree) {
  SyntheticSpec spec;
  spec.classes = 5;
  spec.per_class = 6;
  spec.seed = 7;
  const Dataset data = generate_synthetic(spec);
  ModelConfig cfg = toy_model_config(data, true);
  AsifModel model(cfg, 7);
  const std::vector<DgrState> before = make_dgr_states(cfg.identities_per_class, DgrMode::Dynamic);
  std::vector<DgrState> dgr = before;
  std::vector<Index> rows;
  for (Index r = 0; r < data.size(); ++r) {
    if (data.observed_labels()[static_cast<std::size_t>(r)] == 3) rows.push_back(r);
  }
  const ToyBatch b = toy_batch(data, rows);
  std::vector<std::vector<Matrix>> heads_before;
  for (int k = 0; k < 5; ++k) {
    heads_before.emplace_back();
    for (Tensor* t : model.identifier().head_parameters(k)) heads_before.back().push_back(t->data);
  }
  Sgd opt(0.1, 0.9);
  const StepReport rep = asif_training_step(model, dgr, opt, b.x, b.labels, b.identity, {LossKind::ce(), 1.0});
  ASSERT_EQ(rep.id_losses.size(), 1u);
  EXPECT_EQ(rep.id_losses.begin()->first, 3);
  for (int k = 0; k < 5; ++k) {
    const auto params = model.identifier().head_parameters(k);
    bool changed = false;
    for (std::size_t i = 0; i < params.size(); ++i) changed |= params[i]->data != heads_before[k][i];
    EXPECT_EQ(changed, k == 3) << "head " << k;
    EXPECT_EQ(dgr[k] == before[k], k != 3) << "head " << k;
  }
}

TEST(TrainingStep, LossAccounting) {
  const Dataset data = toy_dataset(8);
  AsifModel model(toy_model_config(data, true, 0.5), 8);
  std::vector<DgrState> dgr = make_dgr_states(model.config().identities_per_class, DgrMode::Dynamic);
  Sgd opt(0.05, 0.9);
  BatchIterator it(data.size(), 7, RngStream(9));
  for (int e = 0; e < 3; ++e) {
    for (const auto& rows : it.next_epoch()) {
      const ToyBatch b = toy_batch(data, rows);
      const double lambda_id = 0.37;
      const StepReport rep = asif_training_step(model, dgr, opt, b.x, b.labels, b.identity, {LossKind::ce(), lambda_id});
      double expected = rep.classification_loss;
      double share_total = 0.0;
      for (const auto& [c, loss] : rep.id_losses) {
        const double share = static_cast<double>(std::count(b.labels.begin(), b.labels.end(), c)) /
                             static_cast<double>(b.labels.size());
        EXPECT_EQ(rep.shares.at(c), share);
        share_total += share;
        expected += lambda_id * share * loss;
      }
      EXPECT_NEAR(share_total, 1.0, 1e-12);
      EXPECT_NEAR(rep.total_loss, expected, 1e-12);
    }
  }
}

namespace {

/// Feature-extractor gradients of one step from a fresh model.
std::vector<Matrix> extractor_gradients(std::uint64_t seed, double lambda_id, DgrSign sign, double lambda) {
  const Dataset data = toy_dataset(seed);
  AsifModel model(toy_model_config(data, true, 0.5), seed);
  std::vector<DgrState> dgr = make_dgr_states(model.config().identities_per_class, DgrMode::Dynamic);
  for (auto& s : dgr) s.lambda = lambda;
  std::vector<Index> rows(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Index>(i);
  const ToyBatch b = toy_batch(data, rows);
  compute_step_gradients(model, dgr, b.x, b.labels, b.identity, {LossKind::ce(), lambda_id, sign});
  std::vector<Matrix> out;
  for (Tensor* t : model.extractor_parameters()) out.push_back(*t->grad);
  return out;
}

}  // namespace

// Three runs: lambda_id = 0 isolates the classification gradient, so the
// identifier contribution under each convention is the difference.
TEST(TrainingStep, SignFlipNegatesIdentifierGradientOnExtractor) {
  for (double lambda : {1.0, -0.4, 0.25}) {
    const auto base = extractor_gradients(10, 0.0, DgrSign::Suppression, lambda);
    const auto supp = extractor_gradients(10, 1.0, DgrSign::Suppression, lambda);
    const auto lit = extractor_gradients(10, 1.0, DgrSign::Literal, lambda);
    double largest = 0.0;  // biases ahead of batch norm get no gradient at all
    for (std::size_t i = 0; i < base.size(); ++i) {
      const Matrix d_supp = supp[i] - base[i];
      const Matrix d_lit = lit[i] - base[i];
      largest = std::max(largest, d_supp.cwiseAbs().maxCoeff());
      EXPECT_LT((d_supp + d_lit).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, d_supp.cwiseAbs().maxCoeff()));
    }
    EXPECT_GT(largest, 1e-6);
  }
}

TEST(TrainingStep, ZeroLambdaRemovesIdentifierGradientFromExtractor) {
  const auto base = extractor_gradients(11, 0.0, DgrSign::Suppression, 0.0);
  const auto with = extractor_gradients(11, 1.0, DgrSign::Suppression, 0.0);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base[i], with[i]);
}

// Suppression with a confident identifier (lambda < 0) moves the extractor
// along a direction that raises the identification loss.
TEST(TrainingStep, SuppressionRaisesIdentificationLoss) {
  const double lambda = -0.5;
  const auto base = extractor_gradients(12, 0.0, DgrSign::Suppression, lambda);
  const auto supp = extractor_gradients(12, 1.0, DgrSign::Suppression, lambda);
  // Literal with lambda = -1 backpropagates the unreversed gradient.
  const auto truth = extractor_gradients(12, 1.0, DgrSign::Literal, -1.0);
  const auto truth_base = extractor_gradients(12, 0.0, DgrSign::Literal, -1.0);
  double directional = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Matrix step = -(supp[i] - base[i]);  // SGD moves against the gradient
    directional += (truth[i] - truth_base[i]).cwiseProduct(step).sum();
  }
  EXPECT_GT(directional, 0.0);
}

TEST(Model, ModesAreArchitecturallyIdentical) {
  const Dataset data = toy_dataset(13);
  AsifModel a(toy_model_config(data, true), 13);
  AsifModel b(toy_model_config(data, true), 13);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].tensor->data, pb[i].tensor->data);
  }
  const auto dyn = make_dgr_states({10, 10, 10}, DgrMode::Dynamic);
  const auto fix = make_dgr_states({10, 10, 10}, DgrMode::Fixed, 0.1);
  ASSERT_EQ(dyn.size(), fix.size());
  for (std::size_t i = 0; i < dyn.size(); ++i) EXPECT_EQ(dyn[i].ideal_loss, fix[i].ideal_loss);
}

TEST(Model, FullGraphMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) EXPECT_LT(full_graph_gradient_error(seed), 1e-4) << seed;
}

TEST(Model, SameSeedSameTrajectory) {
  auto run = [](std::uint64_t seed) {
    const Dataset data = toy_dataset(seed);
    const IdentityRegistry reg(data);
    AsifModel model(toy_model_config(data, true, 0.5), seed);
    std::vector<DgrState> dgr = make_dgr_states(reg.class_sizes(), DgrMode::Dynamic);
    Sgd opt(0.05, 0.9);
    BatchIterator it(data.size(), 8, RngStream(seed));
    RngStream jitter(seed);
    for (int e = 0; e < 3; ++e) train_epoch(model, dgr, opt, data, &reg, it, jitter, {LossKind::ce(), 1.0});
    std::vector<Matrix> out;
    for (auto& p : model.parameters()) out.push_back(p.tensor->data);
    return out;
  };
  EXPECT_EQ(run(14), run(14));
}
