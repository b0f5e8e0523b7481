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

#include "asif/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace asif {

namespace {

constexpr std::uint64_t kExtractorInit = 1;
constexpr std::uint64_t kClassifierInit = 2;
constexpr std::uint64_t kIdentifierInit = 3;
constexpr std::uint64_t kDropout = 4;
constexpr std::uint64_t kIdentifierDropout = 5;

constexpr Index kEvalChunk = 1024;

}  // namespace

void ModelConfig::validate() const {
  if (input_dim < 1) throw DomainError("model: input_dim must be positive");
  if (num_classes < 2) throw DomainError("model: need at least 2 classes");
  if (extractor_widths.empty()) throw DomainError("model: extractor needs at least one layer");
  for (Index w : extractor_widths) {
    if (w < 1) throw DomainError("model: extractor widths must be positive");
  }
  if (!(extractor_dropout >= 0.0 && extractor_dropout < 1.0) || !(identifier_dropout >= 0.0 && identifier_dropout < 1.0)) {
    throw DomainError("model: dropout must lie in [0, 1)");
  }
  if (with_identifier) {
    if (identifier_hidden < 1 || identifier_output < 1) throw DomainError("model: identifier widths must be positive");
    if (static_cast<int>(identities_per_class.size()) != num_classes) {
      throw DomainError("model: identities_per_class needs one entry per class");
    }
    for (int n : identities_per_class) {
      if (n < 1) throw DomainError("model: every class needs at least one identity");
    }
  }
}

FeatureExtractor::FeatureExtractor(const ModelConfig& cfg, RngStream& init) : dropout_(cfg.extractor_dropout) {
  Index in = cfg.input_dim;
  for (Index w : cfg.extractor_widths) {
    layers_.emplace_back(in, w, init);
    norms_.emplace_back(w, cfg.bn_eps, cfg.bn_momentum);
    in = w;
  }
}

Var FeatureExtractor::forward(Tape& tape, const Var& x, bool training, RngStream& dropout_rng) {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h);
    h = relu(norms_[i].forward(tape, h, training));
    h = dropout(h, dropout_, training, dropout_rng);
  }
  return h;
}

void FeatureExtractor::collect(std::vector<NamedTensor>& params, std::vector<std::pair<std::string, BnState*>>& bn) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "extractor." + std::to_string(i);
    layers_[i].collect(p + ".linear", params);
    norms_[i].collect(p + ".bn", params);
    bn.emplace_back(p + ".bn", &norms_[i].state);
  }
}

IdentifierModule::IdentifierModule(const ModelConfig& cfg, RngStream& init)
    : trunk_in_(cfg.feature_dim(), cfg.identifier_hidden, init),
      trunk_norm_(cfg.identifier_hidden, cfg.bn_eps, cfg.bn_momentum),
      trunk_out_(cfg.identifier_hidden, cfg.identifier_output, init),
      dropout_(cfg.identifier_dropout) {
  for (int n : cfg.identities_per_class) {
    PrivateHead h{BatchNorm1d(cfg.identifier_output, cfg.bn_eps, cfg.bn_momentum), Linear(cfg.identifier_output, n, init)};
    heads_.push_back(std::move(h));
  }
}

Var IdentifierModule::trunk(Tape& tape, const Var& features, bool training, RngStream& dropout_rng) {
  Var h = trunk_in_.forward(tape, features);
  h = relu(trunk_norm_.forward(tape, h, training));
  h = dropout(h, dropout_, training, dropout_rng);
  return trunk_out_.forward(tape, h);
}

Var IdentifierModule::head(int c, Tape& tape, const Var& rows, bool training, RngStream& dropout_rng) {
  PrivateHead& h = heads_.at(static_cast<std::size_t>(c));
  Var z = relu(h.norm.forward(tape, rows, training));
  z = dropout(z, dropout_, training, dropout_rng);
  return h.out.forward(tape, z);
}

void IdentifierModule::collect(std::vector<NamedTensor>& params, std::vector<std::pair<std::string, BnState*>>& bn) {
  trunk_in_.collect("identifier.trunk.in", params);
  trunk_norm_.collect("identifier.trunk.bn", params);
  bn.emplace_back("identifier.trunk.bn", &trunk_norm_.state);
  trunk_out_.collect("identifier.trunk.out", params);
  for (std::size_t c = 0; c < heads_.size(); ++c) {
    const std::string p = "identifier.head." + std::to_string(c);
    heads_[c].norm.collect(p + ".bn", params);
    bn.emplace_back(p + ".bn", &heads_[c].norm.state);
    heads_[c].out.collect(p + ".out", params);
  }
}

std::vector<Tensor*> IdentifierModule::head_parameters(int c) {
  PrivateHead& h = heads_.at(static_cast<std::size_t>(c));
  return {&h.norm.gamma, &h.norm.beta, &h.out.weight, &h.out.bias};
}

// ---------------------------------------------------------------------------

double ideal_identification_loss(int n_c) {
  if (n_c < 1) throw DomainError("ideal_identification_loss: n_c must be >= 1, got " + std::to_string(n_c));
  return std::log(static_cast<double>(n_c));
}

DgrState dgr_update(const DgrState& state, double observed_identification_loss) {
  if (!std::isfinite(observed_identification_loss)) throw NumericError("dgr_update: non-finite identification loss");
  if (!(state.ideal_loss > 0.0)) throw DomainError("dgr_update: ideal loss must be positive");
  DgrState next = state;
  if (state.mode == DgrMode::Dynamic) {
    next.lambda = (observed_identification_loss - state.ideal_loss) / state.ideal_loss;
  }
  return next;
}

double reversal_coefficient(double lambda, DgrSign sign) {
  return sign == DgrSign::Literal ? lambda : -lambda;
}

std::vector<DgrState> make_dgr_states(const std::vector<int>& identities_per_class, DgrMode mode, double fixed_lambda) {
  std::vector<DgrState> out;
  for (int n : identities_per_class) {
    out.push_back(mode == DgrMode::Dynamic ? DgrState::dynamic(n) : DgrState::fixed(n, fixed_lambda));
  }
  return out;
}

// ---------------------------------------------------------------------------

AsifModel::AsifModel(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  config_.validate();
  const RngStream root(seed);
  RngStream ext = root.derive(kExtractorInit);
  RngStream cls = root.derive(kClassifierInit);
  extractor_ = FeatureExtractor(config_, ext);
  classifier_ = ClassifierHead(config_.feature_dim(), config_.num_classes, cls);
  if (config_.with_identifier) {
    RngStream idf = root.derive(kIdentifierInit);
    identifier_.emplace(config_, idf);
  }
  dropout_rng_ = root.derive(kDropout);
  identifier_rng_ = root.derive(kIdentifierDropout);
}

std::vector<NamedTensor> AsifModel::parameters() {
  std::vector<NamedTensor> params;
  std::vector<std::pair<std::string, BnState*>> bn;
  extractor_.collect(params, bn);
  classifier_.collect(params);
  if (identifier_) identifier_->collect(params, bn);
  return params;
}

std::vector<std::pair<std::string, BnState*>> AsifModel::bn_states() {
  std::vector<NamedTensor> params;
  std::vector<std::pair<std::string, BnState*>> bn;
  extractor_.collect(params, bn);
  if (identifier_) identifier_->collect(params, bn);
  return bn;
}

std::vector<Tensor*> AsifModel::extractor_parameters() {
  std::vector<NamedTensor> params;
  std::vector<std::pair<std::string, BnState*>> bn;
  extractor_.collect(params, bn);
  std::vector<Tensor*> out;
  for (auto& p : params) out.push_back(p.tensor);
  return out;
}

ForwardResult forward(AsifModel& model, Tape& tape, const Matrix& batch, std::span<const int> observed_labels,
                      std::span<const int> identity_indices, bool training, double reversal_coeff) {
  const ModelConfig& cfg = model.config();
  if (batch.rows() == 0) throw ShapeError("forward: empty batch");
  if (batch.cols() != cfg.input_dim) {
    throw ShapeError("forward: input width " + std::to_string(batch.cols()) + " != " + std::to_string(cfg.input_dim));
  }
  const auto rows = static_cast<std::size_t>(batch.rows());

  ForwardResult out;
  Var x = tape.constant(batch);
  out.features = model.extractor().forward(tape, x, training, model.dropout_rng());
  out.class_logits = model.classifier().forward(tape, out.features);

  if (!model.has_identifier()) return out;
  if (observed_labels.size() != rows || identity_indices.size() != rows) {
    throw ShapeError("forward: need one observed label and identity index per row");
  }

  IdentifierModule& idf = model.identifier();
  std::map<int, std::vector<Index>> groups;
  for (std::size_t i = 0; i < rows; ++i) {
    const int c = observed_labels[i];
    if (c < 0 || c >= cfg.num_classes) throw DomainError("forward: observed label out of range");
    if (identity_indices[i] < 0 || identity_indices[i] >= idf.head_width(c)) {
      throw DomainError("forward: identity index " + std::to_string(identity_indices[i]) + " out of range for class " +
                        std::to_string(c) + " (N_c = " + std::to_string(idf.head_width(c)) + ")");
    }
    groups[c].push_back(static_cast<Index>(i));
  }

  Var shared = idf.trunk(tape, out.features, training, model.identifier_rng());
  Var reversed = gradient_reversal(shared, reversal_coeff);
  for (auto& [c, members] : groups) {
    IdentityBranch branch;
    branch.logits = idf.head(c, tape, gather_rows(reversed, members), training, model.identifier_rng());
    for (Index r : members) branch.targets.push_back(identity_indices[static_cast<std::size_t>(r)]);
    branch.batch_rows = std::move(members);
    out.identity.emplace(c, std::move(branch));
  }
  return out;
}

namespace {

template <typename Pick>
Matrix eval_chunks(AsifModel& model, const Matrix& inputs, Index width, Pick pick) {
  Matrix out(inputs.rows(), width);
  for (Index start = 0; start < inputs.rows(); start += kEvalChunk) {
    const Index n = std::min(kEvalChunk, inputs.rows() - start);
    Tape tape;
    RngStream unused(0);
    Var x = tape.constant(inputs.middleRows(start, n));
    Var f = model.extractor().forward(tape, x, false, unused);
    out.middleRows(start, n) = pick(tape, f).value();
  }
  return out;
}

}  // namespace

Matrix predict_logits(AsifModel& model, const Matrix& inputs) {
  return eval_chunks(model, inputs, model.config().num_classes,
                     [&](Tape& tape, const Var& f) { return model.classifier().forward(tape, f); });
}

Matrix extract_features(AsifModel& model, const Matrix& inputs) {
  return eval_chunks(model, inputs, model.config().feature_dim(), [](Tape&, const Var& f) { return f; });
}

GradientPass compute_step_gradients(AsifModel& model, const std::vector<DgrState>& dgr, const Matrix& batch,
                                    std::span<const int> observed_labels, std::span<const int> identity_indices,
                                    const StepOptions& options) {
  if (batch.rows() == 0) throw ShapeError("training step: empty batch");
  if (static_cast<Index>(observed_labels.size()) != batch.rows()) throw ShapeError("training step: label count mismatch");

  GradientPass pass;
  pass.tape = std::make_unique<Tape>();
  Tape& tape = *pass.tape;
  StepReport& report = pass.report;

  // The trunk coefficient is the batch-share-weighted mean of per-head lambda.
  std::map<int, double> shares;
  double batch_lambda = 0.0;
  if (model.has_identifier()) {
    if (static_cast<int>(dgr.size()) != model.config().num_classes) throw DomainError("training step: one DgrState per class");
    const double b = static_cast<double>(batch.rows());
    for (int c : observed_labels) shares[c] += 1.0 / b;
    for (const auto& [c, s] : shares) batch_lambda += s * dgr.at(static_cast<std::size_t>(c)).lambda;
  }
  report.batch_lambda = batch_lambda;

  pass.forward = forward(model, tape, batch, observed_labels, identity_indices, true,
                         reversal_coefficient(batch_lambda, options.sign));
  Var cls = classification_loss(pass.forward.class_logits, observed_labels, options.loss);
  report.classification_loss = cls.item();

  std::map<int, Var> id_losses = per_class_identifier_loss(pass.forward.identity);
  for (const auto& [c, v] : id_losses) report.id_losses[c] = v.item();
  if (!id_losses.empty()) {
    report.shares = shares;
    pass.total = combine_asif_losses(cls, id_losses, shares, options.lambda_id);
  } else {
    pass.total = cls;
  }
  report.total_loss = pass.total.item();
  if (!std::isfinite(report.total_loss)) throw NumericError("training step: non-finite loss");

  tape.backward(pass.total);
  pass.touched = tape.parameters();
  return pass;
}

StepReport asif_training_step(AsifModel& model, std::vector<DgrState>& dgr, Sgd& optimizer, const Matrix& batch,
                              std::span<const int> observed_labels, std::span<const int> identity_indices,
                              const StepOptions& options) {
  GradientPass pass = compute_step_gradients(model, dgr, batch, observed_labels, identity_indices, options);
  optimizer.step(pass.touched);
  for (const auto& [c, loss] : pass.report.id_losses) {
    DgrState& s = dgr.at(static_cast<std::size_t>(c));
    // A single-identity head has a zero ideal loss; its lambda stays put.
    if (s.ideal_loss > 0.0) s = dgr_update(s, loss);
  }
  for (const DgrState& s : dgr) pass.report.lambdas.push_back(s.lambda);
  return pass.report;
}

}  // namespace asif
