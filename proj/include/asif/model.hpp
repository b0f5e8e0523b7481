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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asif/losses.hpp"
#include "asif/nn.hpp"
#include "asif/tensor.hpp"

namespace asif {

/// Widths and regularization of the network. `identities_per_class` holds
/// N_c for every class and sizes the private identifier heads.
struct ModelConfig {
  Index input_dim = 0;
  int num_classes = 0;
  std::vector<Index> extractor_widths{128, 64};  // last entry is the feature width
  double extractor_dropout = 0.0;
  Index identifier_hidden = 128;  // public trunk: feature -> hidden -> output
  Index identifier_output = 128;
  double identifier_dropout = 0.5;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool with_identifier = true;
  std::vector<int> identities_per_class;

  Index feature_dim() const { return extractor_widths.back(); }
  void validate() const;
};

/// MLP stand-in for the backbone: (Linear -> BatchNorm -> ReLU -> dropout)
/// per width.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(const ModelConfig& cfg, RngStream& init);

  Var forward(Tape& tape, const Var& x, bool training, RngStream& dropout_rng);
  Index output_dim() const { return layers_.back().out_features(); }
  void collect(std::vector<NamedTensor>& params, std::vector<std::pair<std::string, BnState*>>& bn);

 private:
  std::vector<Linear> layers_;
  std::vector<BatchNorm1d> norms_;
  double dropout_ = 0.0;
};

class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(Index features, int classes, RngStream& init) : linear_(features, classes, init) {}

  Var forward(Tape& tape, const Var& features) { return linear_.forward(tape, features); }
  void collect(std::vector<NamedTensor>& params) { linear_.collect("classifier", params); }

 private:
  Linear linear_;
};

/// Public trunk (Linear, BatchNorm, ReLU, dropout, Linear) shared by all
/// classes, followed by one private head per class (BatchNorm, ReLU,
/// dropout, Linear to N_c identity logits).
class IdentifierModule {
 public:
  IdentifierModule() = default;
  IdentifierModule(const ModelConfig& cfg, RngStream& init);

  Var trunk(Tape& tape, const Var& features, bool training, RngStream& dropout_rng);
  Var head(int c, Tape& tape, const Var& rows, bool training, RngStream& dropout_rng);

  int num_heads() const { return static_cast<int>(heads_.size()); }
  Index head_width(int c) const { return heads_.at(static_cast<std::size_t>(c)).out.out_features(); }
  void collect(std::vector<NamedTensor>& params, std::vector<std::pair<std::string, BnState*>>& bn);
  /// Trainable tensors of private head c only.
  std::vector<Tensor*> head_parameters(int c);

 private:
  struct PrivateHead {
    BatchNorm1d norm;
    Linear out;
  };

  Linear trunk_in_;
  BatchNorm1d trunk_norm_;
  Linear trunk_out_;
  std::vector<PrivateHead> heads_;
  double dropout_ = 0.5;
};

enum class DgrMode { Dynamic, Fixed };

/// How the DGR coefficient lambda enters the backward pass.
///  - Literal: gradient_reversal(-lambda), i.e. backward multiplies by -lambda.
///  - Suppression: backward multiplies by +lambda, so a confident identifier
///    (lambda < 0) has its gradient reversed into the feature extractor.
enum class DgrSign { Literal, Suppression };

/// Maximum-entropy cross entropy over n_c identities: log(n_c).
double ideal_identification_loss(int n_c);

struct DgrState {
  double lambda = 1.0;
  double ideal_loss = 0.0;
  DgrMode mode = DgrMode::Dynamic;

  static DgrState dynamic(int n_c) { return {1.0, ideal_identification_loss(n_c), DgrMode::Dynamic}; }
  static DgrState fixed(int n_c, double lambda) { return {lambda, ideal_identification_loss(n_c), DgrMode::Fixed}; }

  friend bool operator==(const DgrState&, const DgrState&) = default;
};

/// Dynamic mode: lambda <- (L_id - ideal) / ideal. Fixed mode: unchanged.
DgrState dgr_update(const DgrState& state, double observed_identification_loss);

/// Argument for gradient_reversal() that realizes `lambda` under `sign`.
double reversal_coefficient(double lambda, DgrSign sign);

class AsifModel {
 public:
  AsifModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  bool has_identifier() const { return identifier_.has_value(); }

  FeatureExtractor& extractor() { return extractor_; }
  ClassifierHead& classifier() { return classifier_; }
  IdentifierModule& identifier() { return identifier_.value(); }

  /// Every trainable tensor with a stable name.
  std::vector<NamedTensor> parameters();
  std::vector<std::pair<std::string, BnState*>> bn_states();
  /// Trainable tensors of the feature extractor only.
  std::vector<Tensor*> extractor_parameters();

  /// Dropout streams; the identifier draws from its own stream so that its
  /// presence never perturbs the masks of the classification path.
  RngStream& dropout_rng() { return dropout_rng_; }
  RngStream& identifier_rng() { return identifier_rng_; }
  void set_rng_state(RngStream dropout, RngStream identifier) {
    dropout_rng_ = dropout;
    identifier_rng_ = identifier;
  }

 private:
  ModelConfig config_;
  FeatureExtractor extractor_;
  ClassifierHead classifier_;
  std::optional<IdentifierModule> identifier_;
  RngStream dropout_rng_;
  RngStream identifier_rng_;
};

struct ForwardResult {
  Var features;
  Var class_logits;
  /// Only classes present in the batch have an entry.
  std::map<int, IdentityBranch> identity;
};

/// Routes features through the classifier and, when present, through the
/// identifier: public trunk -> gradient_reversal(coefficient) -> head c for
/// the rows whose observed label is c.
ForwardResult forward(AsifModel& model, Tape& tape, const Matrix& batch, std::span<const int> observed_labels,
                      std::span<const int> identity_indices, bool training, double reversal_coeff = 1.0);

/// Eval-mode classifier logits, computed in chunks.
Matrix predict_logits(AsifModel& model, const Matrix& inputs);
/// Eval-mode feature vectors.
Matrix extract_features(AsifModel& model, const Matrix& inputs);

struct StepOptions {
  LossKind loss;
  double lambda_id = 1.0;
  DgrSign sign = DgrSign::Suppression;
};

struct StepReport {
  double classification_loss = 0.0;
  double total_loss = 0.0;
  std::map<int, double> id_losses;  // per class present in the batch
  std::map<int, double> shares;     // B_c / B
  double batch_lambda = 0.0;        // share-weighted lambda used on the trunk
  std::vector<double> lambdas;      // per-head lambda after the update
};

/// Forward + backward without the optimizer step; leaves gradients in the
/// parameters. The tape is returned for inspection.
struct GradientPass {
  std::unique_ptr<Tape> tape;
  ForwardResult forward;
  Var total;
  StepReport report;
  std::vector<Tensor*> touched;  // parameters recorded on the tape
};

GradientPass compute_step_gradients(AsifModel& model, const std::vector<DgrState>& dgr, const Matrix& batch,
                                    std::span<const int> observed_labels, std::span<const int> identity_indices,
                                    const StepOptions& options);

/// One combined step: forward, L_cls + lambda_id * sum_c share_c * L_id_c,
/// backward, optimizer update of the touched parameters, then dgr_update of
/// each head present in the batch.
StepReport asif_training_step(AsifModel& model, std::vector<DgrState>& dgr, Sgd& optimizer, const Matrix& batch,
                              std::span<const int> observed_labels, std::span<const int> identity_indices,
                              const StepOptions& options);

/// One DgrState per class head.
std::vector<DgrState> make_dgr_states(const std::vector<int>& identities_per_class, DgrMode mode,
                                      double fixed_lambda = 1.0);

}  // namespace asif
