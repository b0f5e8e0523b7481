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

#include <string>
#include <unordered_map>
#include <vector>

#include "asif/tensor.hpp"

namespace asif {

/// Named reference to a trainable tensor; used for checkpointing and for
/// enumerating parameters.
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

/// y = x W + b with W stored [in, out].
class Linear {
 public:
  Linear() = default;
  /// Weights and bias drawn from U(-1/sqrt(in), 1/sqrt(in)).
  Linear(Index in, Index out, RngStream& rng);

  Var forward(Tape& tape, const Var& x);

  Index in_features() const { return weight.data.rows(); }
  Index out_features() const { return weight.data.cols(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out);

  Tensor weight;
  Tensor bias;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(Index features, double eps, double momentum);

  /// Falls back to running statistics when a training batch has fewer than
  /// two rows (the statistics are then left untouched).
  Var forward(Tape& tape, const Var& x, bool training);

  void collect(const std::string& prefix, std::vector<NamedTensor>& out);

  Tensor gamma;
  Tensor beta;
  BnState state;
};

/// SGD with heavy-ball momentum: v <- momentum * v + grad; p <- p - lr * v.
/// Gradients are cleared after the update.
class Sgd {
 public:
  Sgd(double lr, double momentum);

  /// Throws DomainError when a parameter has no gradient.
  void step(std::span<Tensor* const> params);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::unordered_map<const Tensor*, Matrix> velocity_;
};

/// Adam, used by the frozen-feature probes.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<Tensor* const> params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::unordered_map<const Tensor*, std::pair<Matrix, Matrix>> moments_;
};

}  // namespace asif
