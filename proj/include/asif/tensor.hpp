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

#include <Eigen/Dense>

#include <array>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "asif/error.hpp"
#include "asif/rng.hpp"

namespace asif {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = RowMatrix<double>;
using Vector = Eigen::VectorXd;

/// Dense rank-2 array (scalars are 1x1) with an optional gradient buffer.
/// Data is row-major, so `data.data()` walks the values in row-major order.
template <typename Scalar>
struct BasicTensor {
  RowMatrix<Scalar> data;
  bool requires_grad = false;
  std::optional<RowMatrix<Scalar>> grad;

  BasicTensor() = default;
  explicit BasicTensor(RowMatrix<Scalar> value, bool requires_grad_ = false)
      : data(std::move(value)), requires_grad(requires_grad_) {}

  std::array<Index, 2> shape() const { return {data.rows(), data.cols()}; }
  Index size() const { return data.size(); }
  bool all_finite() const { return data.allFinite() && (!grad || grad->allFinite()); }
  void zero_grad() { grad.reset(); }
};

using Tensor = BasicTensor<double>;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 result.
  double item() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// so the recording order is already topological; backward() walks it once
/// in reverse.
class Tape {
 public:
  /// Receives the gradient of the root with respect to this node's value.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to `t`; gradients reaching it accumulate into `t.grad`.
  /// A tensor with requires_grad == false is recorded as a constant.
  Var parameter(Tensor& t);
  /// Appends an operation result. `backward` is dropped when no input
  /// requires a gradient.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad) {
      *n.grad += g;
    } else {
      n.grad = g;
    }
  }

  /// Backpropagates from a 1x1 root. Allowed once per tape.
  void backward(const Var& root);

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient reaching `v` during backward(), if any.
  const std::optional<Matrix>& grad(const Var& v) const { return nodes_[v.id()].grad; }
  /// Distinct tensors bound with parameter(), in first-use order.
  std::vector<Tensor*> parameters() const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Matrix value;
    std::optional<Matrix> grad;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool requires_grad = false;
  };

  // deque keeps references to earlier nodes stable while recording.
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Operations. All of them check operand shapes and throw ShapeError or
// DomainError; every recorded value is checked for NaN/Inf (NumericError).

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// x[B,F] + bias[1,F], bias broadcast over rows.
Var add_rowwise(const Var& x, const Var& bias);
Var scale(const Var& x, double factor);
Var relu(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
/// Inverted dropout. Identity (and no RNG draws) when p == 0 or !training.
Var dropout(const Var& x, double p, bool training, RngStream& rng);
/// Row-wise softmax.
Var softmax(const Var& logits);
/// Rows of `x` selected by `rows`; the backward pass scatter-adds.
Var gather_rows(const Var& x, std::span<const Index> rows);
/// Forward identity; backward multiplies the incoming gradient by -coefficient.
Var gradient_reversal(const Var& x, double coefficient);
/// Mean over the batch of -log softmax(logits)[target].
Var softmax_cross_entropy(const Var& logits, std::span<const int> targets);

struct BnState {
  Matrix running_mean;  // 1 x F
  Matrix running_var;   // 1 x F
  double eps = 1e-5;
  double momentum = 0.1;

  BnState() = default;
  explicit BnState(Index features, double eps_ = 1e-5, double momentum_ = 0.1)
      : running_mean(Matrix::Zero(1, features)),
        running_var(Matrix::Ones(1, features)),
        eps(eps_),
        momentum(momentum_) {}
};

/// Batch normalization over rows. Training mode normalizes with the biased
/// batch variance, then updates running statistics with the unbiased one.
Var batchnorm1d(const Var& x, const Var& gamma, const Var& beta, BnState& state, bool training);

// ---------------------------------------------------------------------------
// Plain (non-recorded) helpers shared by evaluation code.

/// Numerically stable row-wise log-softmax.
template <typename Derived>
RowMatrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log();
  shifted.colwise() -= lse;
  return shifted;
}

/// Per-row cross entropy -log softmax(logits)[target].
Vector cross_entropy_per_sample(const Matrix& logits, std::span<const int> targets);

void check_finite(const Matrix& m, std::string_view what);

}  // namespace asif
