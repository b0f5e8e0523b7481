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

#include "asif/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace asif {

namespace {

std::string shape_str(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "]";
}

void require_same_tape(const Var& a, const Var& b, std::string_view op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

}  // namespace

void check_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw NumericError("non-finite value in " + std::string(what));
}

const Matrix& Var::value() const { return tape_->nodes_[id_].value; }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  check_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), std::nullopt, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& t) {
  check_finite(t.data, "parameter");
  nodes_.push_back(Node{t.data, std::nullopt, {}, t.requires_grad ? &t : nullptr, t.requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  check_finite(value, op);
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw Error(std::string(op) + ": input recorded on another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), std::nullopt, needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw Error("backward: root belongs to another tape");
  if (consumed_) throw Error("backward: tape already consumed");
  if (root.value().size() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(root.value()));
  consumed_ = true;

  Node& r = nodes_[root.id()];
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad) continue;
    check_finite(*n.grad, "gradient");
    if (n.backward) n.backward(*this, *n.grad);
  }

  // Every bound parameter on this tape gets a gradient, zero if unreached.
  for (Node& n : nodes_) {
    if (n.param == nullptr) continue;
    Tensor& t = *n.param;
    if (!t.grad) t.grad = Matrix::Zero(t.data.rows(), t.data.cols());
    if (n.grad) *t.grad += *n.grad;
  }
}

std::vector<Tensor*> Tape::parameters() const {
  std::vector<Tensor*> out;
  std::unordered_set<const Tensor*> seen;
  for (const Node& n : nodes_) {
    if (n.param != nullptr && seen.insert(n.param).second) out.push_back(n.param);
  }
  return out;
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.value()) + " x " +
                     shape_str(b.value()));
  }
  return a.tape().record("matmul", a.value() * b.value(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
                           if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
                         });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b, "add");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.value()) + " + " + shape_str(b.value()));
  }
  return a.tape().record("add", a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_rowwise(const Var& x, const Var& bias) {
  require_same_tape(x, bias, "add_rowwise");
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias.value()) + " does not match " +
                     shape_str(x.value()));
  }
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return x.tape().record("add_rowwise", std::move(out), {x, bias},
                         [x, bias](Tape& t, const Matrix& g) {
                           t.accumulate(x, g);
                           t.accumulate(bias, g.colwise().sum());
                         });
}

Var scale(const Var& x, double factor) {
  return x.tape().record("scale", x.value() * factor, {x},
                         [x, factor](Tape& t, const Matrix& g) { t.accumulate(x, g * factor); });
}

Var relu(const Var& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape().record("relu", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, (x.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape().record("sum", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& x) {
  if (x.value().size() == 0) throw ShapeError("mean: empty tensor");
  const double n = static_cast<double>(x.value().size());
  Matrix out(1, 1);
  out(0, 0) = x.value().mean();
  return x.tape().record("mean", std::move(out), {x}, [x, n](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0) / n));
  });
}

Var dropout(const Var& x, double p, bool training, RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  // Row-major walk so the mask layout is independent of Eigen internals.
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) mask(i, j) = rng.uniform() < p ? 0.0 : keep_scale;
  }
  Matrix out = x.value().cwiseProduct(mask);
  return x.tape().record("dropout", std::move(out), {x}, [x, mask](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(mask));
  });
}

Var softmax(const Var& logits) {
  Matrix probs = log_softmax_rows(logits.value()).array().exp().matrix();
  Matrix saved = probs;
  return logits.tape().record("softmax", std::move(probs), {logits},
                              [logits, saved](Tape& t, const Matrix& g) {
                                // dx = p * (g - sum(g * p))
                                const Vector dot = g.cwiseProduct(saved).rowwise().sum();
                                Matrix dx = saved.cwiseProduct(g - dot.replicate(1, g.cols()));
                                t.accumulate(logits, dx);
                              });
}

Var gather_rows(const Var& x, std::span<const Index> rows) {
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.rows()) {
      throw DomainError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
                        shape_str(x.value()));
    }
    out.row(static_cast<Index>(r)) = x.value().row(idx[r]);
  }
  return x.tape().record("gather_rows", std::move(out), {x},
                         [x, idx = std::move(idx)](Tape& t, const Matrix& g) {
                           Matrix dx = Matrix::Zero(x.rows(), x.cols());
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             dx.row(idx[r]) += g.row(static_cast<Index>(r));
                           }
                           t.accumulate(x, dx);
                         });
}

Var gradient_reversal(const Var& x, double coefficient) {
  if (!std::isfinite(coefficient)) throw NumericError("gradient_reversal: non-finite coefficient");
  return x.tape().record("gradient_reversal", x.value(), {x},
                         [x, coefficient](Tape& t, const Matrix& g) {
                           t.accumulate(x, g * (-coefficient));
                         });
}

Vector cross_entropy_per_sample(const Matrix& logits, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " rows");
  }
  const Matrix logp = log_softmax_rows(logits);
  Vector out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) {
      throw DomainError("cross entropy: target " + std::to_string(y) + " outside [0," +
                        std::to_string(logits.cols()) + ")");
    }
    out(i) = -logp(i, y);
  }
  return out;
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> targets) {
  if (logits.rows() == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  const Vector per_sample = cross_entropy_per_sample(logits.value(), targets);
  Matrix out(1, 1);
  out(0, 0) = per_sample.mean();
  std::vector<int> y(targets.begin(), targets.end());
  return logits.tape().record(
      "softmax_cross_entropy", std::move(out), {logits}, [logits, y = std::move(y)](Tape& t, const Matrix& g) {
        Matrix dx = log_softmax_rows(logits.value()).array().exp().matrix();
        for (Index i = 0; i < dx.rows(); ++i) dx(i, y[static_cast<std::size_t>(i)]) -= 1.0;
        dx *= g(0, 0) / static_cast<double>(dx.rows());
        t.accumulate(logits, dx);
      });
}

Var batchnorm1d(const Var& x, const Var& gamma, const Var& beta, BnState& state, bool training) {
  const Index batch = x.rows();
  const Index features = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != features || beta.rows() != 1 || beta.cols() != features ||
      state.running_mean.cols() != features) {
    throw ShapeError("batchnorm1d: parameter width does not match input " + shape_str(x.value()));
  }

  if (!training) {
    const Eigen::RowVectorXd inv_std = (state.running_var.array() + state.eps).rsqrt().matrix();
    Matrix xhat = (x.value().rowwise() - state.running_mean.row(0)).array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
                 beta.value().row(0).array();
    return x.tape().record("batchnorm1d", std::move(out), {x, gamma, beta},
                           [x, gamma, beta, inv_std, xhat](Tape& t, const Matrix& g) {
                             if (t.requires_grad(x)) {
                               t.accumulate(x, (g.array().rowwise() *
                                                (gamma.value().row(0).array() * inv_std.array()))
                                                   .matrix());
                             }
                             t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                             t.accumulate(beta, g.colwise().sum());
                           });
  }

  if (batch < 2) throw ShapeError("batchnorm1d: training mode needs at least 2 rows, got " + std::to_string(batch));
  const Eigen::RowVectorXd mu = x.value().colwise().mean();
  const Matrix centered = x.value().rowwise() - mu;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean().matrix();
  const Eigen::RowVectorXd inv_std = (var.array() + state.eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();

  const double n = static_cast<double>(batch);
  state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mu;
  state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * (var * (n / (n - 1.0)));

  return x.tape().record(
      "batchnorm1d", std::move(out), {x, gamma, beta},
      [x, gamma, beta, inv_std, xhat, n](Tape& t, const Matrix& g) {
        if (t.requires_grad(x)) {
          const Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
          const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
          const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
          Matrix dx = (n * dxhat).rowwise() - sum_dxhat;
          dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
          dx = dx.array().rowwise() * (inv_std.array() / n);
          t.accumulate(x, dx);
        }
        t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        t.accumulate(beta, g.colwise().sum());
      });
}

}  // namespace asif
