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

#include "asif/nn.hpp"

#include <cmath>

namespace asif {

namespace {

Matrix uniform_matrix(Index rows, Index cols, double bound, RngStream& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

}  // namespace

Linear::Linear(Index in, Index out, RngStream& rng) {
  if (in < 1 || out < 1) throw ShapeError("Linear: widths must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor(uniform_matrix(in, out, bound, rng), true);
  bias = Tensor(uniform_matrix(1, out, bound, rng), true);
}

Var Linear::forward(Tape& tape, const Var& x) {
  return add_rowwise(matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

BatchNorm1d::BatchNorm1d(Index features, double eps, double momentum)
    : gamma(Matrix::Ones(1, features), true),
      beta(Matrix::Zero(1, features), true),
      state(features, eps, momentum) {}

Var BatchNorm1d::forward(Tape& tape, const Var& x, bool training) {
  const bool batch_stats = training && x.rows() >= 2;
  return batchnorm1d(x, tape.parameter(gamma), tape.parameter(beta), state, batch_stats);
}

void BatchNorm1d::collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".gamma", &gamma});
  out.push_back({prefix + ".beta", &beta});
}

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw DomainError("Sgd: learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("Sgd: momentum must lie in [0, 1)");
}

void Sgd::step(std::span<Tensor* const> params) {
  for (const Tensor* p : params) {
    if (!p->grad) throw DomainError("sgd_step: parameter without gradient");
    check_finite(*p->grad, "sgd_step gradient");
  }
  for (Tensor* p : params) {
    auto [it, fresh] = velocity_.try_emplace(p, Matrix::Zero(p->data.rows(), p->data.cols()));
    Matrix& v = it->second;
    v = momentum_ * v + *p->grad;
    p->data -= lr_ * v;
    p->grad.reset();
  }
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Tensor* const> params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Tensor* p : params) {
    if (!p->grad) throw DomainError("adam: parameter without gradient");
    auto [it, fresh] = moments_.try_emplace(
        p, Matrix::Zero(p->data.rows(), p->data.cols()), Matrix::Zero(p->data.rows(), p->data.cols()));
    auto& [m, v] = it->second;
    m = beta1_ * m + (1.0 - beta1_) * *p->grad;
    v = beta2_ * v + (1.0 - beta2_) * p->grad->cwiseAbs2();
    p->data.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    p->grad.reset();
  }
}

}  // namespace asif
