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

// Central-difference gradient oracle, independent of the tape.

#include <algorithm>
#include <cmath>
#include <functional>

#include "asif/tensor.hpp"

namespace asif::testing {

/// d f / d x by central differences, one coordinate at a time.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double down = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(1, |b|), elementwise. The floor keeps near-zero
/// entries from dominating.
inline double max_relative_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double denom = std::max(1.0, std::abs(b.data()[i]));
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
  }
  return worst;
}

/// Gradient of a scalar tape function with respect to its single input,
/// computed by backward().
inline Matrix tape_gradient(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x) {
  Tensor t(x, true);
  Tape tape;
  const Var out = f(tape, tape.parameter(t));
  tape.backward(out);
  return t.grad ? *t.grad : Matrix::Zero(x.rows(), x.cols()).eval();
}

inline double tape_value(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x) {
  Tape tape;
  return f(tape, tape.constant(x)).item();
}

/// Relative error between tape and finite-difference gradients of f at x.
inline double gradient_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x, double h = 1e-5) {
  const Matrix analytic = tape_gradient(f, x);
  const Matrix numeric = numeric_gradient([&](const Matrix& m) { return tape_value(f, m); }, x, h);
  return max_relative_error(analytic, numeric);
}

/// Uniform random matrix in [lo, hi).
inline Matrix random_matrix(RngStream& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

}  // namespace asif::testing
