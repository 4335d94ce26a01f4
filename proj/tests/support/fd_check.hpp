// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference oracle for Tape gradients. Test-only.

#pragma once

#include "irender/diff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace irender::testing {

using diff::Matrix;
using diff::Tape;
using diff::Var;

/// Builds a scalar on `tape` from leaves holding `inputs`.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::vector<Matrix> analytic;
  std::vector<Matrix> numeric;
};

inline double evaluate(const ScalarFn& fn, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.constant(m));
  return fn(tape, leaves).scalar();
}

/// Relative error is max|analytic - numeric| over max|numeric| per input,
/// with `floor` guarding all-zero gradients.
inline GradCheck check_gradients(const ScalarFn& fn, const std::vector<Matrix>& inputs,
                                 double h = 1e-4, double floor = 1e-8) {
  GradCheck out;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.variable(m));
    Var root = fn(tape, leaves);
    tape.backward(root);
    for (const Var& v : leaves) {
      out.analytic.push_back(v.grad().size() ? v.grad() : Matrix::Zero(v.rows(), v.cols()));
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix num(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < num.size(); ++i) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      num.data()[i] = (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * h);
    }
    const double scale = std::max(num.cwiseAbs().maxCoeff(), floor);
    const double err = (out.analytic[k] - num).cwiseAbs().maxCoeff() / scale;
    out.max_rel_error = std::max(out.max_rel_error, err);
    out.numeric.push_back(std::move(num));
  }
  return out;
}

}  // namespace irender::testing
