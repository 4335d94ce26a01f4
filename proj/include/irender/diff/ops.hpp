// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Differentiable operations on Tape values. Shapes follow the "one row per
// item" convention: a batch of P points with F features is P x F.

#pragma once

#include "irender/diff/tape.hpp"

#include <span>
#include <vector>

namespace irender::diff {

// Elementwise arithmetic (operands must share a shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

/// a (n x k) times column c (n x 1), broadcast across columns.
Var mul_col(const Var& a, const Var& c);
/// a (n x k) plus row b (1 x k), broadcast across rows.
Var add_row(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);

Var relu(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// Natural log; inputs must be positive.
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var reciprocal(const Var& a);
/// Clamp with zero gradient outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);
/// Elementwise x^e where e is a column (n x 1) broadcast across columns.
/// Requires x > 0 wherever a gradient w.r.t. e is requested.
Var pow_col(const Var& x, const Var& e);

/// 1x1 sum / mean of all entries.
Var sum(const Var& a);
Var mean(const Var& a);
/// n x 1 row sums.
Var sum_cols(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
/// Reinterprets the row-major storage with a new shape.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

/// out.row(i) = table.row(index[i]); gradient scatters back.
Var gather_rows(const Var& table, std::span<const int> index);
/// Each input row repeated `times` consecutively.
Var repeat_rows(const Var& a, int times);

/// Rowwise L2 normalization; `eps` guards the zero vector.
Var normalize_rows(const Var& a, double eps = 1e-12);
/// Rowwise dot product of two n x k values, giving n x 1.
Var dot_rows(const Var& a, const Var& b);
/// Rowwise cross product of two n x 3 values.
Var cross_rows(const Var& a, const Var& b);

/// Rowwise 3x3 matrix-vector product. `rot` is n x 9 (row-major 3x3 per
/// row), `v` is n x 3.
Var rowwise_matvec(const Var& rot, const Var& v);

}  // namespace irender::diff
