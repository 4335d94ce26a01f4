// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the node's adjoint to its parents. Nodes are appended
// in evaluation order, so a reverse sweep over node indices is a valid
// topological order. Nodes whose parents carry no gradient are stored as
// constants and skipped during the sweep.

#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <string>
#include <deque>
#include <vector>

namespace irender::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor plus its optimizer state.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // Adam first moment
  Matrix v;  // Adam second moment
  long step = 0;
  bool trainable = true;
  double lr_scale = 1.0;  // multiplies the optimizer step size

  Param() = default;
  Param(std::string n, Matrix init);
  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Adjoint from the most recent backward pass (empty if never reached).
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  /// Convenience for 1x1 results.
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Pushes the node adjoint into parents via Tape::accumulate. Receives the
  /// node output as well so closures need not copy it.
  using BackwardFn =
      std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient accumulates on the node across backward passes.
  Var variable(Matrix value);
  /// Leaf bound to a parameter. Gradients are flushed into p.grad. Frozen
  /// (non-trainable) parameters enter as constants.
  Var param(Param& p);

  /// Records an operation. `fn` is dropped when no parent requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

  /// Adds `g` into the adjoint of `v` (no-op for constants).
  void accumulate(const Var& v, const Matrix& g);

  /// Reverse sweep from a 1x1 root. Intermediate adjoints are recomputed on
  /// every call; leaf and parameter gradients accumulate until reset.
  void backward(const Var& root);

  /// Clears gradients held by variable leaves.
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
    bool leaf = false;
  };
  Var push(Node node);

  std::deque<Node> nodes_;
};

}  // namespace irender::diff
