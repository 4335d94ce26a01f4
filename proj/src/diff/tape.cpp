// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/diff/tape.hpp"

#include "irender/error.hpp"

#include <utility>

namespace irender::diff {

Param::Param(std::string n, Matrix init) : name(std::move(n)), value(std::move(init)) {
  grad = Matrix::Zero(value.rows(), value.cols());
  m = Matrix::Zero(value.rows(), value.cols());
  v = Matrix::Zero(value.rows(), value.cols());
}

void Param::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return tape_->nodes_[id_].value; }
const Matrix& Var::grad() const { return tape_->nodes_[id_].grad; }
bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractViolation("Var::scalar on a " + std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Param& p) {
  Node n;
  n.value = p.value;
  n.leaf = true;
  if (p.trainable) {
    n.requires_grad = true;
    n.param = &p;
  }
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ContractViolation("operand recorded on another tape");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ContractViolation("operand recorded on another tape");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw ContractViolation("gradient shape mismatch");
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root) {
  if (root.tape_ != this) throw ContractViolation("backward root recorded on another tape");
  Node& r = nodes_[root.id_];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ContractViolation("backward requires a scalar root, got " +
                            std::to_string(r.value.rows()) + "x" +
                            std::to_string(r.value.cols()));
  }
  for (Node& n : nodes_) {
    if (!n.leaf || n.param != nullptr) n.grad.resize(0, 0);
  }
  if (!r.requires_grad) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (int i = root.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(*this, n.grad, n.value);
    } else if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

}  // namespace irender::diff
