// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/diff/ops.hpp"

#include "irender/error.hpp"

#include <cmath>
#include <string>

namespace irender::diff {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ContractViolation("operands recorded on different tapes");
}

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var scale(const Var& a, double s) {
  return a.tape()->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var mul_col(const Var& a, const Var& c) {
  require_same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) throw ContractViolation("mul_col: c must be n x 1");
  Matrix out = a.value().array().colwise() * c.value().col(0).array();
  return a.tape()->record(std::move(out), {a, c}, [a, c](Tape& t, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) {
      Matrix ga = g.array().colwise() * c.value().col(0).array();
      t.accumulate(a, ga);
    }
    if (c.requires_grad()) {
      Matrix gc = g.cwiseProduct(a.value()).rowwise().sum();
      t.accumulate(c, gc);
    }
  });
}

Var add_row(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) throw ContractViolation("add_row: b must be 1 x k");
  Matrix out = a.value().rowwise() + b.value().row(0);
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (b.requires_grad()) {
      Matrix gb = g.colwise().sum();
      t.accumulate(b, gb);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw ContractViolation("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) {
      Matrix ga = g * b.value().transpose();
      t.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Matrix gb = a.value().transpose() * g;
      t.accumulate(b, gb);
    }
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = g.array() * (a.value().array() > 0.0).cast<double>();
    t.accumulate(a, ga);
  });
}

Var softplus(const Var& a) {
  Matrix out = a.value().unaryExpr(&softplus_scalar);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = g.cwiseProduct(a.value().unaryExpr(&sigmoid_scalar));
    t.accumulate(a, ga);
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix ga = g.array() * y.array() * (1.0 - y.array());
    t.accumulate(a, ga);
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, g.cwiseProduct(y));
  });
}

Var log(const Var& a) {
  Matrix out = a.value().array().log();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = g.array() / a.value().array();
    t.accumulate(a, ga);
  });
}

Var square(const Var& a) {
  Matrix out = a.value().array().square();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = 2.0 * g.array() * a.value().array();
    t.accumulate(a, ga);
  });
}

Var sqrt(const Var& a) {
  Matrix out = a.value().array().sqrt();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix ga = 0.5 * g.array() / y.array();
    t.accumulate(a, ga);
  });
}

Var reciprocal(const Var& a) {
  Matrix out = a.value().array().inverse();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix ga = -g.array() * y.array().square();
    t.accumulate(a, ga);
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape()->record(std::move(out), {a}, [a, lo, hi](Tape& t, const Matrix& g, const Matrix&) {
    const auto& x = a.value().array();
    Matrix ga = g.array() * (x >= lo && x <= hi).cast<double>();
    t.accumulate(a, ga);
  });
}

Var pow_col(const Var& x, const Var& e) {
  require_same_tape(x, e);
  if (e.cols() != 1 || e.rows() != x.rows()) throw ContractViolation("pow_col: e must be n x 1");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = std::pow(x.value()(i, j), e.value()(i, 0));
  }
  return x.tape()->record(std::move(out), {x, e}, [x, e](Tape& t, const Matrix& g, const Matrix& yv) {
    const Matrix& xv = x.value();
    if (x.requires_grad()) {
      Matrix gx(xv.rows(), xv.cols());
      for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        const double ei = e.value()(i, 0);
        for (Eigen::Index j = 0; j < xv.cols(); ++j) {
          gx(i, j) = xv(i, j) > 0.0 ? g(i, j) * ei * std::pow(xv(i, j), ei - 1.0) : 0.0;
        }
      }
      t.accumulate(x, gx);
    }
    if (e.requires_grad()) {
      Matrix ge = Matrix::Zero(xv.rows(), 1);
      for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        for (Eigen::Index j = 0; j < xv.cols(); ++j) {
          if (xv(i, j) > 0.0) ge(i, 0) += g(i, j) * yv(i, j) * std::log(xv(i, j));
        }
      }
      t.accumulate(e, ge);
    }
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ContractViolation("mean of an empty value");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_cols(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = g.col(0).replicate(1, a.cols());
    t.accumulate(a, ga);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) throw ContractViolation("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index c0 = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) t.accumulate(p, g.middleCols(c0, p.cols()));
      c0 += p.cols();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ContractViolation("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->record(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.middleCols(start, count) = g;
    t.accumulate(a, ga);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no operands");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.cols() != cols) throw ContractViolation("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index r0 = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) t.accumulate(p, g.middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ContractViolation("reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols());
    t.accumulate(a, ga);
  });
}

Var gather_rows(const Var& table, std::span<const int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), table.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= table.rows()) throw ContractViolation("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return table.tape()->record(std::move(out), {table}, [table, idx](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gt = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, gt);
  });
}

Var repeat_rows(const Var& a, int times) {
  if (times < 1) throw ContractViolation("repeat_rows: times must be positive");
  Matrix out(a.rows() * times, a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    out.middleRows(i * times, times) = a.value().row(i).replicate(times, 1);
  }
  return a.tape()->record(std::move(out), {a}, [a, times](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) ga.row(i) = g.middleRows(i * times, times).colwise().sum();
    t.accumulate(a, ga);
  });
}

Var normalize_rows(const Var& a, double eps) {
  Matrix norms = a.value().rowwise().norm().cwiseMax(eps);
  Matrix out = a.value().array().colwise() / norms.col(0).array();
  return a.tape()->record(std::move(out), {a}, [a, norms](Tape& t, const Matrix& g, const Matrix& y) {
    // d(u/|u|) = (g - y (y.g)) / |u|
    Matrix dots = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = (g - (y.array().colwise() * dots.col(0).array()).matrix()).array().colwise() /
                norms.col(0).array();
    t.accumulate(a, ga);
  });
}

Var dot_rows(const Var& a, const Var& b) { return sum_cols(mul(a, b)); }

Var cross_rows(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "cross_rows");
  if (a.cols() != 3) throw ContractViolation("cross_rows: operands must be n x 3");
  auto cross = [](const Matrix& u, const Matrix& v) {
    Matrix out(u.rows(), 3);
    out.col(0) = u.col(1).cwiseProduct(v.col(2)) - u.col(2).cwiseProduct(v.col(1));
    out.col(1) = u.col(2).cwiseProduct(v.col(0)) - u.col(0).cwiseProduct(v.col(2));
    out.col(2) = u.col(0).cwiseProduct(v.col(1)) - u.col(1).cwiseProduct(v.col(0));
    return out;
  };
  Matrix out = cross(a.value(), b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b, cross](Tape& t, const Matrix& g, const Matrix&) {
    // d(a x b) = da x b + a x db; adjoints: ga = b x g, gb = g x a.
    if (a.requires_grad()) t.accumulate(a, cross(b.value(), g));
    if (b.requires_grad()) t.accumulate(b, cross(g, a.value()));
  });
}

Var rowwise_matvec(const Var& rot, const Var& v) {
  require_same_tape(rot, v);
  if (rot.cols() != 9 || v.cols() != 3 || rot.rows() != v.rows()) {
    throw ContractViolation("rowwise_matvec: expected n x 9 and n x 3");
  }
  const Eigen::Index n = v.rows();
  Matrix out(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int r = 0; r < 3; ++r) {
      out(i, r) = rot.value()(i, 3 * r) * v.value()(i, 0) + rot.value()(i, 3 * r + 1) * v.value()(i, 1) +
                  rot.value()(i, 3 * r + 2) * v.value()(i, 2);
    }
  }
  return rot.tape()->record(std::move(out), {rot, v}, [rot, v, n](Tape& t, const Matrix& g, const Matrix&) {
    if (rot.requires_grad()) {
      Matrix gr(n, 9);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) gr(i, 3 * r + c) = g(i, r) * v.value()(i, c);
        }
      }
      t.accumulate(rot, gr);
    }
    if (v.requires_grad()) {
      Matrix gv = Matrix::Zero(n, 3);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) gv(i, c) += g(i, r) * rot.value()(i, 3 * r + c);
        }
      }
      t.accumulate(v, gv);
    }
  });
}

}  // namespace irender::diff
