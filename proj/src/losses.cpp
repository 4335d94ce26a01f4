// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/losses.hpp"

#include "irender/diff/ops.hpp"
#include "irender/error.hpp"
#include "irender/shading.hpp"

namespace irender {

using diff::Matrix;
using diff::Tape;
using diff::Var;

namespace {

Var sq_rows(const Var& a) { return diff::sum_cols(diff::square(a)); }

}  // namespace

Var loss_color(const Var& color, const Matrix& target, const Var& beta, double beta_floor) {
  if (color.rows() != target.rows() || color.cols() != target.cols() || beta.rows() != color.rows())
    throw ContractViolation("loss_color: shape mismatch");
  if (beta.rows() > 0 && beta.value().minCoeff() < beta_floor)
    throw ContractViolation("loss_color: beta below its floor");
  Tape& t = *color.tape();
  const Var err = sq_rows(color - t.constant(target));
  const Var b2 = diff::square(beta);
  return diff::mean(err * diff::reciprocal(diff::scale(b2, 2.0)) + diff::scale(diff::log(b2), 0.5));
}

Var loss_transient(const Var& sigma_transient) { return diff::mean(sigma_transient); }

Var loss_silhouette(const Var& opacity, const Matrix& mask, double eps) {
  if (opacity.rows() != mask.rows() || opacity.cols() != 1 || mask.cols() != 1)
    throw ContractViolation("loss_silhouette: shape mismatch");
  Tape& t = *opacity.tape();
  const Var a = diff::clamp(opacity, eps, 1.0 - eps);
  const Var f = t.constant(mask);
  const Var g = t.constant(Matrix::Ones(mask.rows(), 1) - mask);
  return diff::neg(diff::mean(f * diff::log(a) + g * diff::log(diff::add_scalar(diff::neg(a), 1.0))));
}

Var loss_camera(const Var& deltas) {
  Tape& t = *deltas.tape();
  if (deltas.rows() == 0) return t.constant(Matrix::Zero(1, 1));
  return diff::mean(sq_rows(deltas));
}

Var loss_normal(const Var& normal, const Matrix& grid_normal) {
  if (normal.rows() != grid_normal.rows() || normal.cols() != 3 || grid_normal.cols() != 3)
    throw ContractViolation("loss_normal: shape mismatch");
  Tape& t = *normal.tape();
  const Matrix conf = grid_normal.rowwise().norm();
  return diff::mean(sq_rows(diff::mul_col(normal, t.constant(conf)) - t.constant(grid_normal)));
}

Var loss_smooth(const Var& normal, const Var& jittered_normal) {
  return diff::mean(sq_rows(normal - jittered_normal));
}

RegTerms loss_reg(const Var& specular, const Var& gamma, const Var& lights, std::span<const int> light_image,
                  const Matrix& light_dirs, const LossWeights& w) {
  RegTerms r;
  r.spec = diff::scale(diff::mean(sq_rows(specular)), w.spec);
  r.gamma = diff::scale(diff::mean(diff::square(diff::add_scalar(gamma, -2.4))), w.gamma);
  const Var radiance = sh_radiance(lights, light_image, light_dirs);
  const Var below = diff::relu(diff::add_scalar(diff::neg(radiance), -w.light_tau));
  r.light = diff::scale(diff::mean(sq_rows(below)), w.light);
  r.total = r.spec + r.gamma + r.light;
  return r;
}

namespace {

Var weighted_sum(Tape& tape, std::initializer_list<std::pair<const Var*, double>> parts) {
  Var total = tape.constant(Matrix::Zero(1, 1));
  for (const auto& [v, weight] : parts) {
    if (v->valid() && weight != 0.0) total = total + diff::scale(*v, weight);
  }
  return total;
}

}  // namespace

Var total_geo(Tape& tape, const GeoLossTerms& t, const LossWeights& w) {
  return weighted_sum(tape, {{&t.color, 1.0},
                             {&t.transient, w.geo_transient},
                             {&t.silhouette, w.silhouette},
                             {&t.camera, w.camera}});
}

Var total_render(Tape& tape, const RenderLossTerms& t, const LossWeights& w) {
  return weighted_sum(
      tape, {{&t.color, 1.0}, {&t.transient, w.render_transient}, {&t.normal, w.normal}, {&t.smooth, w.smooth}, {&t.reg, 1.0}});
}

}  // namespace irender
