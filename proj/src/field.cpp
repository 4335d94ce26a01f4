// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/field.hpp"

#include "irender/diff/ops.hpp"
#include "irender/error.hpp"

#include <cmath>
#include <numbers>

namespace irender {

using diff::Matrix;
using diff::Param;
using diff::ParamStore;
using diff::Tape;
using diff::Var;

FieldConfig FieldConfig::desk() {
  FieldConfig c;
  c.trunk_depth = 4;
  c.trunk_width = 64;
  c.branch_depth = 2;
  c.branch_width = 64;
  c.appearance_dim = 16;
  c.transient_dim = 8;
  return c;
}

Matrix encode(const Matrix& x, int frequencies) {
  if (frequencies < 0) throw ContractViolation("encode: negative frequency count");
  const Eigen::Index n = x.cols();
  Matrix out(x.rows(), n * (2 * frequencies + 1));
  out.leftCols(n) = x;
  double f = std::numbers::pi;
  for (int j = 0; j < frequencies; ++j, f *= 2.0) {
    const Eigen::Index s = n * (1 + 2 * j);
    out.middleCols(s, n) = (f * x.array()).sin().matrix();
    out.middleCols(s + n, n) = (f * x.array()).cos().matrix();
  }
  return out;
}

Var encode(const Var& x, int frequencies) {
  Matrix out = encode(x.value(), frequencies);
  return x.tape()->record(std::move(out), {x}, [x, frequencies](Tape& t, const Matrix& g, const Matrix& y) {
    const Eigen::Index n = x.cols();
    Matrix gx = g.leftCols(n);
    double f = std::numbers::pi;
    for (int j = 0; j < frequencies; ++j, f *= 2.0) {
      const Eigen::Index s = n * (1 + 2 * j);
      gx.array() += f * (g.middleCols(s, n).array() * y.middleCols(s + n, n).array() -
                         g.middleCols(s + n, n).array() * y.middleCols(s, n).array());
    }
    t.accumulate(x, gx);
  });
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return diff::add_row(diff::matmul(x, tape.param(*weight)), tape.param(*bias));
}

Linear make_linear(ParamStore& store, const std::string& group, const std::string& prefix, int in, int out,
                   bool head, Rng& rng) {
  const double bound = head ? 1.0 / std::sqrt(static_cast<double>(in)) : std::sqrt(6.0 / in);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  Linear l;
  l.weight = &store.add(group, prefix + ".weight", std::move(w));
  l.bias = &store.add(group, prefix + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Mlp::operator()(Tape& tape, const Var& x) const {
  Var h = x;
  for (const Linear& l : layers) h = diff::relu(l(tape, h));
  return h;
}

Mlp make_mlp(ParamStore& store, const std::string& group, int in, int width, int depth, Rng& rng) {
  Mlp m;
  for (int i = 0; i < depth; ++i) {
    m.layers.push_back(make_linear(store, group, "layer" + std::to_string(i), i == 0 ? in : width, width, false, rng));
  }
  return m;
}

namespace {

Matrix embedding_init(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.1 * rng.normal();
  return m;
}

}  // namespace

GeometryNet::GeometryNet(ParamStore& store, const FieldConfig& cfg, int num_images, Rng& rng)
    : cfg_(cfg), num_images_(num_images) {
  if (num_images < 1) throw ContractViolation("GeometryNet needs at least one image");
  if (cfg.trunk_depth < 1 || cfg.trunk_width < 1) throw ContractViolation("GeometryNet: empty trunk");
  const int w = cfg.trunk_width;
  trunk_ = make_mlp(store, "trunk", encoded_dim(3, cfg.pos_frequencies), w, cfg.trunk_depth, rng);
  density_head_ = make_linear(store, "density", "head", w, 1, true, rng);
  color_head_ = make_linear(store, "color", "head", w + encoded_dim(3, cfg.dir_frequencies) + cfg.appearance_dim, 3,
                            true, rng);
  appearance_ = &store.add("appearance", "z_a", embedding_init(rng, num_images, cfg.appearance_dim));
  if (cfg.transient) {
    transient_ = make_mlp(store, "transient", w + cfg.transient_dim, cfg.branch_width, cfg.branch_depth, rng);
    transient_sigma_ = make_linear(store, "transient", "sigma", cfg.branch_width, 1, true, rng);
    transient_sigma_.bias->value.setConstant(cfg.transient_density_bias);
    transient_color_ = make_linear(store, "transient", "color", cfg.branch_width, 3, true, rng);
    transient_beta_ = make_linear(store, "transient", "beta", cfg.branch_width, 1, true, rng);
    transient_embed_ = &store.add("transient_embed", "z_t", embedding_init(rng, num_images, cfg.transient_dim));
  }
}

Var GeometryNet::feature(Tape& tape, const Var& x) const { return trunk_(tape, encode(x, cfg_.pos_frequencies)); }

Var GeometryNet::density(Tape& tape, const Var& feature) const {
  return diff::softplus(density_head_(tape, feature));
}

Var GeometryNet::color(Tape& tape, const Var& feature, const Var& dirs, std::span<const int> image) const {
  return color_with(tape, feature, dirs, diff::gather_rows(tape.param(*appearance_), image));
}

Var GeometryNet::color_with(Tape& tape, const Var& feature, const Var& dirs, const Var& appearance) const {
  Var in = diff::concat_cols({feature, encode(dirs, cfg_.dir_frequencies), appearance});
  return diff::sigmoid(color_head_(tape, in));
}

TransientOutput GeometryNet::transient(Tape& tape, const Var& feature, std::span<const int> image) const {
  const Eigen::Index b = feature.rows();
  if (!cfg_.transient) {
    return {tape.constant(Matrix::Zero(b, 1)), tape.constant(Matrix::Zero(b, 3)), tape.constant(Matrix::Ones(b, 1))};
  }
  Var z = diff::gather_rows(tape.param(*transient_embed_), image);
  Var h = transient_(tape, diff::concat_cols({feature, z}));
  return {diff::softplus(transient_sigma_(tape, h)), diff::sigmoid(transient_color_(tape, h)),
          diff::add_scalar(diff::softplus(transient_beta_(tape, h)), cfg_.beta_min)};
}

GeometryOutput GeometryNet::eval(Tape& tape, const Var& x, const Var& dirs, std::span<const int> image) const {
  if (static_cast<Eigen::Index>(image.size()) != x.rows()) {
    throw ContractViolation("GeometryNet::eval: one image index per point required");
  }
  GeometryOutput out;
  out.feature = feature(tape, x);
  out.sigma_static = density(tape, out.feature);
  out.color_static = color(tape, out.feature, dirs, image);
  TransientOutput tr = transient(tape, out.feature, image);
  out.sigma_transient = tr.sigma;
  out.color_transient = tr.color;
  out.beta = tr.beta;
  return out;
}

RenderNet::RenderNet(ParamStore& store, const GeometryNet& geometry, Rng& rng) : geometry_(geometry) {
  const FieldConfig& c = geometry.config();
  branch_ = make_mlp(store, "material", encoded_dim(3, c.pos_frequencies) + c.trunk_width, c.branch_width,
                     c.branch_depth, rng);
  normal_head_ = make_linear(store, "material", "normal", c.branch_width, 3, true, rng);
  diffuse_head_ = make_linear(store, "material", "diffuse", c.branch_width, 3, true, rng);
  specular_head_ = make_linear(store, "material", "specular", c.branch_width, 1, true, rng);
  gloss_head_ = make_linear(store, "material", "gloss", c.branch_width, 1, true, rng);
}

Material RenderNet::material(Tape& tape, const Var& x, const Var& feature) const {
  Var h = branch_(tape, diff::concat_cols({encode(x, geometry_.config().pos_frequencies), feature}));
  Material m;
  m.normal = diff::normalize_rows(normal_head_(tape, h));
  m.diffuse = diff::sigmoid(diffuse_head_(tape, h));
  m.specular = diff::sigmoid(specular_head_(tape, h));
  m.gloss = diff::add_scalar(diff::softplus(gloss_head_(tape, h)), 1.0);
  return m;
}

RenderOutput RenderNet::eval(Tape& tape, const Var& x, std::span<const int> image) const {
  if (static_cast<Eigen::Index>(image.size()) != x.rows()) {
    throw ContractViolation("RenderNet::eval: one image index per point required");
  }
  Var feature = geometry_.feature(tape, x);
  RenderOutput out;
  out.sigma_static = geometry_.density(tape, feature);
  TransientOutput tr = geometry_.transient(tape, feature, image);
  out.sigma_transient = tr.sigma;
  out.color_transient = tr.color;
  out.beta = tr.beta;
  Material m = material(tape, x, feature);
  out.normal = m.normal;
  out.diffuse = m.diffuse;
  out.specular = m.specular;
  out.gloss = m.gloss;
  return out;
}

}  // namespace irender
