// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Coordinate MLP fields.
//
// GeometryNet holds the density trunk, the static density and color heads,
// the transient branch and the per-image embeddings. RenderNet adds the
// material branch and reuses the trunk (frozen) and transient branch of a
// GeometryNet. All weights live in a ParamStore under fixed group names so a
// checkpoint can be matched against a freshly built network.

#pragma once

#include "irender/diff/param_store.hpp"
#include "irender/diff/tape.hpp"
#include "irender/util/random.hpp"

#include <span>
#include <string>
#include <vector>

namespace irender {

/// concat(x, sin(2^j pi x), cos(2^j pi x)) for j = 0..L-1. The sin block of
/// frequency j precedes its cos block; each block has x.cols() columns.
diff::Matrix encode(const diff::Matrix& x, int frequencies);
diff::Var encode(const diff::Var& x, int frequencies);
inline int encoded_dim(int input_dim, int frequencies) { return input_dim * (2 * frequencies + 1); }

struct FieldConfig {
  int pos_frequencies = 10;
  int dir_frequencies = 4;
  int trunk_depth = 8;
  int trunk_width = 256;
  int branch_depth = 4;
  int branch_width = 128;
  int appearance_dim = 32;
  int transient_dim = 16;
  bool transient = true;
  double beta_min = 0.03;
  /// Initial bias of the transient density head; negative keeps transient
  /// occupancy small until the data asks for it.
  double transient_density_bias = -4.0;

  static FieldConfig full() { return {}; }
  static FieldConfig desk();
};

/// Dense layer y = x W + b with W stored fan_in x fan_out.
struct Linear {
  diff::Param* weight = nullptr;
  diff::Param* bias = nullptr;

  diff::Var operator()(diff::Tape& tape, const diff::Var& x) const;
  int in() const { return static_cast<int>(weight->value.rows()); }
  int out() const { return static_cast<int>(weight->value.cols()); }
};

/// Registers a layer as `group/prefix.weight` and `group/prefix.bias`.
/// `head` layers use the 1/sqrt(fan_in) bound, hidden layers the Kaiming
/// uniform bound sqrt(6/fan_in). Biases start at zero.
Linear make_linear(diff::ParamStore& store, const std::string& group, const std::string& prefix, int in, int out,
                   bool head, Rng& rng);

/// ReLU MLP: every layer is followed by ReLU.
struct Mlp {
  std::vector<Linear> layers;
  diff::Var operator()(diff::Tape& tape, const diff::Var& x) const;
};
Mlp make_mlp(diff::ParamStore& store, const std::string& group, int in, int width, int depth, Rng& rng);

struct GeometryOutput {
  diff::Var sigma_static;     // B x 1
  diff::Var color_static;     // B x 3
  diff::Var sigma_transient;  // B x 1 (zeros when the branch is off)
  diff::Var color_transient;  // B x 3
  diff::Var beta;             // B x 1 (beta_min + softplus, ones when off)
  diff::Var feature;          // trunk output z_x
};

struct TransientOutput {
  diff::Var sigma;
  diff::Var color;
  diff::Var beta;
};

class GeometryNet {
 public:
  /// Registers groups trunk, density, color, appearance, transient and
  /// transient_embed (the last two only with cfg.transient).
  GeometryNet(diff::ParamStore& store, const FieldConfig& cfg, int num_images, Rng& rng);

  const FieldConfig& config() const { return cfg_; }
  int num_images() const { return num_images_; }

  /// Trunk feature z_x for B x 3 positions.
  diff::Var feature(diff::Tape& tape, const diff::Var& x) const;
  /// Static density from a trunk feature.
  diff::Var density(diff::Tape& tape, const diff::Var& feature) const;
  /// Static color from trunk feature, unit view directions and image ids.
  diff::Var color(diff::Tape& tape, const diff::Var& feature, const diff::Var& dirs,
                  std::span<const int> image) const;
  /// Uses `appearance` (rows x appearance_dim, one per point) in place of
  /// the embedding table.
  diff::Var color_with(diff::Tape& tape, const diff::Var& feature, const diff::Var& dirs,
                       const diff::Var& appearance) const;
  TransientOutput transient(diff::Tape& tape, const diff::Var& feature, std::span<const int> image) const;

  GeometryOutput eval(diff::Tape& tape, const diff::Var& x, const diff::Var& dirs, std::span<const int> image) const;

  diff::Param& appearance() const { return *appearance_; }

 private:
  FieldConfig cfg_;
  int num_images_;
  Mlp trunk_;
  Linear density_head_;
  Linear color_head_;
  diff::Param* appearance_ = nullptr;
  Mlp transient_;
  Linear transient_sigma_;
  Linear transient_color_;
  Linear transient_beta_;
  diff::Param* transient_embed_ = nullptr;
};

struct RenderOutput {
  diff::Var sigma_static;
  diff::Var sigma_transient;
  diff::Var color_transient;
  diff::Var beta;
  diff::Var normal;    // B x 3, unit rows
  diff::Var diffuse;   // K_d, B x 3
  diff::Var specular;  // K_s, B x 1
  diff::Var gloss;     // g >= 1, B x 1
};

struct Material {
  diff::Var normal;
  diff::Var diffuse;
  diff::Var specular;
  diff::Var gloss;
};

class RenderNet {
 public:
  /// Registers the material group. The geometry net must outlive this one.
  RenderNet(diff::ParamStore& store, const GeometryNet& geometry, Rng& rng);

  const GeometryNet& geometry() const { return geometry_; }
  Material material(diff::Tape& tape, const diff::Var& x, const diff::Var& feature) const;
  RenderOutput eval(diff::Tape& tape, const diff::Var& x, std::span<const int> image) const;

 private:
  const GeometryNet& geometry_;
  Mlp branch_;
  Linear normal_head_;
  Linear diffuse_head_;
  Linear specular_head_;
  Linear gloss_head_;
};

}  // namespace irender
