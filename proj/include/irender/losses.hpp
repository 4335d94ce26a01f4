// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Training objectives. Every function returns a 1 x 1 Var averaged over the
// batch rows.

#pragma once

#include "irender/diff/tape.hpp"

#include <span>

namespace irender {

struct LossWeights {
  // Geometry stage.
  double geo_transient = 0.01;
  double silhouette = 0.1;
  double camera = 0.01;
  // Rendering stage.
  double render_transient = 1.0;
  double normal = 5.0;
  double smooth = 0.5;
  // Regularizer.
  double spec = 0.1;
  double gamma = 5.0;
  double light = 5.0;
  double light_tau = 0.01;
  // Clamp for the silhouette cross entropy.
  double bce_eps = 1e-6;
};

/// |C - I|^2 / (2 beta^2) + log(beta^2) / 2 per ray. Throws ContractViolation
/// when any beta is below `beta_floor`.
diff::Var loss_color(const diff::Var& color, const diff::Matrix& target, const diff::Var& beta, double beta_floor);

/// Mean transient density over all samples.
diff::Var loss_transient(const diff::Var& sigma_transient);

/// Binary cross entropy between opacity (B x 1) and mask (B x 1).
diff::Var loss_silhouette(const diff::Var& opacity, const diff::Matrix& mask, double eps = 1e-6);

/// Mean squared norm of the per-image delta rows.
diff::Var loss_camera(const diff::Var& deltas);

/// | |g| n - g |^2 with g the grid vector (confidence as its length).
diff::Var loss_normal(const diff::Var& normal, const diff::Matrix& grid_normal);

/// |n(x) - n(x + delta)|^2.
diff::Var loss_smooth(const diff::Var& normal, const diff::Var& jittered_normal);

struct RegTerms {
  diff::Var spec;
  diff::Var gamma;
  diff::Var light;
  diff::Var total;
};

/// spec: batch mean of |K_s|^2; gamma: mean over all images of (gamma - 2.4)^2;
/// light: mean over sampled (image, direction) pairs of
/// |ReLU(-L_k(w) - tau)|^2 summed over RGB. Weighted by `w`.
RegTerms loss_reg(const diff::Var& specular, const diff::Var& gamma, const diff::Var& lights,
                  std::span<const int> light_image, const diff::Matrix& light_dirs, const LossWeights& w);

struct GeoLossTerms {
  diff::Var color, transient, silhouette, camera;
};
struct RenderLossTerms {
  diff::Var color, transient, normal, smooth, reg;
};

/// L_c + w_tr L_tr + w_sil L_sil + w_cam L_cam; absent terms count as zero.
diff::Var total_geo(diff::Tape& tape, const GeoLossTerms& t, const LossWeights& w);
/// L_c + w_tr L_tr + w_n L_n + w_sm L_sm + L_reg; absent terms count as zero.
diff::Var total_render(diff::Tape& tape, const RenderLossTerms& t, const LossWeights& w);

}  // namespace irender
