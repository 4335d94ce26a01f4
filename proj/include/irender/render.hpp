// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Ray sampling and volumetric compositing.
//
// Rays of a batch that intersect the sampling interval all carry the same
// number of samples; rays that miss get none and composite to the white
// background. Compositing works on the V valid rays and `to_pixels` scatters
// the result back to all B rays.

#pragma once

#include "irender/camera.hpp"
#include "irender/diff/tape.hpp"
#include "irender/util/random.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace irender {

struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  /// Box of `points` grown by `pad` times its extent on every side.
  static Aabb around(std::span<const Vec3> points, double pad);
};

/// Parametric interval [t0, t1] of the ray inside the box intersected with
/// [near, far]; nullopt when empty.
std::optional<std::pair<double, double>> clip_ray(const Vec3& origin, const Vec3& dir, double near, double far,
                                                  const Aabb& box);

/// Stratified depths on [near, far], clipped to `box` when given. Without
/// `rng` the depths are evenly spaced including both ends; with it each of
/// the N strata (split at midpoints of the even grid) receives one uniform
/// draw. Empty when the clipped interval is empty. Requires n >= 2.
std::vector<double> sample_stratified(const Ray& ray, int n, double near, double far, const Aabb* box, Rng* rng);

struct SampleBatch {
  Eigen::Index rays = 0;  // B
  int per_ray = 0;        // N
  std::vector<int> ray_of;  // index into the B rays for each valid ray
  diff::Matrix depths;      // V x N
  diff::Matrix deltas;      // V x N, first entry measured from the clipped near depth
  diff::Matrix near;        // V x 1, clipped near depth
  diff::Matrix far;         // V x 1, clipped far depth

  Eigen::Index valid() const { return static_cast<Eigen::Index>(ray_of.size()); }
};

/// Samples every row of `origins`/`dirs` (B x 3).
SampleBatch sample_batch(const diff::Matrix& origins, const diff::Matrix& dirs, std::span<const double> near,
                         std::span<const double> far, int n, const Aabb* box, Rng* rng);

/// Adds `n_fine` depths per ray drawn by inverse-CDF sampling of the
/// piecewise-constant density given by `weights` (V x N) and merges them
/// with the coarse depths.
SampleBatch resample_importance(const SampleBatch& coarse, const diff::Matrix& weights, int n_fine, Rng* rng);

/// Sample positions, (V*N) x 3, ordered ray-major. Differentiable in the ray
/// origins and directions (B x 3 each).
diff::Var sample_points(const SampleBatch& s, const diff::Var& origins, const diff::Var& dirs);
/// Ray directions repeated per sample, (V*N) x 3.
diff::Var sample_dirs(const SampleBatch& s, const diff::Var& dirs);

/// Single-density compositing over V rays of N samples. `sigma` is
/// (V*N) x 1, `color` is (V*N) x 3. Output V x 4: color and opacity
/// 1 - prod w_i (white background not yet added).
diff::Var composite_static(const diff::Var& sigma, const diff::Var& color, const diff::Matrix& deltas);

/// Static plus transient compositing with joint attenuation. Output V x 5:
/// color, integrated beta (weights alpha_i (1 - w_s w_t) plus `beta_min`) and
/// opacity.
diff::Var composite_joint(const diff::Var& sigma_s, const diff::Var& color_s, const diff::Var& sigma_t,
                          const diff::Var& color_t, const diff::Var& beta, const diff::Matrix& deltas,
                          double beta_min);

/// Compositing weights alpha_i (1 - w_i), V x N.
diff::Matrix composite_weights(const diff::Matrix& sigma, const diff::Matrix& deltas);

struct DepthStats {
  diff::Matrix mean;      // V x 1
  diff::Matrix variance;  // V x 1
  diff::Matrix opacity;   // V x 1, sum of weights
  std::vector<bool> empty;  // all-zero weights
};
DepthStats depth_stats(const diff::Matrix& weights, const diff::Matrix& depths);

/// Scatters per-valid-ray results (V x k, last column opacity) to B rays
/// and adds (1 - opacity) * background to the first three columns. Missing
/// rays get the background color and zero opacity.
diff::Var to_pixels(const diff::Var& per_ray, const SampleBatch& s, double background = 1.0);

/// Shading callback: positions (M x 3), ray index of each position into the
/// valid rays, returns linear colors (M x 3).
using ShadeFn = std::function<diff::Var(const diff::Matrix& points, std::span<const int> ray)>;

/// Shades every sample and composites with the static density. Output V x 4.
diff::Var shade_all_points(diff::Tape& tape, const SampleBatch& s, const diff::Matrix& origins,
                           const diff::Matrix& dirs, const diff::Matrix& sigma, const ShadeFn& shade);

struct HybridStats {
  int expected_rays = 0;
  int full_rays = 0;
  int empty_rays = 0;
};

/// Rays whose depth variance is below `tau_d` are shaded once at the
/// expected depth and weighted by their opacity; the others are shaded at
/// every sample and composited. Output V x 4 (color, opacity). `origins`
/// and `dirs` are the B x 3 ray values.
diff::Var hybrid_shade(diff::Tape& tape, const SampleBatch& s, const diff::Matrix& origins, const diff::Matrix& dirs,
                       const diff::Matrix& sigma, double tau_d, const ShadeFn& shade, HybridStats* stats = nullptr);

/// (far - near) / 5000.
inline double default_tau_d(double near, double far) { return (far - near) / 5000.0; }

}  // namespace irender
