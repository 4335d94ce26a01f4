// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Spherical-harmonics environment lighting with a Phong BRDF.
//
// Real SH basis up to l = 3, indexed j = l^2 + l + m. Directions are world
// space unit vectors; environment maps treat +z as up, with polar angle
// theta from +z and azimuth phi = atan2(y, x).
//
// A lighting set is a 16 x 3 matrix (rows = SH index, columns = RGB). When
// flattened to 48 numbers the order is l-major, m ascending, RGB
// interleaved, which is also the text file layout.

#pragma once

#include "irender/diff/tape.hpp"
#include "irender/image.hpp"
#include "irender/util/random.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <span>

namespace irender {

inline constexpr int kShBands = 4;
inline constexpr int kShCount = 16;
inline constexpr int kLightSize = 3 * kShCount;

/// Lambert transfer per band (l = 0, 1, 2) as published; higher bands are 0.
inline constexpr std::array<double, 3> kLambertBand = {3.14, 2.09, 0.79};

using ShLight = Eigen::Matrix<double, kShCount, 3>;
using EnvFn = std::function<Eigen::Vector3d(const Eigen::Vector3d&)>;

constexpr int sh_band(int j) { return j < 1 ? 0 : (j < 4 ? 1 : (j < 9 ? 2 : 3)); }

/// Y_j(dir) for j < (l_max + 1)^2, l_max <= 3.
std::array<double, kShCount> sh_basis(const Eigen::Vector3d& dir, int l_max = 3);
/// Basis values and their gradients with respect to the (unnormalized)
/// Cartesian direction components.
void sh_basis_grad(const Eigen::Vector3d& dir, std::array<double, kShCount>& y,
                   std::array<Eigen::Vector3d, kShCount>& dy);
/// n x 16 basis matrix for n x 3 directions.
diff::Matrix sh_basis_rows(const diff::Matrix& dirs);

/// Reconstructed radiance sum_j L_j Y_j(dir).
Eigen::Vector3d sh_eval(const ShLight& light, const Eigen::Vector3d& dir);

/// Flat 48-vector (l-major, m ascending, RGB interleaved) conversions.
ShLight light_from_flat(std::span<const double> flat);
std::array<double, kLightSize> light_to_flat(const ShLight& light);

/// Direction of the center of equirectangular pixel (x, y).
Eigen::Vector3d equirect_direction(int x, int y, int width, int height);

struct Projection {
  ShLight light;
  /// RMS difference between env and its reconstruction on the grid.
  double reconstruction_rms = 0.0;
};
/// L_j = integral of env * Y_j over the sphere on a midpoint
/// equirectangular grid with sin(theta) weights.
Projection project_envmap(const EnvFn& env, int l_max = 3, int height = 128, int width = 256);
/// Same for an equirectangular image (linear radiance), sampled at its own
/// pixel centers.
Projection project_envmap(const Image& equirect, int l_max = 3);
/// Bilinear lookup in an equirectangular image.
Eigen::Vector3d equirect_lookup(const Image& equirect, const Eigen::Vector3d& dir);

Eigen::Vector3d shade_lambert(const ShLight& light, const Eigen::Vector3d& n, const Eigen::Vector3d& kd);
Eigen::Vector3d shade_specular(const ShLight& light, const Eigen::Vector3d& n, const Eigen::Vector3d& wo, double ks,
                               double g);
/// shade_lambert + shade_specular.
Eigen::Vector3d shade_point(const ShLight& light, const Eigen::Vector3d& n, const Eigen::Vector3d& wo,
                            const Eigen::Vector3d& kd, double ks, double g);
inline Eigen::Vector3d reflect(const Eigen::Vector3d& n, const Eigen::Vector3d& wo) { return 2.0 * n.dot(wo) * n - wo; }

/// Differentiable shade_point for M points. `lights` is K x 48 (one row per
/// image), `image` selects the row per point; `wo` points from the surface
/// toward the viewer. n (M x 3), kd (M x 3), ks (M x 1), g (M x 1). Each of
/// the two terms is clamped at zero.
diff::Var shade_sh(const diff::Var& lights, std::span<const int> image, const diff::Var& n, const diff::Var& wo,
                   const diff::Var& kd, const diff::Var& ks, const diff::Var& g);

/// Sum over j of lights[image] Y_j(dir) for M x 3 dirs; M x 3 radiance.
diff::Var sh_radiance(const diff::Var& lights, std::span<const int> image, const diff::Matrix& dirs);

/// max(x, 0)^(1 / gamma[image]) per channel. `gamma` is K x 1.
diff::Var tone_map(const diff::Var& x, const diff::Var& gamma, std::span<const int> image);
inline double tone_map(double x, double gamma) { return x > 0.0 ? std::pow(x, 1.0 / gamma) : 0.0; }

/// lerp(c_t, c_sh, exp(-sigma_t)).
diff::Var blend_transient(const diff::Var& c_sh, const diff::Var& c_t, const diff::Var& sigma_t);

struct McEstimate {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d stderr_ = Eigen::Vector3d::Zero();
};
/// Cosine-weighted Monte-Carlo estimate of the hemisphere integral of
/// L(w) rho(wo, w) (n . w) with the Phong BRDF
/// rho = kd / pi + ks (g + 1) / (2 pi) max(0, w . w_r)^g.
McEstimate mc_render_oracle(const EnvFn& env, const Eigen::Vector3d& kd, double ks, double g,
                            const Eigen::Vector3d& n, const Eigen::Vector3d& wo, int samples, Rng& rng);

/// Reads 48 whitespace-separated numbers; '#' starts a comment.
ShLight read_sh_file(const std::filesystem::path& path);
void write_sh_file(const std::filesystem::path& path, const ShLight& light);

/// Constant environment of radiance c.
inline ShLight constant_light(const Eigen::Vector3d& c) {
  ShLight l = ShLight::Zero();
  l.row(0) = (c * 2.0 * std::sqrt(std::numbers::pi)).transpose();
  return l;
}

}  // namespace irender
