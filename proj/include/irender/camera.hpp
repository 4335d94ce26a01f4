// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Pinhole cameras with trainable refinement deltas.
//
// Conventions: camera space looks down +z with +x right and +y down; pixel
// (u, v) is a continuous coordinate with pixel centers at integer + 0.5.
// `rotation` maps camera to world and `translation` is the camera center.

#pragma once

#include "irender/diff/tape.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace irender {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double focal = 1.0;
  Vec2 principal = Vec2::Zero();
  int width = 1;
  int height = 1;
  double near = 0.1;
  double far = 10.0;

  /// Throws InputError unless R is orthonormal (1e-6), focal > 0, near < far.
  void validate() const;
  const Vec3& center() const { return translation; }
  Mat3 intrinsics() const;
  /// World point to continuous pixel coordinates.
  Vec2 project(const Vec3& world) const;
  /// Depth of a world point along the optical axis.
  double depth(const Vec3& world) const;
};

/// Axis-angle rotation, translation and focal offsets for one image.
struct CameraDelta {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  double focal = 0.0;

  static constexpr int kSize = 7;  // packed as [rx ry rz tx ty tz f]
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Vec2 pixel = Vec2::Zero();
  int image = 0;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Camera at `eye` looking at `target` with `up` pointing up on screen.
/// Principal point at the image center.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height,
               double near, double far);

/// exp([w]x) via Rodrigues' formula.
Mat3 rodrigues(const Vec3& axis_angle);

/// R' = exp([dR]x) R, t' = t + dt, f' = f + df.
Camera apply_delta(const Camera& cam, const CameraDelta& delta);

/// Throws InputError when `px` lies outside [0, W] x [0, H].
Ray pixel_ray(const Camera& cam, const Vec2& px, int image = 0);

struct FundamentalMatrix {
  Mat3 F = Mat3::Zero();
  /// Set when the camera centers coincide (no epipolar geometry).
  bool degenerate = false;
};

/// F with x_j^T F x_i = 0 for pixel correspondences (x_i in image i),
/// normalized to unit Frobenius norm with the first nonzero entry (row-major)
/// positive.
FundamentalMatrix fundamental_matrix(const Camera& cam_i, const Camera& cam_j);

/// Mean over ordered pairs i != j of the Frobenius distance between the
/// normalized fundamental matrices of the two camera sets.
double fmse(std::span<const Camera> gt, std::span<const Camera> pred);

/// Differentiable ray origins/directions (B x 3 each) for pixels of several
/// cameras. `deltas` is N x 7 (one packed CameraDelta per image) or an
/// invalid Var for fixed cameras. With `shared_focal` the focal offset of
/// row 0 applies to every image.
struct RayVars {
  diff::Var origins;
  diff::Var directions;
};
RayVars camera_rays(diff::Tape& tape, std::span<const Camera> cameras, const diff::Var& deltas,
                    std::span<const int> image, std::span<const Vec2> pixels, bool shared_focal = false);

/// Packs/unpacks the per-image delta table.
CameraDelta delta_from_row(const diff::Matrix& deltas, int row, bool shared_focal = false);
std::vector<Camera> apply_deltas(std::span<const Camera> cameras, const diff::Matrix& deltas,
                                 bool shared_focal = false);

/// One record per image in cameras.json.
struct CameraRecord {
  std::string image;
  Camera camera;
};
std::vector<CameraRecord> read_cameras(const std::filesystem::path& path);
void write_cameras(const std::filesystem::path& path, std::span<const CameraRecord> records);

}  // namespace irender
