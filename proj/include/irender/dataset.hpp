// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Multi-view datasets, the per-epoch ray pool and synthetic oracle scenes.
//
// On-disk layout:
//   images/<name>.png   8-bit RGB(A), stored pixel values are the targets
//   masks/<name>.png    8-bit, foreground >= 128
//   cameras.json        one record per image (see camera.hpp)
//   points.txt          optional, one "x y z" per line
//   split.json          optional {"train": [names], "test": [names]}

#pragma once

#include "irender/camera.hpp"
#include "irender/image.hpp"
#include "irender/render.hpp"
#include "irender/shading.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace irender {

struct SceneDataset {
  std::vector<std::string> names;
  std::vector<Image> images;  // RGB in [0, 1], white outside the mask
  std::vector<Image> masks;   // one channel, 0 or 1
  std::vector<Camera> cameras;
  std::vector<Vec3> points;
  std::vector<int> train;
  std::vector<int> test;

  int size() const { return static_cast<int>(names.size()); }
  int index_of(const std::string& name) const;
  /// Box around the points padded by 5% of its extent, if there are points.
  std::optional<Aabb> point_bounds() const;
};

struct LoadOptions {
  /// Grows every mask by this many pixels before whitening the background.
  int mask_dilate = 0;
};

/// Throws InputError naming the offending file on missing or inconsistent
/// inputs.
SceneDataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});
void save_dataset(const std::filesystem::path& dir, const SceneDataset& data);

/// Binary dilation with a disk of the given pixel radius.
Image dilate_mask(const Image& mask, int radius);

/// Sets every pixel outside the mask to white.
void whiten_background(Image& image, const Image& mask);

struct RayRef {
  int image = 0;
  int pixel = 0;  // y * width + x
  bool operator==(const RayRef&) const = default;
};

struct RayPool {
  std::vector<RayRef> foreground;
  std::vector<RayRef> background;
};

RayPool build_ray_pool(const SceneDataset& data, std::span<const int> images);

/// Keeps every foreground ray and a uniformly random subset of at most twice
/// as many background rays (all of them when `adaptive` is off), then
/// shuffles. Throws InputError when the pool has no foreground rays.
std::vector<RayRef> rebalance_epoch(const RayPool& pool, std::uint64_t seed, bool adaptive = true);

// Synthetic scenes ---------------------------------------------------------

struct Primitive {
  enum class Shape { kSphere, kBox };
  Shape shape = Shape::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // radius in x for spheres, half extents for boxes
  Vec3 kd = Vec3(1, 0, 0);
  double ks = 0.0;
  double gloss = 1.0;
};

struct SyntheticSpec {
  std::string name = "custom";
  std::vector<Primitive> primitives;
  double density = 50.0;
  int views = 8;
  int test_views = 2;
  int width = 64;
  int height = 64;
  double distance = 4.0;
  double fov_deg = 40.0;
  double elevation_min_deg = 15.0;
  double elevation_max_deg = 40.0;
  double jitter_deg = 4.0;
  bool random_lighting = false;
  Vec3 light_color = Vec3::Ones();
  /// "sh" renders with the SH shader; "mc" integrates the environment with
  /// the Monte-Carlo oracle.
  std::string shading = "sh";
  int mc_samples = 256;
  int supersample = 4;
  double gamma = 2.4;
  double pose_noise_deg = 0.0;
  int num_points = 2000;
};

/// Built-in specs: "red-sphere", "blocks" (asymmetric multi-colored union),
/// "toy" (small blocks).
SyntheticSpec synthetic_preset(const std::string& name);
/// A preset name or a JSON file; a "preset" key in the file selects the base
/// that the other keys override.
SyntheticSpec read_synthetic_spec(const std::string& name_or_path);

struct SurfaceHit {
  double t = 0.0;
  Vec3 normal = Vec3::Zero();
  int primitive = -1;
};

/// Nearest intersection with positive t.
std::optional<SurfaceHit> intersect(const SyntheticSpec& spec, const Vec3& origin, const Vec3& dir);
/// sigma = density inside any primitive, else 0 (M x 3 -> M x 1).
diff::Matrix synthetic_density(const SyntheticSpec& spec, const diff::Matrix& points);
/// Outward normal of the primitive surface closest to `x`.
Vec3 synthetic_normal(const SyntheticSpec& spec, const Vec3& x);

struct SyntheticScene {
  SyntheticSpec spec;
  std::uint64_t seed = 0;
  SceneDataset dataset;              // cameras possibly perturbed
  std::vector<Camera> true_cameras;
  std::vector<ShLight> lights;       // one per image
  std::vector<Image> linear;         // linear radiance over white, before tone map
};

SyntheticScene make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);
/// Writes the dataset plus ground_truth.json.
void write_synthetic(const std::filesystem::path& dir, const SyntheticScene& scene);

struct GroundTruth {
  SyntheticSpec spec;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::vector<Camera> cameras;
  std::vector<ShLight> lights;
};
GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace irender
