// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Confidence-weighted normals from a voxelized density field.
//
// The density is sampled at the N^3 cell centers of a box, remapped to
// [0, 1/lambda], and convolved with the 5^3 kernel o / |o|^2. The negated
// response is scaled by a fixed pre-scale (the raw response to a unit step
// between adjacent cells, 1/13.7889) and then divided by max(1, |n|^2), so
// cells next to a saturated unit step get confidence 1. Cells within two
// cells of the border have zero confidence.

#pragma once

#include "irender/diff/tape.hpp"
#include "irender/render.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace irender {

/// (1/lambda)(1 - exp(-lambda sigma)).
double remap_density(double sigma, double lambda);

/// Sum of o_x / |o|^2 over kernel offsets with o_x > 0.
double sobel_step_response();

/// Evaluates the density at M x 3 positions, returning M x 1.
using DensityFn = std::function<diff::Matrix(const diff::Matrix& points)>;

struct NormalGridOptions {
  int resolution = 128;
  double lambda = 1.0;
  /// Divide by max(1, |n|) instead of max(1, |n|^2).
  bool unit_clamp = false;
};

struct NormalSample {
  Vec3 normal = Vec3::Zero();  // length is the confidence
  double confidence = 0.0;
};

class NormalGrid {
 public:
  NormalGrid() = default;
  NormalGrid(const Aabb& box, int n, double lambda);

  const Aabb& box() const { return box_; }
  int resolution() const { return n_; }
  double lambda() const { return lambda_; }
  Vec3 cell_size() const { return box_.extent() / n_; }
  Vec3 cell_center(int i, int j, int k) const;
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * n_ + static_cast<std::size_t>(j)) * n_ + static_cast<std::size_t>(i);
  }

  float& density(int i, int j, int k) { return density_[index(i, j, k)]; }
  float density(int i, int j, int k) const { return density_[index(i, j, k)]; }
  Vec3 normal(int i, int j, int k) const;
  void set_normal(int i, int j, int k, const Vec3& v);

  /// Trilinear interpolation of the cell vectors; zero outside the box.
  NormalSample sample(const Vec3& x) const;
  /// Trilinear interpolation of the stored densities; zero outside the box.
  double sample_density(const Vec3& x) const;
  /// Row-wise sample for M x 3 positions, M x 3 vectors.
  diff::Matrix sample(const diff::Matrix& points) const;

  const std::vector<float>& densities() const { return density_; }
  const std::vector<float>& normals() const { return normal_; }
  std::vector<float>& densities() { return density_; }
  std::vector<float>& normals() { return normal_; }

 private:
  Aabb box_;
  int n_ = 0;
  double lambda_ = 1.0;
  std::vector<float> density_;
  std::vector<float> normal_;
};

/// Fills remapped densities at cell centers (one density call per z slice).
/// Throws InputError for a degenerate box or resolution below 8.
NormalGrid build_grid(const DensityFn& density, const Aabb& box, int resolution, double lambda);

/// Computes the confidence-weighted normals of a filled grid in place.
void sobel_gradient(NormalGrid& grid, bool unit_clamp = false);

/// build_grid followed by sobel_gradient.
NormalGrid extract_normal_grid(const DensityFn& density, const Aabb& box, const NormalGridOptions& options);

/// Ablation without the remap/convolution: unit-length negated central
/// differences of the raw density (confidence 1 wherever the difference is
/// nonzero). Stored densities are raw.
NormalGrid finite_difference_grid(const DensityFn& density, const Aabb& box, int resolution);

/// Binary grid file: "NRGD", u32 version, i32 N, 6 x f64 box, f64 lambda,
/// then N^3 f32 densities and N^3 x 3 f32 vectors (x fastest).
void write_grid(const std::filesystem::path& path, const NormalGrid& grid);
NormalGrid read_grid(const std::filesystem::path& path);

}  // namespace irender
