// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <vector>

namespace irender {

/// Interleaved float image, row-major from the top-left pixel. Values are
/// nominally in [0, 1] for 8-bit sources.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  Eigen::Vector3d rgb(int x, int y) const;
  void set_rgb(int x, int y, const Eigen::Vector3d& v);
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

/// 8-bit PNG. Gray, gray+alpha, RGB and RGBA files load with their channel
/// count (1, 2, 3, 4); 16-bit files are reduced to 8 bits.
Image read_png(const std::filesystem::path& path);
/// Writes 1, 3 or 4 channels; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& img);

/// Portable float map (color "PF" or gray "Pf"), stored bottom-up.
Image read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Image& img);

/// 8-bit quantization used for PNG output.
inline double quantize8(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<double>(static_cast<int>(c * 255.0 + 0.5)) / 255.0;
}

}  // namespace irender
