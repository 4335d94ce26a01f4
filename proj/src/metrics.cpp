// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/metrics.hpp"

#include "irender/error.hpp"

#include <array>
#include <cmath>

namespace irender {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b) || a.channels != b.channels)
    throw InputError(std::string(what) + ": image sizes differ");
}

}  // namespace

double mse(const Image& a, const Image& b, const Image* mask) {
  check_same(a, b, "mse");
  if (mask != nullptr && (!mask->same_size(a) || mask->channels != 1)) throw InputError("mse: mask size differs");
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask != nullptr && mask->at(x, y, 0) < 0.5) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        sum += d * d;
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double psnr(const Image& a, const Image& b, const Image* mask) {
  const double m = mse(a, b, mask);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double ssim(const Image& a, const Image& b) {
  check_same(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  if (a.width < kWin || a.height < kWin) throw InputError("ssim: images smaller than the 11x11 window");
  std::array<double, kWin> g{};
  double gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
    gs += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= gs;
  double total = 0.0;
  long count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y0 = 0; y0 + kWin <= a.height; ++y0) {
      for (int x0 = 0; x0 + kWin <= a.width; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < kWin; ++dy) {
          for (int dx = 0; dx < kWin; ++dx) {
            const double w = g[static_cast<std::size_t>(dy)] * g[static_cast<std::size_t>(dx)];
            const double va = a.at(x0 + dx, y0 + dy, c), vb = b.at(x0 + dx, y0 + dy, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

double mmse(const Image& alpha, const Image& mask) {
  if (!alpha.same_size(mask) || alpha.channels != 1 || mask.channels != 1) throw InputError("mmse: size mismatch");
  return mse(alpha, mask);
}

}  // namespace irender
