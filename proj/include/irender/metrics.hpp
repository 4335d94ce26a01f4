// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Image metrics. Images are compared channel-wise on [0, 1] values.

#pragma once

#include "irender/image.hpp"

namespace irender {

inline constexpr double kPsnrCap = 99.0;

/// Mean squared error over all channels; `mask` (one channel, optional)
/// restricts it to pixels with mask >= 0.5.
double mse(const Image& a, const Image& b, const Image* mask = nullptr);
/// 10 log10(1 / MSE), capped at 99 dB.
double psnr(const Image& a, const Image& b, const Image* mask = nullptr);
/// Gaussian-window SSIM (11 x 11, sigma 1.5, K1 0.01, K2 0.03, L 1) averaged
/// over the valid window positions and channels.
double ssim(const Image& a, const Image& b);
/// Mean squared difference between an opacity map and a binary mask.
double mmse(const Image& alpha, const Image& mask);

}  // namespace irender
