// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/error.hpp"
#include "irender/metrics.hpp"
#include "irender/util/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace irender {
namespace {

Image noise(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h, 3);
  for (double& v : img.data) v = rng.uniform(0.1, 0.8);
  return img;
}

TEST(Metrics, IdenticalImages) {
  const Image a = noise(16, 16, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Metrics, UniformOffsetGivesTwentyDecibels) {
  const Image a = noise(16, 16, 2);
  Image b = a;
  for (double& v : b.data) v += 0.1;
  EXPECT_NEAR(mse(a, b), 0.01, 1e-12);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Metrics, MaskedMseIgnoresBackground) {
  Image a(4, 4, 3, 0.5), b(4, 4, 3, 0.5), m(4, 4, 1, 0.0);
  b.at(0, 0, 0) = 1.0;
  m.at(1, 1, 0) = 1.0;
  EXPECT_EQ(mse(a, b, &m), 0.0);
  m.at(0, 0, 0) = 1.0;
  EXPECT_NEAR(mse(a, b, &m), 0.25 / 6.0, 1e-15);
}

TEST(Metrics, SsimMatchesClosedFormForConstantImages) {
  // Constant images: the structure term is 1 and the luminance term is
  // (2ab + C1) / (a^2 + b^2 + C1).
  const Image a(12, 12, 1, 0.3), b(12, 12, 1, 0.6);
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(a, b), (2 * 0.3 * 0.6 + c1) / (0.09 + 0.36 + c1), 1e-12);
}

TEST(Metrics, SsimDecreasesWithNoise) {
  const Image a = noise(32, 32, 3);
  Rng rng(4);
  Image b = a, c = a;
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    const double n = rng.normal();
    b.data[i] += 0.02 * n;
    c.data[i] += 0.1 * n;
  }
  EXPECT_GT(ssim(a, b), ssim(a, c));
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Metrics, Mmse) {
  Image mask(4, 4, 1, 0.0);
  mask.at(2, 2, 0) = 1.0;
  EXPECT_EQ(mmse(mask, mask), 0.0);
  Image alpha(4, 4, 1, 0.0);
  EXPECT_NEAR(mmse(alpha, mask), 1.0 / 16.0, 1e-15);
}

TEST(Metrics, SizeMismatchIsRejected) {
  EXPECT_THROW(psnr(Image(4, 4, 3), Image(5, 4, 3)), InputError);
  EXPECT_THROW(ssim(Image(4, 4, 3), Image(4, 4, 3)), InputError);
  EXPECT_THROW(mmse(Image(4, 4, 1), Image(4, 5, 1)), InputError);
}

}  // namespace
}  // namespace irender
