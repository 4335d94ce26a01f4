// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/camera.hpp"
#include "irender/diff/ops.hpp"
#include "irender/error.hpp"
#include "irender/util/random.hpp"
#include "support/fd_check.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <numbers>

namespace irender {
namespace {

using diff::Matrix;
using diff::Tape;
using diff::Var;

Camera look_at(const Vec3& eye, const Vec3& target, double focal = 80.0, int w = 64, int h = 48) {
  const Vec3 z = (target - eye).normalized();
  Vec3 up(0, -1, 0);
  if (std::abs(z.dot(up)) > 0.99) up = Vec3(0, 0, 1);
  const Vec3 x = up.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Camera c;
  c.rotation.col(0) = x;
  c.rotation.col(1) = y;
  c.rotation.col(2) = z;
  c.translation = eye;
  c.focal = focal;
  c.principal = Vec2(w / 2.0, h / 2.0);
  c.width = w;
  c.height = h;
  c.near = 0.5;
  c.far = 10.0;
  return c;
}

std::vector<Camera> ring(Rng& rng, int n) {
  std::vector<Camera> cams;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n + rng.uniform(-0.2, 0.2);
    const Vec3 eye(4.0 * std::cos(a), rng.uniform(-1.0, 1.0), 4.0 * std::sin(a));
    cams.push_back(look_at(eye, Vec3(rng.uniform(-0.2, 0.2), 0, 0), rng.uniform(60, 100)));
  }
  return cams;
}

TEST(Rodrigues, ZeroIsIdentity) { EXPECT_TRUE(rodrigues(Vec3::Zero()).isApprox(Mat3::Identity())); }

TEST(Rodrigues, QuarterTurnAboutZMapsXToY) {
  const Vec3 y = rodrigues(Vec3(0, 0, std::numbers::pi / 2)) * Vec3::UnitX();
  EXPECT_NEAR((y - Vec3::UnitY()).norm(), 0.0, 1e-12);
}

TEST(Camera, ZeroDeltaLeavesCameraUnchanged) {
  const Camera c = look_at(Vec3(1, 2, 3), Vec3::Zero());
  const Camera d = apply_delta(c, CameraDelta{});
  EXPECT_TRUE(d.rotation.isApprox(c.rotation));
  EXPECT_TRUE(d.translation.isApprox(c.translation));
  EXPECT_EQ(d.focal, c.focal);
}

TEST(Camera, PrincipalPointRayIsOpticalAxis) {
  const Camera c = look_at(Vec3(1, 2, 3), Vec3::Zero());
  const Ray r = pixel_ray(c, c.principal);
  EXPECT_NEAR((r.direction - c.rotation.col(2)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((r.origin - c.translation).norm(), 0.0, 1e-12);
}

TEST(Camera, DoublingFocalHalvesOffAxisTangent) {
  Camera c = look_at(Vec3(0, 0, -3), Vec3::Zero());
  const Vec2 px = c.principal + Vec2(20, 0);
  const double a1 = std::acos(pixel_ray(c, px).direction.dot(c.rotation.col(2)));
  c.focal *= 2.0;
  const double a2 = std::acos(pixel_ray(c, px).direction.dot(c.rotation.col(2)));
  EXPECT_NEAR(std::tan(a2), 0.5 * std::tan(a1), 1e-12);
}

TEST(Camera, ProjectInvertsPixelRay) {
  Rng rng(3);
  const Camera c = look_at(Vec3(2, -1, 3), Vec3::Zero());
  for (int i = 0; i < 100; ++i) {
    const Vec2 px(rng.uniform(0, c.width), rng.uniform(0, c.height));
    const Ray r = pixel_ray(c, px);
    const Vec2 back = c.project(r.at(rng.uniform(0.5, 8.0)));
    EXPECT_NEAR((back - px).norm(), 0.0, 1e-6);
  }
}

TEST(Camera, OutOfBoundsPixelIsRejected) {
  const Camera c = look_at(Vec3(0, 0, -3), Vec3::Zero());
  EXPECT_THROW(pixel_ray(c, Vec2(-0.5, 3)), InputError);
  EXPECT_THROW(pixel_ray(c, Vec2(3, c.height + 0.1)), InputError);
  EXPECT_NO_THROW(pixel_ray(c, Vec2(c.width, c.height)));
}

TEST(Camera, ValidateRejectsBadIntrinsics) {
  Camera c = look_at(Vec3(0, 0, -3), Vec3::Zero());
  c.focal = 0.0;
  EXPECT_THROW(c.validate(), InputError);
  c.focal = 10.0;
  c.near = 5.0;
  c.far = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c.far = 6.0;
  c.rotation(0, 0) += 0.01;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(CameraRays, MatchesPixelRayAfterDelta) {
  Rng rng(5);
  std::vector<Camera> cams = ring(rng, 3);
  Matrix deltas(3, CameraDelta::kSize);
  for (Eigen::Index i = 0; i < deltas.size(); ++i) deltas.data()[i] = rng.uniform(-0.1, 0.1);
  std::vector<int> image;
  std::vector<Vec2> pixels;
  for (int k = 0; k < 30; ++k) {
    image.push_back(k % 3);
    pixels.emplace_back(rng.uniform(0, 64), rng.uniform(0, 48));
  }
  Tape tape;
  const RayVars rays = camera_rays(tape, cams, tape.variable(deltas), image, pixels);
  const std::vector<Camera> moved = apply_deltas(cams, deltas);
  for (int k = 0; k < 30; ++k) {
    const Ray r = pixel_ray(moved[static_cast<std::size_t>(image[k])], pixels[k]);
    EXPECT_NEAR((rays.origins.value().row(k).transpose() - r.origin).norm(), 0.0, 1e-12);
    EXPECT_NEAR((rays.directions.value().row(k).transpose() - r.direction).norm(), 0.0, 1e-12);
  }
}

TEST(CameraRays, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  std::vector<Camera> cams = ring(rng, 4);
  std::vector<int> image;
  std::vector<Vec2> pixels;
  for (int k = 0; k < 40; ++k) {
    image.push_back(k % 4);
    pixels.emplace_back(rng.uniform(0, 64), rng.uniform(0, 48));
  }
  Matrix weights(40, 6);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-1, 1);
  for (double scale : {0.0, 1e-3, 0.3}) {
    Matrix deltas(4, CameraDelta::kSize);
    for (Eigen::Index i = 0; i < deltas.size(); ++i) deltas.data()[i] = scale * rng.uniform(-1, 1);
    testing::ScalarFn fn = [&](Tape& t, const std::vector<Var>& in) {
      const RayVars r = camera_rays(t, cams, in[0], image, pixels);
      return diff::sum(diff::mul(diff::concat_cols({r.origins, r.directions}), t.constant(weights)));
    };
    const auto check = testing::check_gradients(fn, {deltas}, 1e-6);
    EXPECT_LT(check.max_rel_error, 1e-5) << "delta scale " << scale;
  }
}

TEST(CameraRays, SharedFocalUsesFirstRow) {
  Rng rng(2);
  std::vector<Camera> cams = ring(rng, 2);
  Matrix deltas = Matrix::Zero(2, CameraDelta::kSize);
  deltas(0, 6) = 5.0;
  deltas(1, 6) = -30.0;
  const std::vector<int> image{1};
  const std::vector<Vec2> pixels{Vec2(10, 10)};
  Tape tape;
  const RayVars r = camera_rays(tape, cams, tape.variable(deltas), image, pixels, true);
  Camera c = cams[1];
  c.focal += 5.0;
  EXPECT_NEAR((r.directions.value().row(0).transpose() - pixel_ray(c, pixels[0]).direction).norm(), 0.0, 1e-12);
}

TEST(Fundamental, EpipolarConstraintHolds) {
  Rng rng(7);
  std::vector<Camera> cams = ring(rng, 5);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    for (std::size_t j = 0; j < cams.size(); ++j) {
      if (i == j) continue;
      const FundamentalMatrix f = fundamental_matrix(cams[i], cams[j]);
      ASSERT_FALSE(f.degenerate);
      EXPECT_NEAR(f.F.norm(), 1.0, 1e-12);
      for (int k = 0; k < 20; ++k) {
        const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec2 a = cams[i].project(p), b = cams[j].project(p);
        EXPECT_NEAR(b.homogeneous().dot(f.F * a.homogeneous()), 0.0, 1e-8);
      }
    }
  }
}

TEST(Fundamental, CoincidentCentersAreDegenerate) {
  const Camera a = look_at(Vec3(0, 0, -3), Vec3::Zero());
  const Camera b = look_at(Vec3(0, 0, -3), Vec3(1, 0, 0));
  EXPECT_TRUE(fundamental_matrix(a, b).degenerate);
  EXPECT_EQ(fundamental_matrix(a, b).F.norm(), 0.0);
}

// Hartley-normalized eight-point estimate from exact correspondences.
Mat3 eight_point(const std::vector<Vec2>& xi, const std::vector<Vec2>& xj) {
  auto normalizer = [](const std::vector<Vec2>& pts) {
    Vec2 mean = Vec2::Zero();
    for (const Vec2& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double d = 0.0;
    for (const Vec2& p : pts) d += (p - mean).norm();
    const double s = std::sqrt(2.0) * static_cast<double>(pts.size()) / d;
    Mat3 t;
    t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return t;
  };
  const Mat3 ti = normalizer(xi), tj = normalizer(xj);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(xi.size()), 9);
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const Vec3 p = ti * xi[k].homogeneous(), q = tj * xj[k].homogeneous();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a(static_cast<Eigen::Index>(k), 3 * r + c) = q(r) * p(c);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(8);
  Mat3 f;
  f << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  Eigen::JacobiSVD<Mat3> fs(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sv = fs.singularValues();
  sv(2) = 0.0;
  f = tj.transpose() * (fs.matrixU() * sv.asDiagonal() * fs.matrixV().transpose()) * ti;
  f /= f.norm();
  for (int k = 0; k < 9; ++k) {
    if (std::abs(f(k / 3, k % 3)) > 1e-12) {
      if (f(k / 3, k % 3) < 0) f = -f;
      break;
    }
  }
  return f;
}

TEST(Fundamental, MatchesEightPointEstimate) {
  Rng rng(19);
  std::vector<Camera> cams = ring(rng, 4);
  for (std::size_t i = 0; i + 1 < cams.size(); ++i) {
    std::vector<Vec2> xi, xj;
    for (int k = 0; k < 40; ++k) {
      const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      xi.push_back(cams[i].project(p));
      xj.push_back(cams[i + 1].project(p));
    }
    const Mat3 f = fundamental_matrix(cams[i], cams[i + 1]).F;
    EXPECT_LT((f - eight_point(xi, xj)).norm(), 1e-6);
  }
}

TEST(Fmse, ZeroForIdenticalSets) {
  Rng rng(1);
  const std::vector<Camera> cams = ring(rng, 5);
  EXPECT_EQ(fmse(cams, cams), 0.0);
}

TEST(Fmse, InvariantToGlobalSimilarity) {
  Rng rng(4);
  const std::vector<Camera> cams = ring(rng, 5);
  const Mat3 q = rodrigues(Vec3(0.3, -0.7, 0.2));
  const Vec3 shift(1.5, -2.0, 0.4);
  const double s = 2.5;
  std::vector<Camera> moved = cams;
  for (Camera& c : moved) {
    c.rotation = q * c.rotation;
    c.translation = s * (q * c.translation) + shift;
  }
  EXPECT_LT(fmse(cams, moved), 1e-10);
}

TEST(Fmse, PositiveForPerturbedRotation) {
  Rng rng(8);
  const std::vector<Camera> cams = ring(rng, 5);
  std::vector<Camera> moved = cams;
  moved[2].rotation = rodrigues(Vec3(0, 10.0 * std::numbers::pi / 180.0, 0)) * moved[2].rotation;
  EXPECT_GT(fmse(cams, moved), 1e-3);
}

TEST(Fmse, RequiresTwoCameras) {
  Rng rng(8);
  const std::vector<Camera> one = ring(rng, 1);
  EXPECT_THROW(fmse(one, one), InputError);
}

TEST(CameraFile, RoundTripIsLossless) {
  Rng rng(12);
  const std::vector<Camera> cams = ring(rng, 3);
  std::vector<CameraRecord> records;
  for (std::size_t i = 0; i < cams.size(); ++i) records.push_back({"img_" + std::to_string(i) + ".png", cams[i]});
  const auto path = std::filesystem::temp_directory_path() / "irender_camera_test.json";
  write_cameras(path, records);
  const auto back = read_cameras(path);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image, records[i].image);
    EXPECT_EQ(back[i].camera.rotation, records[i].camera.rotation);
    EXPECT_EQ(back[i].camera.translation, records[i].camera.translation);
    EXPECT_EQ(back[i].camera.focal, records[i].camera.focal);
    EXPECT_EQ(back[i].camera.width, records[i].camera.width);
  }
  std::filesystem::remove(path);
}

TEST(CameraFile, MissingFieldIsInputError) {
  const auto path = std::filesystem::temp_directory_path() / "irender_camera_bad.json";
  {
    std::ofstream(path) << R"({"cameras": [{"image": "a.png", "R": [1,0,0,0,1,0,0,0,1]}]})";
  }
  EXPECT_THROW(read_cameras(path), InputError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace irender
