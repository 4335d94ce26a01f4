// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/checkpoint.hpp"
#include "irender/diff/ops.hpp"
#include "irender/error.hpp"
#include "irender/field.hpp"
#include "support/fd_check.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

namespace irender {
namespace {

using diff::Matrix;
using diff::ParamStore;
using diff::Tape;
using diff::Var;

Matrix random_points(Rng& rng, int n, double r = 1.3) {
  Matrix m(n, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-r, r);
  return m;
}

Matrix random_dirs(Rng& rng, int n) {
  Matrix m(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    m.row(i) = v.normalized().transpose();
  }
  return m;
}

FieldConfig small_config() {
  FieldConfig c = FieldConfig::desk();
  c.trunk_width = 32;
  c.branch_width = 16;
  return c;
}

TEST(Encode, ZeroInputGivesSinZeroCosOne) {
  Matrix x = Matrix::Zero(1, 1);
  Matrix e = encode(x, 2);
  ASSERT_EQ(e.cols(), 5);
  EXPECT_EQ(e(0, 0), 0.0);
  EXPECT_EQ(e(0, 1), 0.0);
  EXPECT_EQ(e(0, 2), 1.0);
  EXPECT_EQ(e(0, 3), 0.0);
  EXPECT_EQ(e(0, 4), 1.0);
}

TEST(Encode, ZeroFrequenciesIsIdentity) {
  Rng rng(1);
  Matrix x = random_points(rng, 4);
  EXPECT_EQ(encode(x, 0), x);
}

TEST(Encode, HalfAtFirstFrequency) {
  Matrix x = Matrix::Constant(1, 1, 0.5);
  Matrix e = encode(x, 1);
  EXPECT_NEAR(e(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(e(0, 2), 0.0, 1e-15);
}

TEST(Encode, DimensionMatchesFormula) {
  Rng rng(1);
  EXPECT_EQ(encode(random_points(rng, 2), 10).cols(), encoded_dim(3, 10));
  EXPECT_EQ(encoded_dim(3, 10), 63);
}

TEST(Encode, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  Matrix w = random_points(rng, 6, 1.0);
  Matrix weights(6, 3 * 9);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-1, 1);
  testing::ScalarFn fn = [&](Tape& t, const std::vector<Var>& in) {
    return diff::sum(diff::mul(encode(in[0], 4), t.constant(weights)));
  };
  EXPECT_LT(testing::check_gradients(fn, {w}, 1e-6).max_rel_error, 1e-6);
}

TEST(GeometryNet, FreshNetRespectsRanges) {
  Rng rng(3);
  ParamStore store;
  const FieldConfig cfg = small_config();
  GeometryNet net(store, cfg, 4, rng);
  const int n = 10000;
  std::vector<int> image(n);
  for (int i = 0; i < n; ++i) image[static_cast<std::size_t>(i)] = i % 4;
  Tape tape;
  GeometryOutput o = net.eval(tape, tape.constant(random_points(rng, n)), tape.constant(random_dirs(rng, n)), image);
  EXPECT_TRUE(o.sigma_static.value().allFinite());
  EXPECT_GE(o.sigma_static.value().minCoeff(), 0.0);
  EXPECT_GE(o.sigma_transient.value().minCoeff(), 0.0);
  EXPECT_GE(o.color_static.value().minCoeff(), 0.0);
  EXPECT_LE(o.color_static.value().maxCoeff(), 1.0);
  EXPECT_GE(o.color_transient.value().minCoeff(), 0.0);
  EXPECT_LE(o.color_transient.value().maxCoeff(), 1.0);
  EXPECT_GE(o.beta.value().minCoeff(), cfg.beta_min);
  EXPECT_TRUE(o.beta.value().allFinite());
}

TEST(GeometryNet, StaticDensityIgnoresImageIndex) {
  Rng rng(4);
  ParamStore store;
  GeometryNet net(store, small_config(), 3, rng);
  const Matrix x = random_points(rng, 50);
  const Matrix d = random_dirs(rng, 50);
  Tape tape;
  const std::vector<int> a(50, 0), b(50, 2);
  GeometryOutput oa = net.eval(tape, tape.constant(x), tape.constant(d), a);
  GeometryOutput ob = net.eval(tape, tape.constant(x), tape.constant(d), b);
  EXPECT_EQ(oa.sigma_static.value(), ob.sigma_static.value());
  EXPECT_NE(oa.color_static.value(), ob.color_static.value());
  EXPECT_NE(oa.sigma_transient.value(), ob.sigma_transient.value());
}

TEST(GeometryNet, DensityGradientInPositionMatchesFiniteDifferences) {
  Rng rng(5);
  ParamStore store;
  GeometryNet net(store, small_config(), 1, rng);
  const Matrix x = random_points(rng, 20);
  testing::ScalarFn fn = [&](Tape& t, const std::vector<Var>& in) {
    return diff::sum(net.density(t, net.feature(t, in[0])));
  };
  // Small step: the top encoding frequency is 2^9 pi, so wider stencils straddle ReLU kinks.
  EXPECT_LT(testing::check_gradients(fn, {x}, 1e-8).max_rel_error, 1e-3);
}

TEST(GeometryNet, WeightGradientsMatchFiniteDifferences) {
  Rng rng(6);
  ParamStore store;
  FieldConfig cfg = small_config();
  cfg.pos_frequencies = 3;
  cfg.trunk_width = 8;
  cfg.branch_width = 8;
  GeometryNet net(store, cfg, 2, rng);
  const Matrix x = random_points(rng, 10);
  const Matrix d = random_dirs(rng, 10);
  std::vector<int> image(10);
  for (int i = 0; i < 10; ++i) image[static_cast<std::size_t>(i)] = i % 2;
  for (diff::Param* p : store.all()) {
    Tape tape;
    auto loss = [&](Tape& t) {
      GeometryOutput o = net.eval(t, t.constant(x), t.constant(d), image);
      return diff::sum(diff::concat_cols({o.sigma_static, o.color_static, o.sigma_transient, o.color_transient,
                                          o.beta}));
    };
    store.zero_grad();
    tape.backward(loss(tape));
    const Matrix analytic = p->grad;
    Matrix numeric(p->value.rows(), p->value.cols());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      Tape tp;
      const double fp = loss(tp).scalar();
      p->value.data()[i] = keep - h;
      Tape tm;
      const double fm = loss(tm).scalar();
      p->value.data()[i] = keep;
      numeric.data()[i] = (fp - fm) / (2 * h);
    }
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((analytic - numeric).cwiseAbs().maxCoeff() / scale, 1e-4) << p->name;
  }
}

TEST(GeometryNet, TransientOffGivesZeroDensityUnitBeta) {
  Rng rng(7);
  ParamStore store;
  FieldConfig cfg = small_config();
  cfg.transient = false;
  GeometryNet net(store, cfg, 2, rng);
  EXPECT_FALSE(store.contains("transient/sigma.weight"));
  Tape tape;
  const std::vector<int> image(5, 1);
  GeometryOutput o = net.eval(tape, tape.constant(random_points(rng, 5)), tape.constant(random_dirs(rng, 5)), image);
  EXPECT_EQ(o.sigma_transient.value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(o.beta.value(), Matrix::Ones(5, 1));
}

TEST(GeometryNet, DeterministicForSeed) {
  auto build = [](std::uint64_t seed) {
    Rng rng(seed);
    ParamStore store;
    GeometryNet net(store, small_config(), 2, rng);
    Rng data(99);
    Tape tape;
    const std::vector<int> image(8, 1);
    return net.eval(tape, tape.constant(random_points(data, 8)), tape.constant(random_dirs(data, 8)), image)
        .color_static.value()
        .eval();
  };
  EXPECT_EQ(build(11), build(11));
  EXPECT_NE(build(11), build(12));
}

TEST(RenderNet, MaterialRangesHold) {
  Rng rng(8);
  ParamStore store;
  GeometryNet geo(store, small_config(), 2, rng);
  RenderNet net(store, geo, rng);
  const int n = 2000;
  const std::vector<int> image(n, 0);
  Tape tape;
  RenderOutput o = net.eval(tape, tape.constant(random_points(rng, n)), image);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(o.normal.value().row(i).norm(), 1.0, 1e-6);
  EXPECT_GE(o.diffuse.value().minCoeff(), 0.0);
  EXPECT_LE(o.diffuse.value().maxCoeff(), 1.0);
  EXPECT_GE(o.specular.value().minCoeff(), 0.0);
  EXPECT_LE(o.specular.value().maxCoeff(), 1.0);
  EXPECT_GE(o.gloss.value().minCoeff(), 1.0);
}

TEST(RenderNet, FrozenTrunkLeavesDensityBitIdentical) {
  Rng rng(9);
  ParamStore store;
  GeometryNet geo(store, small_config(), 2, rng);
  RenderNet net(store, geo, rng);
  for (const char* g : {"trunk", "density", "color", "appearance"}) store.set_trainable(g, false);
  const Matrix x = random_points(rng, 64);
  const std::vector<int> image(64, 1);
  Tape t0;
  const Matrix before = net.eval(t0, t0.constant(x), image).sigma_static.value();
  const Matrix trunk_before = store.at("trunk/layer0.weight").value;
  for (int step = 0; step < 3; ++step) {
    Tape t;
    RenderOutput o = net.eval(t, t.constant(x), image);
    store.zero_grad();
    t.backward(diff::sum(diff::concat_cols({o.diffuse, o.normal, o.sigma_transient})));
    for (diff::Param* p : store.all()) {
      if (p->trainable) p->value -= 0.01 * p->grad;
    }
  }
  Tape t1;
  EXPECT_EQ(net.eval(t1, t1.constant(x), image).sigma_static.value(), before);
  EXPECT_EQ(store.at("trunk/layer0.weight").value, trunk_before);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  Rng rng(10);
  ParamStore store;
  GeometryNet geo(store, small_config(), 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "irender_field_test.ckpt";
  save_checkpoint(path, {{"kind", "geometry"}}, store);

  Rng other(77);
  ParamStore fresh;
  GeometryNet geo2(fresh, small_config(), 2, other);
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.meta.at("kind"), "geometry");
  restore_params(fresh, ck);
  const Matrix x = random_points(rng, 16);
  const Matrix d = random_dirs(rng, 16);
  const std::vector<int> image(16, 1);
  Tape ta, tb;
  EXPECT_EQ(geo.eval(ta, ta.constant(x), ta.constant(d), image).color_static.value(),
            geo2.eval(tb, tb.constant(x), tb.constant(d), image).color_static.value());
  std::filesystem::remove(path);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  Rng rng(10);
  ParamStore store;
  GeometryNet geo(store, small_config(), 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "irender_field_mismatch.ckpt";
  save_checkpoint(path, {}, store);
  ParamStore other;
  FieldConfig wide = small_config();
  wide.trunk_width = 40;
  GeometryNet geo2(other, wide, 2, rng);
  EXPECT_THROW(restore_params(other, load_checkpoint(path), {"trunk"}), InputError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, MissingFileIsInputError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/irender.ckpt"), InputError);
}

}  // namespace
}  // namespace irender
