// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/render.hpp"

#include "irender/diff/ops.hpp"
#include "irender/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace irender {

using diff::Matrix;
using diff::Tape;
using diff::Var;

Aabb Aabb::around(std::span<const Vec3> points, double pad) {
  if (points.empty()) throw InputError("cannot bound an empty point set");
  Aabb b{points[0], points[0]};
  for (const Vec3& p : points) {
    b.lo = b.lo.cwiseMin(p);
    b.hi = b.hi.cwiseMax(p);
  }
  const Vec3 grow = pad * b.extent();
  b.lo -= grow;
  b.hi += grow;
  return b;
}

std::optional<std::pair<double, double>> clip_ray(const Vec3& origin, const Vec3& dir, double near, double far,
                                                  const Aabb& box) {
  double t0 = near, t1 = far;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir(a)) < 1e-300) {
      if (origin(a) < box.lo(a) || origin(a) > box.hi(a)) return std::nullopt;
      continue;
    }
    double ta = (box.lo(a) - origin(a)) / dir(a);
    double tb = (box.hi(a) - origin(a)) / dir(a);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

namespace {

void fill_stratified(double t0, double t1, int n, Rng* rng, double* out) {
  const double step = (t1 - t0) / (n - 1);
  for (int i = 0; i < n; ++i) out[i] = t0 + step * i;
  if (rng == nullptr) return;
  // Strata run between midpoints of the even grid; the end strata are half width.
  double lower = t0;
  for (int i = 0; i < n; ++i) {
    const double upper = i + 1 < n ? t0 + step * (i + 0.5) : t1;
    out[i] = lower + (upper - lower) * rng->uniform();
    lower = upper;
  }
}

}  // namespace

std::vector<double> sample_stratified(const Ray& ray, int n, double near, double far, const Aabb* box, Rng* rng) {
  if (n < 2) throw ContractViolation("sample_stratified: need at least two samples");
  double t0 = near, t1 = far;
  if (box != nullptr) {
    auto clipped = clip_ray(ray.origin, ray.direction, near, far, *box);
    if (!clipped) return {};
    std::tie(t0, t1) = *clipped;
  } else if (!(near < far)) {
    return {};
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  fill_stratified(t0, t1, n, rng, out.data());
  return out;
}

SampleBatch sample_batch(const Matrix& origins, const Matrix& dirs, std::span<const double> near,
                         std::span<const double> far, int n, const Aabb* box, Rng* rng) {
  if (n < 2) throw ContractViolation("sample_batch: need at least two samples");
  const Eigen::Index b = origins.rows();
  if (dirs.rows() != b || static_cast<Eigen::Index>(near.size()) != b || static_cast<Eigen::Index>(far.size()) != b) {
    throw ContractViolation("sample_batch: ray arrays differ in length");
  }
  SampleBatch s;
  s.rays = b;
  s.per_ray = n;
  std::vector<std::pair<double, double>> spans;
  for (Eigen::Index r = 0; r < b; ++r) {
    std::optional<std::pair<double, double>> span;
    if (box != nullptr) {
      span = clip_ray(origins.row(r).transpose(), dirs.row(r).transpose(), near[r], far[r], *box);
    } else if (near[r] < far[r]) {
      span = std::make_pair(near[r], far[r]);
    }
    if (!span) continue;
    s.ray_of.push_back(static_cast<int>(r));
    spans.push_back(*span);
  }
  const Eigen::Index v = s.valid();
  s.depths.resize(v, n);
  s.deltas.resize(v, n);
  s.near.resize(v, 1);
  s.far.resize(v, 1);
  for (Eigen::Index i = 0; i < v; ++i) {
    const auto [t0, t1] = spans[static_cast<std::size_t>(i)];
    fill_stratified(t0, t1, n, rng, s.depths.row(i).data());
    s.near(i, 0) = t0;
    s.far(i, 0) = t1;
    s.deltas(i, 0) = s.depths(i, 0) - t0;
    for (int k = 1; k < n; ++k) s.deltas(i, k) = s.depths(i, k) - s.depths(i, k - 1);
  }
  return s;
}

SampleBatch resample_importance(const SampleBatch& coarse, const Matrix& weights, int n_fine, Rng* rng) {
  if (weights.rows() != coarse.valid() || weights.cols() != coarse.per_ray) {
    throw ContractViolation("resample_importance: weights shape mismatch");
  }
  if (n_fine < 1) return coarse;
  SampleBatch s = coarse;
  const int n = coarse.per_ray;
  const int total = n + n_fine;
  s.per_ray = total;
  s.depths.resize(coarse.valid(), total);
  s.deltas.resize(coarse.valid(), total);
  std::vector<double> cdf(static_cast<std::size_t>(n));
  std::vector<double> merged(static_cast<std::size_t>(total));
  for (Eigen::Index r = 0; r < coarse.valid(); ++r) {
    // Bin k spans [d_{k-1}, d_k] (bin 0 starts at the clipped near depth) and
    // carries the weight of sample k.
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      acc += weights(r, k) + 1e-5;
      cdf[static_cast<std::size_t>(k)] = acc;
    }
    for (double& c : cdf) c /= acc;
    for (int k = 0; k < n; ++k) merged[static_cast<std::size_t>(k)] = coarse.depths(r, k);
    for (int j = 0; j < n_fine; ++j) {
      const double u = rng != nullptr ? rng->uniform() : (j + 0.5) / n_fine;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const int k = std::min(static_cast<int>(it - cdf.begin()), n - 1);
      const double c0 = k == 0 ? 0.0 : cdf[static_cast<std::size_t>(k - 1)];
      const double c1 = cdf[static_cast<std::size_t>(k)];
      const double lo = k == 0 ? coarse.near(r, 0) : coarse.depths(r, k - 1);
      const double hi = coarse.depths(r, k);
      const double f = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
      merged[static_cast<std::size_t>(n + j)] = lo + f * (hi - lo);
    }
    std::sort(merged.begin(), merged.end());
    for (int k = 0; k < total; ++k) s.depths(r, k) = merged[static_cast<std::size_t>(k)];
    s.deltas(r, 0) = s.depths(r, 0) - s.near(r, 0);
    for (int k = 1; k < total; ++k) s.deltas(r, k) = s.depths(r, k) - s.depths(r, k - 1);
  }
  return s;
}

Var sample_dirs(const SampleBatch& s, const Var& dirs) {
  return diff::repeat_rows(diff::gather_rows(dirs, s.ray_of), s.per_ray);
}

Var sample_points(const SampleBatch& s, const Var& origins, const Var& dirs) {
  Tape& tape = *origins.tape();
  Matrix t = Eigen::Map<const Matrix>(s.depths.data(), s.depths.size(), 1);
  Var o = diff::repeat_rows(diff::gather_rows(origins, s.ray_of), s.per_ray);
  return diff::add(o, diff::mul_col(sample_dirs(s, dirs), tape.constant(std::move(t))));
}

Var composite_static(const Var& sigma, const Var& color, const Matrix& deltas) {
  const Eigen::Index v = deltas.rows(), n = deltas.cols();
  if (sigma.rows() != v * n || sigma.cols() != 1 || color.rows() != v * n || color.cols() != 3) {
    throw ContractViolation("composite_static: shape mismatch");
  }
  Matrix out(v, 4);
  Matrix w(v, n);      // segment transmittance
  Matrix trans(v, n + 1);  // attenuation before each sample, then the final value
  const Matrix& sg = sigma.value();
  const Matrix& c = color.value();
  for (Eigen::Index r = 0; r < v; ++r) {
    double t = 1.0;
    Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index k = r * n + i;
      const double wi = std::exp(-deltas(r, i) * sg(k, 0));
      trans(r, i) = t;
      w(r, i) = wi;
      acc += t * (1.0 - wi) * c.row(k);
      t *= wi;
    }
    trans(r, n) = t;
    out.block(r, 0, 1, 3) = acc;
    out(r, 3) = 1.0 - t;
  }
  return sigma.tape()->record(
      std::move(out), {sigma, color},
      [sigma, color, deltas, w, trans](Tape& tape, const Matrix& g, const Matrix&) {
        const Eigen::Index v = deltas.rows(), n = deltas.cols();
        const Matrix& c = color.value();
        Matrix gs = Matrix::Zero(v * n, 1);
        Matrix gc = Matrix::Zero(v * n, 3);
        for (Eigen::Index r = 0; r < v; ++r) {
          const Eigen::RowVector3d gcol = g.block(r, 0, 1, 3);
          const double gop = g(r, 3);
          const double tfinal = trans(r, n);
          // suffix = sum_{i > k} weight_i c_i, accumulated back to front.
          Eigen::RowVector3d suffix = Eigen::RowVector3d::Zero();
          for (Eigen::Index i = n - 1; i >= 0; --i) {
            const Eigen::Index k = r * n + i;
            const double weight = trans(r, i) * (1.0 - w(r, i));
            gc.row(k) = weight * gcol;
            gs(k, 0) = deltas(r, i) * (gcol.dot(trans(r, i + 1) * c.row(k) - suffix) + gop * tfinal);
            suffix += weight * c.row(k);
          }
        }
        tape.accumulate(sigma, gs);
        tape.accumulate(color, gc);
      });
}

Var composite_joint(const Var& sigma_s, const Var& color_s, const Var& sigma_t, const Var& color_t, const Var& beta,
                    const Matrix& deltas, double beta_min) {
  const Eigen::Index v = deltas.rows(), n = deltas.cols();
  for (const Var* x : {&sigma_s, &sigma_t, &beta}) {
    if (x->rows() != v * n || x->cols() != 1) throw ContractViolation("composite_joint: density/beta shape mismatch");
  }
  for (const Var* x : {&color_s, &color_t}) {
    if (x->rows() != v * n || x->cols() != 3) throw ContractViolation("composite_joint: color shape mismatch");
  }
  Matrix ws(v, n), wt(v, n), att(v, n + 1);
  Matrix out(v, 5);
  const Matrix &ss = sigma_s.value(), &st = sigma_t.value(), &cs = color_s.value(), &ct = color_t.value(),
               &bt = beta.value();
  for (Eigen::Index r = 0; r < v; ++r) {
    double a = 1.0, b = 0.0;
    Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index k = r * n + i;
      const double s1 = std::exp(-deltas(r, i) * ss(k, 0));
      const double t1 = std::exp(-deltas(r, i) * st(k, 0));
      ws(r, i) = s1;
      wt(r, i) = t1;
      att(r, i) = a;
      acc += a * ((1.0 - s1) * cs.row(k) + (1.0 - t1) * ct.row(k));
      b += a * (1.0 - s1 * t1) * bt(k, 0);
      a *= s1 * t1;
    }
    att(r, n) = a;
    out.block(r, 0, 1, 3) = acc;
    out(r, 3) = b + beta_min;
    out(r, 4) = 1.0 - a;
  }
  return sigma_s.tape()->record(
      std::move(out), {sigma_s, color_s, sigma_t, color_t, beta},
      [=](Tape& tape, const Matrix& g, const Matrix&) {
        const Matrix &cs = color_s.value(), &ct = color_t.value(), &bt = beta.value();
        Matrix gss = Matrix::Zero(v * n, 1), gst = Matrix::Zero(v * n, 1), gb = Matrix::Zero(v * n, 1);
        Matrix gcs = Matrix::Zero(v * n, 3), gct = Matrix::Zero(v * n, 3);
        for (Eigen::Index r = 0; r < v; ++r) {
          const Eigen::RowVector3d gcol = g.block(r, 0, 1, 3);
          const double gbeta = g(r, 3), gop = g(r, 4);
          const double afinal = att(r, n);
          Eigen::RowVector3d suffix_c = Eigen::RowVector3d::Zero();
          double suffix_b = 0.0;
          for (Eigen::Index i = n - 1; i >= 0; --i) {
            const Eigen::Index k = r * n + i;
            const double a = att(r, i), s1 = ws(r, i), t1 = wt(r, i), d = deltas(r, i);
            gcs.row(k) = a * (1.0 - s1) * gcol;
            gct.row(k) = a * (1.0 - t1) * gcol;
            gb(k, 0) = a * (1.0 - s1 * t1) * gbeta;
            const double shared = -gcol.dot(suffix_c) + gbeta * (att(r, i + 1) * bt(k, 0) - suffix_b) + gop * afinal;
            gss(k, 0) = d * (gcol.dot(a * s1 * cs.row(k)) + shared);
            gst(k, 0) = d * (gcol.dot(a * t1 * ct.row(k)) + shared);
            suffix_c += a * ((1.0 - s1) * cs.row(k) + (1.0 - t1) * ct.row(k));
            suffix_b += a * (1.0 - s1 * t1) * bt(k, 0);
          }
        }
        tape.accumulate(sigma_s, gss);
        tape.accumulate(sigma_t, gst);
        tape.accumulate(color_s, gcs);
        tape.accumulate(color_t, gct);
        tape.accumulate(beta, gb);
      });
}

Matrix composite_weights(const Matrix& sigma, const Matrix& deltas) {
  const Eigen::Index v = deltas.rows(), n = deltas.cols();
  if (sigma.size() != v * n) throw ContractViolation("composite_weights: shape mismatch");
  Matrix out(v, n);
  for (Eigen::Index r = 0; r < v; ++r) {
    double t = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = std::exp(-deltas(r, i) * sigma.data()[r * n + i]);
      out(r, i) = t * (1.0 - w);
      t *= w;
    }
  }
  return out;
}

DepthStats depth_stats(const Matrix& weights, const Matrix& depths) {
  const Eigen::Index v = weights.rows();
  DepthStats s;
  s.mean = Matrix::Zero(v, 1);
  s.variance = Matrix::Zero(v, 1);
  s.opacity = weights.rowwise().sum();
  s.empty.assign(static_cast<std::size_t>(v), false);
  for (Eigen::Index r = 0; r < v; ++r) {
    const double total = s.opacity(r, 0);
    if (!(total > 0.0)) {
      s.empty[static_cast<std::size_t>(r)] = true;
      continue;
    }
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index i = 0; i < weights.cols(); ++i) {
      const double p = weights(r, i) / total;
      m1 += p * depths(r, i);
      m2 += p * depths(r, i) * depths(r, i);
    }
    s.mean(r, 0) = m1;
    s.variance(r, 0) = std::max(0.0, m2 - m1 * m1);
  }
  return s;
}

Var to_pixels(const Var& per_ray, const SampleBatch& s, double background) {
  const Eigen::Index k = per_ray.cols();
  if (k < 4 || per_ray.rows() != s.valid()) throw ContractViolation("to_pixels: expected V x (>=4) input");
  Matrix out = Matrix::Zero(s.rays, k);
  out.leftCols(3).setConstant(background);
  for (Eigen::Index i = 0; i < s.valid(); ++i) {
    const Eigen::Index r = s.ray_of[static_cast<std::size_t>(i)];
    const double op = per_ray.value()(i, k - 1);
    out.row(r) = per_ray.value().row(i);
    out.block(r, 0, 1, 3).array() += (1.0 - op) * background;
  }
  std::vector<int> rows = s.ray_of;
  return per_ray.tape()->record(std::move(out), {per_ray}, [per_ray, rows, background](Tape& t, const Matrix& g,
                                                                                         const Matrix&) {
    const Eigen::Index k = per_ray.cols();
    Matrix gp(per_ray.rows(), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      gp.row(ii) = g.row(rows[i]);
      gp(ii, k - 1) -= background * g.block(rows[i], 0, 1, 3).sum();
    }
    t.accumulate(per_ray, gp);
  });
}

namespace {

// Stacks row blocks into a V x k value: part p supplies rows rows[p].
Var assemble_rows(Tape& tape, const std::vector<Var>& parts, const std::vector<std::vector<int>>& rows,
                  Eigen::Index total, Eigen::Index cols) {
  Matrix out = Matrix::Zero(total, cols);
  std::vector<Var> live;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (!parts[p].valid()) continue;
    for (std::size_t i = 0; i < rows[p].size(); ++i) out.row(rows[p][i]) = parts[p].value().row(static_cast<Eigen::Index>(i));
    live.push_back(parts[p]);
  }
  return tape.record(std::move(out), live, [parts, rows](Tape& t, const Matrix& g, const Matrix&) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (!parts[p].valid()) continue;
      Matrix gp(static_cast<Eigen::Index>(rows[p].size()), g.cols());
      for (std::size_t i = 0; i < rows[p].size(); ++i) gp.row(static_cast<Eigen::Index>(i)) = g.row(rows[p][i]);
      t.accumulate(parts[p], gp);
    }
  });
}

}  // namespace

Var shade_all_points(Tape& tape, const SampleBatch& s, const Matrix& origins, const Matrix& dirs, const Matrix& sigma,
                     const ShadeFn& shade) {
  const Eigen::Index v = s.valid(), n = s.per_ray;
  Matrix pts(v * n, 3);
  std::vector<int> ray(static_cast<std::size_t>(v * n));
  for (Eigen::Index r = 0; r < v; ++r) {
    const Eigen::Index b = s.ray_of[static_cast<std::size_t>(r)];
    for (Eigen::Index i = 0; i < n; ++i) {
      pts.row(r * n + i) = origins.row(b) + s.depths(r, i) * dirs.row(b);
      ray[static_cast<std::size_t>(r * n + i)] = static_cast<int>(r);
    }
  }
  return composite_static(tape.constant(sigma), shade(pts, ray), s.deltas);
}

Var hybrid_shade(Tape& tape, const SampleBatch& s, const Matrix& origins, const Matrix& dirs, const Matrix& sigma,
                 double tau_d, const ShadeFn& shade, HybridStats* stats) {
  const Eigen::Index v = s.valid(), n = s.per_ray;
  const Matrix weights = composite_weights(sigma, s.deltas);
  const DepthStats ds = depth_stats(weights, s.depths);
  std::vector<int> single, full, empty;
  for (Eigen::Index r = 0; r < v; ++r) {
    if (ds.empty[static_cast<std::size_t>(r)]) {
      empty.push_back(static_cast<int>(r));
    } else if (ds.variance(r, 0) < tau_d) {
      single.push_back(static_cast<int>(r));
    } else {
      full.push_back(static_cast<int>(r));
    }
  }
  if (stats != nullptr) *stats = {static_cast<int>(single.size()), static_cast<int>(full.size()),
                                  static_cast<int>(empty.size())};

  auto point = [&](Eigen::Index r, double t) {
    const Eigen::Index b = s.ray_of[static_cast<std::size_t>(r)];
    return (origins.row(b) + t * dirs.row(b)).eval();
  };

  // Every ray takes the all-points path when none qualifies (always for tau_d <= 0).
  if (single.empty()) return shade_all_points(tape, s, origins, dirs, sigma, shade);

  const auto ns = static_cast<Eigen::Index>(single.size()), nf = static_cast<Eigen::Index>(full.size());
  Matrix pts(ns + nf * n, 3);
  std::vector<int> ray(static_cast<std::size_t>(pts.rows()));
  Matrix opacity(ns, 1);
  for (Eigen::Index j = 0; j < ns; ++j) {
    const int r = single[static_cast<std::size_t>(j)];
    pts.row(j) = point(r, ds.mean(r, 0));
    ray[static_cast<std::size_t>(j)] = r;
    opacity(j, 0) = ds.opacity(r, 0);
  }
  Matrix full_sigma(nf * n, 1), full_deltas(nf, n);
  for (Eigen::Index j = 0; j < nf; ++j) {
    const int r = full[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) {
      pts.row(ns + j * n + i) = point(r, s.depths(r, i));
      ray[static_cast<std::size_t>(ns + j * n + i)] = r;
      full_sigma(j * n + i, 0) = sigma(r * n + i, 0);
    }
    full_deltas.row(j) = s.deltas.row(r);
  }
  Var colors = shade(pts, ray);
  std::vector<int> single_rows(static_cast<std::size_t>(ns)), full_rows(static_cast<std::size_t>(nf * n));
  for (Eigen::Index j = 0; j < ns; ++j) single_rows[static_cast<std::size_t>(j)] = static_cast<int>(j);
  for (Eigen::Index j = 0; j < nf * n; ++j) full_rows[static_cast<std::size_t>(j)] = static_cast<int>(ns + j);
  Var op = tape.constant(opacity);
  Var single_part = diff::concat_cols({diff::mul_col(diff::gather_rows(colors, single_rows), op), op});
  Var full_part;
  if (nf > 0) full_part = composite_static(tape.constant(full_sigma), diff::gather_rows(colors, full_rows), full_deltas);
  return assemble_rows(tape, {single_part, full_part}, {single, full}, v, 4);
}

}  // namespace irender
