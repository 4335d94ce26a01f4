// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/normal_field.hpp"

#include "irender/error.hpp"
#include "irender/util/runtime.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <tuple>

namespace irender {

using diff::Matrix;

double remap_density(double sigma, double lambda) {
  if (!(lambda > 0.0)) throw ContractViolation("remap_density: lambda must be positive");
  return -std::expm1(-lambda * sigma) / lambda;
}

double sobel_step_response() {
  double s = 0.0;
  for (int ox = 1; ox <= 2; ++ox) {
    for (int oy = -2; oy <= 2; ++oy) {
      for (int oz = -2; oz <= 2; ++oz) s += ox / static_cast<double>(ox * ox + oy * oy + oz * oz);
    }
  }
  return s;
}

NormalGrid::NormalGrid(const Aabb& box, int n, double lambda)
    : box_(box),
      n_(n),
      lambda_(lambda),
      density_(static_cast<std::size_t>(n) * n * n, 0.0f),
      normal_(static_cast<std::size_t>(n) * n * n * 3, 0.0f) {}

Vec3 NormalGrid::cell_center(int i, int j, int k) const {
  return box_.lo + cell_size().cwiseProduct(Vec3(i + 0.5, j + 0.5, k + 0.5));
}

Vec3 NormalGrid::normal(int i, int j, int k) const {
  const float* p = &normal_[3 * index(i, j, k)];
  return {p[0], p[1], p[2]};
}

void NormalGrid::set_normal(int i, int j, int k, const Vec3& v) {
  float* p = &normal_[3 * index(i, j, k)];
  for (int a = 0; a < 3; ++a) p[a] = static_cast<float>(v(a));
}

namespace {

struct Stencil {
  int i0[3];
  double f[3];
};

Stencil stencil(const Vec3& u, int n) {
  Stencil s;
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(u(a), 0.0, n - 1.0);
    s.i0[a] = std::min(static_cast<int>(std::floor(c)), n - 2);
    s.f[a] = c - s.i0[a];
  }
  return s;
}

template <class F>
void for_corners(const Stencil& s, F&& f) {
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? s.f[0] : 1 - s.f[0]) * (dy ? s.f[1] : 1 - s.f[1]) * (dz ? s.f[2] : 1 - s.f[2]);
        if (w != 0.0) f(s.i0[0] + dx, s.i0[1] + dy, s.i0[2] + dz, w);
      }
    }
  }
}

}  // namespace

NormalSample NormalGrid::sample(const Vec3& x) const {
  NormalSample s;
  if (n_ == 0 || !box_.contains(x)) return s;
  const Stencil st = stencil((x - box_.lo).cwiseQuotient(cell_size()) - Vec3::Constant(0.5), n_);
  for_corners(st, [&](int i, int j, int k, double w) { s.normal += w * normal(i, j, k); });
  s.confidence = s.normal.norm();
  return s;
}

double NormalGrid::sample_density(const Vec3& x) const {
  if (n_ == 0 || !box_.contains(x)) return 0.0;
  const Stencil st = stencil((x - box_.lo).cwiseQuotient(cell_size()) - Vec3::Constant(0.5), n_);
  double v = 0.0;
  for_corners(st, [&](int i, int j, int k, double w) { v += w * density(i, j, k); });
  return v;
}

Matrix NormalGrid::sample(const Matrix& points) const {
  Matrix out(points.rows(), 3);
  for (Eigen::Index r = 0; r < points.rows(); ++r) out.row(r) = sample(Vec3(points.row(r).transpose())).normal.transpose();
  return out;
}

namespace {

void check_box(const Aabb& box, int resolution) {
  if (resolution < 8) throw InputError("normal grid resolution must be at least 8");
  if (!((box.hi - box.lo).array() > 0.0).all()) throw InputError("normal grid bounding box is degenerate");
}

void fill_raw(NormalGrid& g, const DensityFn& density, bool remap) {
  const int n = g.resolution();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    Matrix pts(static_cast<Eigen::Index>(n) * n, 3);
    for (std::size_t k = b; k < e; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) pts.row(j * n + i) = g.cell_center(i, j, static_cast<int>(k)).transpose();
      }
      const Matrix sigma = density(pts);
      if (sigma.rows() != pts.rows()) throw ContractViolation("density callback returned the wrong row count");
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          const double s = std::max(0.0, sigma(j * n + i, 0));
          g.density(i, j, static_cast<int>(k)) = static_cast<float>(remap ? remap_density(s, g.lambda()) : s);
        }
      }
    }
  });
}

}  // namespace

NormalGrid build_grid(const DensityFn& density, const Aabb& box, int resolution, double lambda) {
  check_box(box, resolution);
  if (!(lambda > 0.0)) throw InputError("normal grid lambda must be positive");
  NormalGrid g(box, resolution, lambda);
  fill_raw(g, density, true);
  return g;
}

void sobel_gradient(NormalGrid& g, bool unit_clamp) {
  struct Tap {
    int dx, dy, dz;
    Vec3 w;
  };
  std::vector<Tap> taps;
  for (int dz = -2; dz <= 2; ++dz) {
    for (int dy = -2; dy <= 2; ++dy) {
      for (int dx = -2; dx <= 2; ++dx) {
        if (std::make_tuple(dz, dy, dx) <= std::make_tuple(0, 0, 0)) continue;
        const double r2 = dx * dx + dy * dy + dz * dz;
        taps.push_back({dx, dy, dz, Vec3(dx, dy, dz) / r2});
      }
    }
  }
  const double prescale = 1.0 / sobel_step_response();
  const int n = g.resolution();
  std::fill(g.normals().begin(), g.normals().end(), 0.0f);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    for (std::size_t kk = b; kk < e; ++kk) {
      const int k = static_cast<int>(kk);
      if (k < 2 || k >= n - 2) continue;
      for (int j = 2; j < n - 2; ++j) {
        for (int i = 2; i < n - 2; ++i) {
          Vec3 acc = Vec3::Zero();
          for (const Tap& t : taps) acc += t.w * (static_cast<double>(g.density(i + t.dx, j + t.dy, k + t.dz)) -
                                              g.density(i - t.dx, j - t.dy, k - t.dz));
          Vec3 v = -prescale * acc;
          const double len2 = v.squaredNorm();
          v /= unit_clamp ? std::max(1.0, std::sqrt(len2)) : std::max(1.0, len2);
          g.set_normal(i, j, k, v);
        }
      }
    }
  });
}

NormalGrid extract_normal_grid(const DensityFn& density, const Aabb& box, const NormalGridOptions& options) {
  NormalGrid g = build_grid(density, box, options.resolution, options.lambda);
  sobel_gradient(g, options.unit_clamp);
  return g;
}

NormalGrid finite_difference_grid(const DensityFn& density, const Aabb& box, int resolution) {
  check_box(box, resolution);
  NormalGrid g(box, resolution, 1.0);
  fill_raw(g, density, false);
  const int n = resolution;
  const Vec3 h = g.cell_size();
  for (int k = 1; k < n - 1; ++k) {
    for (int j = 1; j < n - 1; ++j) {
      for (int i = 1; i < n - 1; ++i) {
        const Vec3 grad((g.density(i + 1, j, k) - g.density(i - 1, j, k)) / (2 * h.x()),
                        (g.density(i, j + 1, k) - g.density(i, j - 1, k)) / (2 * h.y()),
                        (g.density(i, j, k + 1) - g.density(i, j, k - 1)) / (2 * h.z()));
        const double len = grad.norm();
        if (len > 0.0) g.set_normal(i, j, k, -grad / len);
      }
    }
  }
  return g;
}

namespace {

constexpr char kGridMagic[4] = {'N', 'R', 'G', 'D'};
constexpr std::uint32_t kGridVersion = 1;
static_assert(std::endian::native == std::endian::little, "grid I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void write_grid(const std::filesystem::path& path, const NormalGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write grid " + path.string());
  out.write(kGridMagic, 4);
  put(out, kGridVersion);
  put(out, static_cast<std::int32_t>(g.resolution()));
  for (int a = 0; a < 3; ++a) put(out, g.box().lo(a));
  for (int a = 0; a < 3; ++a) put(out, g.box().hi(a));
  put(out, g.lambda());
  out.write(reinterpret_cast<const char*>(g.densities().data()),
            static_cast<std::streamsize>(g.densities().size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(g.normals().data()),
            static_cast<std::streamsize>(g.normals().size() * sizeof(float)));
  if (!out) throw InputError("failed writing grid " + path.string());
}

NormalGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open grid " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGridMagic, 4) != 0) throw InputError(path.string() + " is not a normal grid file");
  if (get<std::uint32_t>(in) != kGridVersion) throw InputError(path.string() + ": unsupported grid version");
  const int n = get<std::int32_t>(in);
  if (n < 1 || n > 4096) throw InputError(path.string() + ": bad grid resolution");
  Aabb box;
  for (int a = 0; a < 3; ++a) box.lo(a) = get<double>(in);
  for (int a = 0; a < 3; ++a) box.hi(a) = get<double>(in);
  const double lambda = get<double>(in);
  NormalGrid g(box, n, lambda);
  in.read(reinterpret_cast<char*>(g.densities().data()),
          static_cast<std::streamsize>(g.densities().size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(g.normals().data()), static_cast<std::streamsize>(g.normals().size() * sizeof(float)));
  if (!in) throw InputError(path.string() + ": truncated grid file");
  return g;
}

}  // namespace irender
