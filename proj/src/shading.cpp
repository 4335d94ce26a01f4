// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/shading.hpp"

#include "irender/error.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace irender {

using diff::Matrix;
using diff::Tape;
using diff::Var;
using Eigen::Vector3d;

namespace {

constexpr double kPi = std::numbers::pi;
const double k0 = 0.5 * std::sqrt(1.0 / kPi);
const double k1 = std::sqrt(3.0 / (4.0 * kPi));
const double k2a = 0.5 * std::sqrt(15.0 / kPi);
const double k20 = 0.25 * std::sqrt(5.0 / kPi);
const double k22 = 0.25 * std::sqrt(15.0 / kPi);
const double k33 = 0.25 * std::sqrt(35.0 / (2.0 * kPi));
const double k32 = 0.5 * std::sqrt(105.0 / kPi);
const double k31 = 0.25 * std::sqrt(21.0 / (2.0 * kPi));
const double k30 = 0.25 * std::sqrt(7.0 / kPi);
const double k32b = 0.25 * std::sqrt(105.0 / kPi);

void basis(const Vector3d& d, double* y) {
  const double x = d.x(), yy = d.y(), z = d.z();
  y[0] = k0;
  y[1] = k1 * yy;
  y[2] = k1 * z;
  y[3] = k1 * x;
  y[4] = k2a * x * yy;
  y[5] = k2a * yy * z;
  y[6] = k20 * (3.0 * z * z - 1.0);
  y[7] = k2a * x * z;
  y[8] = k22 * (x * x - yy * yy);
  y[9] = k33 * yy * (3.0 * x * x - yy * yy);
  y[10] = k32 * x * yy * z;
  y[11] = k31 * yy * (5.0 * z * z - 1.0);
  y[12] = k30 * z * (5.0 * z * z - 3.0);
  y[13] = k31 * x * (5.0 * z * z - 1.0);
  y[14] = k32b * z * (x * x - yy * yy);
  y[15] = k33 * x * (x * x - 3.0 * yy * yy);
}

void basis_grad(const Vector3d& d, double* y, Vector3d* g) {
  basis(d, y);
  const double x = d.x(), yy = d.y(), z = d.z();
  g[0] = Vector3d::Zero();
  g[1] = Vector3d(0, k1, 0);
  g[2] = Vector3d(0, 0, k1);
  g[3] = Vector3d(k1, 0, 0);
  g[4] = k2a * Vector3d(yy, x, 0);
  g[5] = k2a * Vector3d(0, z, yy);
  g[6] = k20 * Vector3d(0, 0, 6.0 * z);
  g[7] = k2a * Vector3d(z, 0, x);
  g[8] = k22 * Vector3d(2.0 * x, -2.0 * yy, 0);
  g[9] = k33 * Vector3d(6.0 * x * yy, 3.0 * x * x - 3.0 * yy * yy, 0);
  g[10] = k32 * Vector3d(yy * z, x * z, x * yy);
  g[11] = k31 * Vector3d(0, 5.0 * z * z - 1.0, 10.0 * yy * z);
  g[12] = k30 * Vector3d(0, 0, 15.0 * z * z - 3.0);
  g[13] = k31 * Vector3d(5.0 * z * z - 1.0, 0, 10.0 * x * z);
  g[14] = k32b * Vector3d(2.0 * x * z, -2.0 * yy * z, x * x - yy * yy);
  g[15] = k33 * Vector3d(3.0 * x * x - 3.0 * yy * yy, -6.0 * x * yy, 0);
}

constexpr double lambert_coeff(int j) { return j < 9 ? kLambertBand[static_cast<std::size_t>(sh_band(j))] : 0.0; }

}  // namespace

std::array<double, kShCount> sh_basis(const Vector3d& dir, int l_max) {
  if (l_max < 0 || l_max > 3) throw ContractViolation("sh_basis: l_max must be in [0, 3]");
  std::array<double, kShCount> y{};
  basis(dir, y.data());
  for (int j = (l_max + 1) * (l_max + 1); j < kShCount; ++j) y[static_cast<std::size_t>(j)] = 0.0;
  return y;
}

void sh_basis_grad(const Vector3d& dir, std::array<double, kShCount>& y, std::array<Vector3d, kShCount>& dy) {
  basis_grad(dir, y.data(), dy.data());
}

Matrix sh_basis_rows(const Matrix& dirs) {
  Matrix out(dirs.rows(), kShCount);
  for (Eigen::Index i = 0; i < dirs.rows(); ++i) basis(dirs.row(i).transpose(), out.row(i).data());
  return out;
}

Vector3d sh_eval(const ShLight& light, const Vector3d& dir) {
  double y[kShCount];
  basis(dir, y);
  return light.transpose() * Eigen::Map<const Eigen::Matrix<double, kShCount, 1>>(y);
}

ShLight light_from_flat(std::span<const double> flat) {
  if (flat.size() != kLightSize) throw InputError("SH lighting needs exactly 48 coefficients");
  ShLight l;
  for (int j = 0; j < kShCount; ++j) {
    for (int c = 0; c < 3; ++c) l(j, c) = flat[static_cast<std::size_t>(3 * j + c)];
  }
  return l;
}

std::array<double, kLightSize> light_to_flat(const ShLight& light) {
  std::array<double, kLightSize> out{};
  for (int j = 0; j < kShCount; ++j) {
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(3 * j + c)] = light(j, c);
  }
  return out;
}

Vector3d equirect_direction(int x, int y, int width, int height) {
  const double theta = kPi * (y + 0.5) / height;
  const double phi = 2.0 * kPi * (x + 0.5) / width - kPi;
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

namespace {

template <class Sample>
Projection project_grid(const Sample& sample, int l_max, int height, int width) {
  if (height < 2 || width < 2) throw ContractViolation("project_envmap: grid too small");
  const int count = (l_max + 1) * (l_max + 1);
  Projection p;
  p.light.setZero();
  const double cell = (kPi / height) * (2.0 * kPi / width);
  std::vector<Vector3d> values(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double w = std::sin(kPi * (y + 0.5) / height) * cell;
    for (int x = 0; x < width; ++x) {
      const Vector3d d = equirect_direction(x, y, width, height);
      const Vector3d v = sample(x, y, d);
      values[static_cast<std::size_t>(y) * width + x] = v;
      double b[kShCount];
      basis(d, b);
      for (int j = 0; j < count; ++j) p.light.row(j) += w * b[j] * v.transpose();
    }
  }
  double err = 0.0, total = 0.0;
  for (int y = 0; y < height; ++y) {
    const double w = std::sin(kPi * (y + 0.5) / height);
    for (int x = 0; x < width; ++x) {
      const Vector3d d = equirect_direction(x, y, width, height);
      err += w * (sh_eval(p.light, d) - values[static_cast<std::size_t>(y) * width + x]).squaredNorm();
      total += w;
    }
  }
  p.reconstruction_rms = std::sqrt(err / (3.0 * total));
  return p;
}

}  // namespace

Projection project_envmap(const EnvFn& env, int l_max, int height, int width) {
  if (l_max < 0 || l_max > 3) throw ContractViolation("project_envmap: l_max must be in [0, 3]");
  return project_grid([&](int, int, const Vector3d& d) { return env(d); }, l_max, height, width);
}

Projection project_envmap(const Image& equirect, int l_max) {
  if (l_max < 0 || l_max > 3) throw ContractViolation("project_envmap: l_max must be in [0, 3]");
  return project_grid([&](int x, int y, const Vector3d&) { return equirect.rgb(x, y); }, l_max, equirect.height,
                      equirect.width);
}

Vector3d equirect_lookup(const Image& img, const Vector3d& dir) {
  const Vector3d d = dir.normalized();
  const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  const double phi = std::atan2(d.y(), d.x());
  const double u = (phi + kPi) / (2.0 * kPi) * img.width - 0.5;
  const double v = std::clamp(theta / kPi * img.height - 0.5, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const double fx = u - x0, fy = v - y0;
  auto wrap = [&](int x) { return ((x % img.width) + img.width) % img.width; };
  const int y1 = std::min(y0 + 1, img.height - 1);
  return (1 - fy) * ((1 - fx) * img.rgb(wrap(x0), y0) + fx * img.rgb(wrap(x0 + 1), y0)) +
         fy * ((1 - fx) * img.rgb(wrap(x0), y1) + fx * img.rgb(wrap(x0 + 1), y1));
}

Vector3d shade_lambert(const ShLight& light, const Vector3d& n, const Vector3d& kd) {
  double y[kShCount];
  basis(n, y);
  Vector3d e = Vector3d::Zero();
  for (int j = 0; j < 9; ++j) e += lambert_coeff(j) * y[j] * light.row(j).transpose();
  return (kd.cwiseProduct(e) / kPi).cwiseMax(0.0);
}

Vector3d shade_specular(const ShLight& light, const Vector3d& n, const Vector3d& wo, double ks, double g) {
  double y[kShCount];
  basis(reflect(n, wo), y);
  Vector3d s = Vector3d::Zero();
  for (int j = 0; j < kShCount; ++j) {
    const int l = sh_band(j);
    s += std::exp(-l * l / (2.0 * g)) * y[j] * light.row(j).transpose();
  }
  return (ks * s).cwiseMax(0.0);
}

Vector3d shade_point(const ShLight& light, const Vector3d& n, const Vector3d& wo, const Vector3d& kd, double ks,
                     double g) {
  return shade_lambert(light, n, kd) + shade_specular(light, n, wo, ks, g);
}

Var shade_sh(const Var& lights, std::span<const int> image, const Var& n, const Var& wo, const Var& kd, const Var& ks,
             const Var& g) {
  const Eigen::Index m = n.rows();
  if (lights.cols() != kLightSize) throw ContractViolation("shade_sh: lights must be K x 48");
  if (static_cast<Eigen::Index>(image.size()) != m || wo.rows() != m || kd.rows() != m || ks.rows() != m ||
      g.rows() != m) {
    throw ContractViolation("shade_sh: row count mismatch");
  }
  const Matrix &L = lights.value(), &N = n.value(), &O = wo.value(), &KD = kd.value(), &KS = ks.value(),
               &G = g.value();
  Matrix out(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int k = image[static_cast<std::size_t>(i)];
    if (k < 0 || k >= L.rows()) throw ContractViolation("shade_sh: image index out of range");
    const Vector3d nn = N.row(i).transpose(), oo = O.row(i).transpose();
    double yn[kShCount], yr[kShCount];
    basis(nn, yn);
    basis(reflect(nn, oo), yr);
    const double gi = G(i, 0);
    for (int c = 0; c < 3; ++c) {
      double d = 0.0, s = 0.0;
      for (int j = 0; j < kShCount; ++j) {
        const double lj = L(k, 3 * j + c);
        const int l = sh_band(j);
        d += lambert_coeff(j) * lj * yn[j];
        s += std::exp(-l * l / (2.0 * gi)) * lj * yr[j];
      }
      out(i, c) = std::max(0.0, KD(i, c) * d / kPi) + std::max(0.0, KS(i, 0) * s);
    }
  }
  std::vector<int> idx(image.begin(), image.end());
  return n.tape()->record(std::move(out), {lights, n, wo, kd, ks, g}, [=](Tape& t, const Matrix& grad, const Matrix&) {
    const Matrix &L = lights.value(), &N = n.value(), &O = wo.value(), &KD = kd.value(), &KS = ks.value(),
                 &G = g.value();
    Matrix gl = Matrix::Zero(L.rows(), L.cols());
    Matrix gn(m, 3), go(m, 3), gkd(m, 3), gks(m, 1), gg(m, 1);
    double yn[kShCount], yr[kShCount];
    Vector3d dyn[kShCount], dyr[kShCount];
    for (Eigen::Index i = 0; i < m; ++i) {
      const int k = idx[static_cast<std::size_t>(i)];
      const Vector3d nn = N.row(i).transpose(), oo = O.row(i).transpose();
      const Vector3d wr = reflect(nn, oo);
      basis_grad(nn, yn, dyn);
      basis_grad(wr, yr, dyr);
      const double gi = G(i, 0), ksi = KS(i, 0);
      double e[kShCount], de[kShCount];
      for (int j = 0; j < kShCount; ++j) {
        const int l = sh_band(j);
        e[j] = std::exp(-l * l / (2.0 * gi));
        de[j] = e[j] * l * l / (2.0 * gi * gi);
      }
      Vector3d g_n = Vector3d::Zero(), g_r = Vector3d::Zero();
      double g_ks = 0.0, g_g = 0.0;
      for (int c = 0; c < 3; ++c) {
        double d = 0.0, s = 0.0;
        for (int j = 0; j < kShCount; ++j) {
          d += lambert_coeff(j) * L(k, 3 * j + c) * yn[j];
          s += e[j] * L(k, 3 * j + c) * yr[j];
        }
        const double gd = KD(i, c) * d > 0.0 ? grad(i, c) : 0.0;
        const double gs = ksi * s > 0.0 ? grad(i, c) : 0.0;
        gkd(i, c) = gd * d / kPi;
        g_ks += gs * s;
        for (int j = 0; j < kShCount; ++j) {
          const double lj = L(k, 3 * j + c);
          gl(k, 3 * j + c) += gd * KD(i, c) / kPi * lambert_coeff(j) * yn[j] + gs * ksi * e[j] * yr[j];
          g_n += (gd * KD(i, c) / kPi * lambert_coeff(j) * lj) * dyn[j];
          g_r += (gs * ksi * e[j] * lj) * dyr[j];
          g_g += gs * ksi * de[j] * lj * yr[j];
        }
      }
      // w_r = 2 (n . wo) n - wo
      g_n += 2.0 * (nn.dot(oo) * g_r + g_r.dot(nn) * oo);
      gn.row(i) = g_n.transpose();
      go.row(i) = (2.0 * g_r.dot(nn) * nn - g_r).transpose();
      gks(i, 0) = g_ks;
      gg(i, 0) = g_g;
    }
    t.accumulate(lights, gl);
    t.accumulate(n, gn);
    t.accumulate(wo, go);
    t.accumulate(kd, gkd);
    t.accumulate(ks, gks);
    t.accumulate(g, gg);
  });
}

Var sh_radiance(const Var& lights, std::span<const int> image, const Matrix& dirs) {
  const Eigen::Index m = dirs.rows();
  if (static_cast<Eigen::Index>(image.size()) != m) throw ContractViolation("sh_radiance: row count mismatch");
  const Matrix basis_m = sh_basis_rows(dirs);
  Matrix out(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int k = image[static_cast<std::size_t>(i)];
    for (int c = 0; c < 3; ++c) {
      double v = 0.0;
      for (int j = 0; j < kShCount; ++j) v += lights.value()(k, 3 * j + c) * basis_m(i, j);
      out(i, c) = v;
    }
  }
  std::vector<int> idx(image.begin(), image.end());
  return lights.tape()->record(std::move(out), {lights}, [lights, idx, basis_m](Tape& t, const Matrix& g,
                                                                                 const Matrix&) {
    Matrix gl = Matrix::Zero(lights.rows(), lights.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (int j = 0; j < kShCount; ++j) {
        for (int c = 0; c < 3; ++c) gl(idx[i], 3 * j + c) += g(ii, c) * basis_m(ii, j);
      }
    }
    t.accumulate(lights, gl);
  });
}

Var tone_map(const Var& x, const Var& gamma, std::span<const int> image) {
  const Eigen::Index m = x.rows();
  if (static_cast<Eigen::Index>(image.size()) != m || gamma.cols() != 1) {
    throw ContractViolation("tone_map: shape mismatch");
  }
  Matrix out(m, x.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double gm = gamma.value()(image[static_cast<std::size_t>(i)], 0);
    if (!(gm > 0.0)) throw NumericError("tone_map: gamma must be positive");
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(i, c) = tone_map(x.value()(i, c), gm);
  }
  std::vector<int> idx(image.begin(), image.end());
  return x.tape()->record(std::move(out), {x, gamma}, [x, gamma, idx](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    Matrix gg = Matrix::Zero(gamma.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int k = idx[static_cast<std::size_t>(i)];
      const double gm = gamma.value()(k, 0);
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double xv = x.value()(i, c);
        if (xv <= 0.0) continue;
        // The slope diverges at 0 for gamma > 1; cap it below 1e-6.
        gx(i, c) = g(i, c) * y(i, c) / (gm * std::max(xv, 1e-6));
        gg(k, 0) -= g(i, c) * y(i, c) * std::log(xv) / (gm * gm);
      }
    }
    t.accumulate(x, gx);
    t.accumulate(gamma, gg);
  });
}

Var blend_transient(const Var& c_sh, const Var& c_t, const Var& sigma_t) {
  const Eigen::Index m = c_sh.rows();
  if (c_t.rows() != m || sigma_t.rows() != m || sigma_t.cols() != 1) {
    throw ContractViolation("blend_transient: shape mismatch");
  }
  Matrix e = (-sigma_t.value().array()).exp().matrix();
  // Weighted form so that e = 1 and e = 0 reproduce the endpoints exactly.
  Matrix out = (c_sh.value().array().colwise() * e.col(0).array() +
                c_t.value().array().colwise() * (1.0 - e.col(0).array()))
                   .matrix();
  return c_sh.tape()->record(std::move(out), {c_sh, c_t, sigma_t}, [c_sh, c_t, sigma_t, e](Tape& t, const Matrix& g,
                                                                                           const Matrix&) {
    Matrix gsh = g.array().colwise() * e.col(0).array();
    t.accumulate(c_sh, gsh);
    t.accumulate(c_t, g - gsh);
    Matrix gs = -(gsh.cwiseProduct(c_sh.value() - c_t.value())).rowwise().sum();
    t.accumulate(sigma_t, gs);
  });
}

McEstimate mc_render_oracle(const EnvFn& env, const Vector3d& kd, double ks, double g, const Vector3d& n,
                            const Vector3d& wo, int samples, Rng& rng) {
  if (samples < 2) throw ContractViolation("mc_render_oracle: need at least two samples");
  const Vector3d nz = n.normalized();
  const Vector3d helper = std::abs(nz.x()) < 0.9 ? Vector3d::UnitX() : Vector3d::UnitY();
  const Vector3d tx = helper.cross(nz).normalized();
  const Vector3d ty = nz.cross(tx);
  const Vector3d wr = reflect(nz, wo.normalized());
  Vector3d sum = Vector3d::Zero(), sum2 = Vector3d::Zero();
  for (int s = 0; s < samples; ++s) {
    // Cosine-weighted direction: pdf = (n . w) / pi cancels the cosine.
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const double r = std::sqrt(u1), phi = 2.0 * kPi * u2;
    const Vector3d w = r * std::cos(phi) * tx + r * std::sin(phi) * ty + std::sqrt(std::max(0.0, 1.0 - u1)) * nz;
    const double lobe = ks > 0.0 ? ks * (g + 1.0) / (2.0 * kPi) * std::pow(std::max(0.0, w.dot(wr)), g) : 0.0;
    const Vector3d f = kPi * env(w).cwiseProduct(kd / kPi + Vector3d::Constant(lobe));
    sum += f;
    sum2 += f.cwiseProduct(f);
  }
  McEstimate est;
  est.mean = sum / samples;
  const Vector3d var = (sum2 / samples - est.mean.cwiseProduct(est.mean)).cwiseMax(0.0) * samples / (samples - 1.0);
  est.stderr_ = (var / samples).cwiseSqrt();
  return est;
}

ShLight read_sh_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open SH file " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw InputError(path.string() + ": not a number: '" + tok + "'");
      }
    }
  }
  if (values.size() != kLightSize) {
    throw InputError(path.string() + ": expected 48 SH coefficients, found " + std::to_string(values.size()));
  }
  return light_from_flat(values);
}

void write_sh_file(const std::filesystem::path& path, const ShLight& light) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write SH file " + path.string());
  out << "# SH lighting, l-major, m ascending; columns R G B\n";
  out.precision(17);
  for (int j = 0; j < kShCount; ++j) out << light(j, 0) << " " << light(j, 1) << " " << light(j, 2) << "\n";
}

}  // namespace irender
