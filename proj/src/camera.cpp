// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/camera.hpp"

#include "irender/diff/ops.hpp"
#include "irender/error.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace irender {

using diff::Matrix;
using diff::Tape;
using diff::Var;
using json = nlohmann::json;

void Camera::validate() const {
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      rotation.determinant() < 0.0) {
    throw InputError("camera rotation is not a proper orthonormal matrix");
  }
  if (!(focal > 0.0)) throw InputError("camera focal length must be positive");
  if (!(near < far)) throw InputError("camera near plane must be closer than the far plane");
  if (width <= 0 || height <= 0) throw InputError("camera image size must be positive");
}

Mat3 Camera::intrinsics() const {
  Mat3 k = Mat3::Identity();
  k(0, 0) = focal;
  k(1, 1) = focal;
  k(0, 2) = principal.x();
  k(1, 2) = principal.y();
  return k;
}

Vec2 Camera::project(const Vec3& world) const {
  const Vec3 c = rotation.transpose() * (world - translation);
  return {focal * c.x() / c.z() + principal.x(), focal * c.y() / c.z() + principal.y()};
}

double Camera::depth(const Vec3& world) const { return (rotation.transpose() * (world - translation)).z(); }

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height,
               double near, double far) {
  const Vec3 z = (target - eye).normalized();
  Vec3 down = -up;
  if (std::abs(z.dot(down.normalized())) > 0.999) down = z.unitOrthogonal();
  const Vec3 x = down.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Camera c;
  c.rotation.col(0) = x;
  c.rotation.col(1) = y;
  c.rotation.col(2) = z;
  c.translation = eye;
  c.focal = focal;
  c.principal = Vec2(width / 2.0, height / 2.0);
  c.width = width;
  c.height = height;
  c.near = near;
  c.far = far;
  return c;
}

Mat3 rodrigues(const Vec3& axis_angle) {
  const double theta = axis_angle.norm();
  if (theta < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(theta, axis_angle / theta).toRotationMatrix();
}

Camera apply_delta(const Camera& cam, const CameraDelta& delta) {
  Camera out = cam;
  out.rotation = rodrigues(delta.rotation) * cam.rotation;
  out.translation = cam.translation + delta.translation;
  out.focal = cam.focal + delta.focal;
  return out;
}

Ray pixel_ray(const Camera& cam, const Vec2& px, int image) {
  if (!(px.x() >= 0.0 && px.x() <= cam.width && px.y() >= 0.0 && px.y() <= cam.height)) {
    throw InputError("pixel (" + std::to_string(px.x()) + ", " + std::to_string(px.y()) +
                     ") outside the image");
  }
  const Vec3 d_cam((px.x() - cam.principal.x()) / cam.focal, (px.y() - cam.principal.y()) / cam.focal, 1.0);
  Ray r;
  r.origin = cam.translation;
  r.direction = (cam.rotation * d_cam).normalized();
  r.pixel = px;
  r.image = image;
  return r;
}

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

void normalize_fundamental(Mat3& f) {
  const double n = f.norm();
  if (n == 0.0) return;
  f /= n;
  for (int i = 0; i < 9; ++i) {
    const double v = f(i / 3, i % 3);
    if (std::abs(v) > 1e-12) {
      if (v < 0) f = -f;
      break;
    }
  }
}

}  // namespace

FundamentalMatrix fundamental_matrix(const Camera& cam_i, const Camera& cam_j) {
  FundamentalMatrix out;
  // Relative pose taking camera-i coordinates to camera-j coordinates.
  const Mat3 r = cam_j.rotation.transpose() * cam_i.rotation;
  const Vec3 t = cam_j.rotation.transpose() * (cam_i.translation - cam_j.translation);
  if (t.norm() < 1e-12) {
    out.degenerate = true;
    return out;
  }
  const Mat3 essential = skew(t) * r;
  out.F = cam_j.intrinsics().inverse().transpose() * essential * cam_i.intrinsics().inverse();
  normalize_fundamental(out.F);
  return out;
}

double fmse(std::span<const Camera> gt, std::span<const Camera> pred) {
  if (gt.size() != pred.size()) throw InputError("fmse: camera lists differ in length");
  if (gt.size() < 2) throw InputError("fmse: at least two cameras are required");
  const std::size_t n = gt.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      total += (fundamental_matrix(gt[i], gt[j]).F - fundamental_matrix(pred[i], pred[j]).F).norm();
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

namespace {

// Rodrigues coefficients as functions of s = |w|^2:
//   a(s) = sin(sqrt s)/sqrt s,  b(s) = (1 - cos(sqrt s))/s.
// Series branches keep them smooth at the identity rotation.
void rodrigues_coefficients(double s, double& a, double& b, double& da, double& db) {
  if (s < 1e-3) {
    a = 1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0;
    b = 0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0;
    da = -1.0 / 6.0 + s / 60.0 - s * s / 1680.0;
    db = -1.0 / 24.0 + s / 360.0 - s * s / 13440.0;
    return;
  }
  const double th = std::sqrt(s);
  const double sn = std::sin(th), cs = std::cos(th);
  a = sn / th;
  b = (1.0 - cs) / s;
  da = (th * cs - sn) / (2.0 * th * s);
  db = (th * sn - 2.0 * (1.0 - cs)) / (2.0 * s * s);
}

// Returns an n x 2 value [a(s), b(s)] for an n x 1 input s.
Var rodrigues_ab(const Var& s) {
  const Eigen::Index n = s.rows();
  Matrix out(n, 2);
  Matrix deriv(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    rodrigues_coefficients(s.value()(i, 0), out(i, 0), out(i, 1), deriv(i, 0), deriv(i, 1));
  }
  return s.tape()->record(std::move(out), {s}, [s, deriv](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gs = g.cwiseProduct(deriv).rowwise().sum();
    t.accumulate(s, gs);
  });
}

}  // namespace

RayVars camera_rays(Tape& tape, std::span<const Camera> cameras, const Var& deltas, std::span<const int> image,
                    std::span<const Vec2> pixels, bool shared_focal) {
  if (image.size() != pixels.size()) throw ContractViolation("camera_rays: image/pixel count mismatch");
  const auto b = static_cast<Eigen::Index>(image.size());
  Matrix rot(b, 9), origin(b, 3), focal(b, 1), offset(b, 2);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Camera& cam = cameras[static_cast<std::size_t>(image[i])];
    for (int k = 0; k < 9; ++k) rot(i, k) = cam.rotation(k / 3, k % 3);
    origin.row(i) = cam.translation.transpose();
    focal(i, 0) = cam.focal;
    offset(i, 0) = pixels[i].x() - cam.principal.x();
    offset(i, 1) = pixels[i].y() - cam.principal.y();
  }
  Var rot_v = tape.constant(std::move(rot));
  Var origin_v = tape.constant(std::move(origin));
  Var focal_v = tape.constant(std::move(focal));
  Var du = tape.constant(offset.col(0));
  Var dv = tape.constant(offset.col(1));
  Var ones = tape.constant(Matrix::Ones(b, 1));

  if (!deltas.valid()) {
    Var inv_f = diff::reciprocal(focal_v);
    Var d_cam = diff::concat_cols({diff::mul(du, inv_f), diff::mul(dv, inv_f), ones});
    return {origin_v, diff::normalize_rows(diff::rowwise_matvec(rot_v, d_cam))};
  }
  if (deltas.cols() != CameraDelta::kSize) throw ContractViolation("camera_rays: deltas must be N x 7");
  Var d = diff::gather_rows(deltas, image);
  Var d_rot = diff::slice_cols(d, 0, 3);
  Var d_t = diff::slice_cols(d, 3, 3);
  Var d_f;
  if (shared_focal) {
    std::vector<int> zeros(image.size(), 0);
    d_f = diff::slice_cols(diff::gather_rows(deltas, zeros), 6, 1);
  } else {
    d_f = diff::slice_cols(d, 6, 1);
  }
  Var inv_f = diff::reciprocal(diff::add(focal_v, d_f));
  Var d_cam = diff::concat_cols({diff::mul(du, inv_f), diff::mul(dv, inv_f), ones});
  Var v = diff::rowwise_matvec(rot_v, d_cam);
  Var ab = rodrigues_ab(diff::dot_rows(d_rot, d_rot));
  Var c1 = diff::cross_rows(d_rot, v);
  Var c2 = diff::cross_rows(d_rot, c1);
  Var rotated = diff::add(v, diff::add(diff::mul_col(c1, diff::slice_cols(ab, 0, 1)),
                                       diff::mul_col(c2, diff::slice_cols(ab, 1, 1))));
  return {diff::add(origin_v, d_t), diff::normalize_rows(rotated)};
}

CameraDelta delta_from_row(const Matrix& deltas, int row, bool shared_focal) {
  CameraDelta d;
  d.rotation = Vec3(deltas(row, 0), deltas(row, 1), deltas(row, 2));
  d.translation = Vec3(deltas(row, 3), deltas(row, 4), deltas(row, 5));
  d.focal = shared_focal ? deltas(0, 6) : deltas(row, 6);
  return d;
}

std::vector<Camera> apply_deltas(std::span<const Camera> cameras, const Matrix& deltas, bool shared_focal) {
  std::vector<Camera> out;
  out.reserve(cameras.size());
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    out.push_back(apply_delta(cameras[i], delta_from_row(deltas, static_cast<int>(i), shared_focal)));
  }
  return out;
}

std::vector<CameraRecord> read_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open camera file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed camera file " + path.string() + ": " + e.what());
  }
  std::vector<CameraRecord> out;
  try {
    for (const json& c : doc.at("cameras")) {
      CameraRecord r;
      r.image = c.at("image").get<std::string>();
      const auto rot = c.at("R").get<std::vector<double>>();
      const auto t = c.at("t").get<std::vector<double>>();
      const auto pp = c.at("principal").get<std::vector<double>>();
      if (rot.size() != 9 || t.size() != 3 || pp.size() != 2) {
        throw InputError("camera '" + r.image + "' has malformed R/t/principal arrays");
      }
      for (int k = 0; k < 9; ++k) r.camera.rotation(k / 3, k % 3) = rot[static_cast<std::size_t>(k)];
      r.camera.translation = Vec3(t[0], t[1], t[2]);
      r.camera.focal = c.at("focal").get<double>();
      r.camera.principal = Vec2(pp[0], pp[1]);
      r.camera.width = c.at("width").get<int>();
      r.camera.height = c.at("height").get<int>();
      r.camera.near = c.at("near").get<double>();
      r.camera.far = c.at("far").get<double>();
      try {
        r.camera.validate();
      } catch (const InputError& e) {
        throw InputError("camera '" + r.image + "': " + e.what());
      }
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InputError("malformed camera file " + path.string() + ": " + e.what());
  }
  return out;
}

void write_cameras(const std::filesystem::path& path, std::span<const CameraRecord> records) {
  json cams = json::array();
  for (const CameraRecord& r : records) {
    const Camera& c = r.camera;
    std::vector<double> rot(9);
    for (int k = 0; k < 9; ++k) rot[static_cast<std::size_t>(k)] = c.rotation(k / 3, k % 3);
    cams.push_back({{"image", r.image},
                    {"R", rot},
                    {"t", {c.translation.x(), c.translation.y(), c.translation.z()}},
                    {"focal", c.focal},
                    {"principal", {c.principal.x(), c.principal.y()}},
                    {"width", c.width},
                    {"height", c.height},
                    {"near", c.near},
                    {"far", c.far}});
  }
  json doc = {{"format", "irender-cameras"}, {"version", 1}, {"cameras", cams}};
  std::ofstream out(path);
  if (!out) throw InputError("cannot write camera file " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace irender
