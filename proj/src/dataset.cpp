// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/dataset.hpp"

#include "irender/error.hpp"
#include "irender/util/random.hpp"
#include "irender/util/runtime.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace irender {

namespace fs = std::filesystem;
using diff::Matrix;
using json = nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw InputError("failed writing " + path.string());
}

Image to_rgb(const Image& img, const fs::path& path) {
  if (img.channels == 3) return img;
  if (img.channels != 1 && img.channels != 4 && img.channels != 2)
    throw InputError(path.string() + ": unsupported channel count");
  Image out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, img.channels >= 3 ? c : 0);
    }
  }
  return out;
}

Image to_mask(const Image& img) {
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out.at(x, y, 0) = img.at(x, y, 0) >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

std::vector<Vec3> read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z()) || !p.allFinite())
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected three numbers");
    pts.push_back(p);
  }
  return pts;
}

std::vector<int> names_to_indices(const SceneDataset& d, const json& names, const fs::path& path) {
  std::vector<int> out;
  for (const json& n : names) {
    const int i = d.index_of(n.get<std::string>());
    if (i < 0) throw InputError(path.string() + ": unknown image '" + n.get<std::string>() + "'");
    out.push_back(i);
  }
  return out;
}

}  // namespace

int SceneDataset::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::optional<Aabb> SceneDataset::point_bounds() const {
  if (points.empty()) return std::nullopt;
  return Aabb::around(points, 0.05);
}

Image dilate_mask(const Image& mask, int radius) {
  if (radius <= 0) return mask;
  Image out(mask.width, mask.height, 1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool on = false;
      for (int dy = -radius; dy <= radius && !on; ++dy) {
        for (int dx = -radius; dx <= radius && !on; ++dx) {
          if (dx * dx + dy * dy > radius * radius) continue;
          const int xx = x + dx, yy = y + dy;
          on = xx >= 0 && yy >= 0 && xx < mask.width && yy < mask.height && mask.at(xx, yy, 0) > 0.5;
        }
      }
      out.at(x, y, 0) = on ? 1.0 : 0.0;
    }
  }
  return out;
}

void whiten_background(Image& image, const Image& mask) {
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (mask.at(x, y, 0) < 0.5) image.set_rgb(x, y, Vec3::Ones());
    }
  }
}

SceneDataset load_dataset(const fs::path& dir, const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
  SceneDataset d;
  const fs::path cam_path = dir / "cameras.json";
  if (!fs::exists(cam_path)) throw InputError("missing camera file " + cam_path.string());
  for (CameraRecord& r : read_cameras(cam_path)) {
    if (d.index_of(r.image) >= 0) throw InputError(cam_path.string() + ": duplicate image '" + r.image + "'");
    d.names.push_back(r.image);
    d.cameras.push_back(r.camera);
  }
  if (d.names.empty()) throw InputError(cam_path.string() + ": no cameras");
  for (const fs::directory_entry& e : fs::directory_iterator(dir / "images")) {
    if (e.path().extension() == ".png" && d.index_of(e.path().stem().string()) < 0)
      throw InputError("image " + e.path().string() + " has no camera");
  }
  for (std::size_t i = 0; i < d.names.size(); ++i) {
    const fs::path ip = dir / "images" / (d.names[i] + ".png");
    const fs::path mp = dir / "masks" / (d.names[i] + ".png");
    if (!fs::exists(ip)) throw InputError("missing image " + ip.string());
    if (!fs::exists(mp)) throw InputError("missing mask " + mp.string());
    Image img = to_rgb(read_png(ip), ip);
    Image mask = to_mask(read_png(mp));
    if (!img.same_size(mask)) throw InputError("mask size does not match image: " + mp.string());
    const Camera& cam = d.cameras[i];
    if (cam.width != img.width || cam.height != img.height)
      throw InputError("camera size does not match image: " + ip.string());
    mask = dilate_mask(mask, options.mask_dilate);
    whiten_background(img, mask);
    d.images.push_back(std::move(img));
    d.masks.push_back(std::move(mask));
  }
  if (fs::exists(dir / "points.txt")) d.points = read_points(dir / "points.txt");
  const fs::path split_path = dir / "split.json";
  if (fs::exists(split_path)) {
    const json split = read_json(split_path);
    try {
      d.train = names_to_indices(d, split.at("train"), split_path);
      d.test = names_to_indices(d, split.value("test", json::array()), split_path);
    } catch (const json::exception& e) {
      throw InputError(split_path.string() + ": " + e.what());
    }
  } else {
    for (int i = 0; i < d.size(); ++i) d.train.push_back(i);
  }
  if (d.train.empty()) throw InputError(split_path.string() + ": no training images");
  return d;
}

void save_dataset(const fs::path& dir, const SceneDataset& d) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::vector<CameraRecord> records;
  for (int i = 0; i < d.size(); ++i) {
    write_png(dir / "images" / (d.names[i] + ".png"), d.images[i]);
    write_png(dir / "masks" / (d.names[i] + ".png"), d.masks[i]);
    records.push_back({d.names[i], d.cameras[i]});
  }
  write_cameras(dir / "cameras.json", records);
  if (!d.points.empty()) {
    std::ofstream out(dir / "points.txt");
    out.precision(17);
    for (const Vec3& p : d.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    if (!out) throw InputError("failed writing points.txt");
  }
  json split = {{"train", json::array()}, {"test", json::array()}};
  for (int i : d.train) split["train"].push_back(d.names[i]);
  for (int i : d.test) split["test"].push_back(d.names[i]);
  write_json(dir / "split.json", split);
}

RayPool build_ray_pool(const SceneDataset& d, std::span<const int> images) {
  RayPool pool;
  for (int i : images) {
    const Image& m = d.masks.at(static_cast<std::size_t>(i));
    for (int p = 0; p < m.width * m.height; ++p) {
      (m.data[static_cast<std::size_t>(p)] > 0.5 ? pool.foreground : pool.background).push_back({i, p});
    }
  }
  return pool;
}

std::vector<RayRef> rebalance_epoch(const RayPool& pool, std::uint64_t seed, bool adaptive) {
  if (pool.foreground.empty()) throw InputError("dataset has no foreground pixels");
  Rng rng(seed);
  std::vector<RayRef> bg = pool.background;
  const std::size_t keep = adaptive ? std::min(bg.size(), 2 * pool.foreground.size()) : bg.size();
  // Partial Fisher-Yates: the first `keep` entries are a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) std::swap(bg[i], bg[i + rng.index(bg.size() - i)]);
  std::vector<RayRef> out = pool.foreground;
  out.insert(out.end(), bg.begin(), bg.begin() + static_cast<std::ptrdiff_t>(keep));
  rng.shuffle(out);
  return out;
}

// Synthetic scenes ---------------------------------------------------------

SyntheticSpec synthetic_preset(const std::string& name) {
  SyntheticSpec s;
  s.name = name;
  if (name == "red-sphere") {
    s.primitives = {{Primitive::Shape::kSphere, Vec3::Zero(), Vec3::Ones(), Vec3(1, 0, 0), 0.0, 1.0}};
  } else if (name == "blocks" || name == "toy") {
    s.primitives = {
        {Primitive::Shape::kSphere, Vec3(0.0, 0.0, 0.1), Vec3::Constant(0.7), Vec3(0.85, 0.2, 0.15), 0.0, 1.0},
        {Primitive::Shape::kBox, Vec3(0.75, -0.3, -0.35), Vec3(0.3, 0.45, 0.3), Vec3(0.15, 0.6, 0.2), 0.0, 1.0},
        {Primitive::Shape::kBox, Vec3(-0.5, 0.55, -0.45), Vec3(0.4, 0.2, 0.2), Vec3(0.2, 0.3, 0.8), 0.0, 1.0},
        {Primitive::Shape::kSphere, Vec3(-0.3, -0.6, 0.6), Vec3::Constant(0.3), Vec3(0.9, 0.8, 0.2), 0.0, 1.0},
    };
    if (name == "toy") {
      s.views = 4;
      s.test_views = 1;
      s.width = s.height = 24;
      s.supersample = 2;
      s.num_points = 300;
    }
  } else {
    throw InputError("unknown synthetic preset '" + name + "'");
  }
  return s;
}

namespace {

Vec3 vec3_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }
json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json spec_to_json(const SyntheticSpec& s) {
  json prims = json::array();
  for (const Primitive& p : s.primitives) {
    prims.push_back({{"shape", p.shape == Primitive::Shape::kSphere ? "sphere" : "box"},
                     {"center", vec3_json(p.center)},
                     {"size", vec3_json(p.size)},
                     {"kd", vec3_json(p.kd)},
                     {"ks", p.ks},
                     {"gloss", p.gloss}});
  }
  return {{"name", s.name},
          {"primitives", prims},
          {"density", s.density},
          {"views", s.views},
          {"test_views", s.test_views},
          {"width", s.width},
          {"height", s.height},
          {"distance", s.distance},
          {"fov_deg", s.fov_deg},
          {"elevation_min_deg", s.elevation_min_deg},
          {"elevation_max_deg", s.elevation_max_deg},
          {"jitter_deg", s.jitter_deg},
          {"random_lighting", s.random_lighting},
          {"light_color", vec3_json(s.light_color)},
          {"shading", s.shading},
          {"mc_samples", s.mc_samples},
          {"supersample", s.supersample},
          {"gamma", s.gamma},
          {"pose_noise_deg", s.pose_noise_deg},
          {"num_points", s.num_points}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s = j.contains("preset") ? synthetic_preset(j.at("preset").get<std::string>()) : SyntheticSpec{};
  const auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  opt("name", s.name);
  opt("density", s.density);
  opt("views", s.views);
  opt("test_views", s.test_views);
  opt("width", s.width);
  opt("height", s.height);
  opt("distance", s.distance);
  opt("fov_deg", s.fov_deg);
  opt("elevation_min_deg", s.elevation_min_deg);
  opt("elevation_max_deg", s.elevation_max_deg);
  opt("jitter_deg", s.jitter_deg);
  opt("random_lighting", s.random_lighting);
  opt("shading", s.shading);
  opt("mc_samples", s.mc_samples);
  opt("supersample", s.supersample);
  opt("gamma", s.gamma);
  opt("pose_noise_deg", s.pose_noise_deg);
  opt("num_points", s.num_points);
  if (j.contains("light_color")) s.light_color = vec3_from(j.at("light_color"));
  if (j.contains("primitives")) {
    s.primitives.clear();
    for (const json& p : j.at("primitives")) {
      Primitive q;
      const std::string shape = p.at("shape").get<std::string>();
      if (shape == "sphere") {
        q.shape = Primitive::Shape::kSphere;
      } else if (shape == "box") {
        q.shape = Primitive::Shape::kBox;
      } else {
        throw InputError("unknown primitive shape '" + shape + "'");
      }
      q.center = vec3_from(p.at("center"));
      q.size = p.at("size").is_number() ? Vec3::Constant(p.at("size").get<double>()) : vec3_from(p.at("size"));
      if (p.contains("kd")) q.kd = vec3_from(p.at("kd"));
      q.ks = p.value("ks", 0.0);
      q.gloss = p.value("gloss", 1.0);
      s.primitives.push_back(q);
    }
  }
  return s;
}

void validate_spec(const SyntheticSpec& s) {
  if (s.primitives.empty()) throw InputError("synthetic spec has no primitives");
  if (s.views < 2 || s.test_views < 0) throw InputError("synthetic spec needs at least two views");
  if (s.width < 4 || s.height < 4) throw InputError("synthetic image size too small");
  if (s.supersample < 1 || s.mc_samples < 1) throw InputError("synthetic sample counts must be positive");
  if (s.shading != "sh" && s.shading != "mc") throw InputError("shading must be 'sh' or 'mc'");
  if (!(s.gamma > 0.0) || !(s.density > 0.0) || !(s.distance > 0.0)) throw InputError("invalid synthetic spec values");
  for (const Primitive& p : s.primitives) {
    if (!(p.size.array() > 0.0).all()) throw InputError("primitive sizes must be positive");
  }
}

bool inside(const Primitive& p, const Vec3& x) {
  const Vec3 d = x - p.center;
  if (p.shape == Primitive::Shape::kSphere) return d.squaredNorm() <= p.size.x() * p.size.x();
  return (d.cwiseAbs().array() <= p.size.array()).all();
}

std::optional<SurfaceHit> hit_primitive(const Primitive& p, const Vec3& o, const Vec3& dir) {
  const Vec3 oc = o - p.center;
  if (p.shape == Primitive::Shape::kSphere) {
    const double r = p.size.x();
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 0.0) t = -b + sq;
    if (t <= 0.0) return std::nullopt;
    return SurfaceHit{t, (oc + t * dir) / r, -1};
  }
  double t0 = -1e300, t1 = 1e300;
  int axis = 0;
  double sign = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (dir(a) == 0.0) {
      if (std::abs(oc(a)) > p.size(a)) return std::nullopt;
      continue;
    }
    double ta = (-p.size(a) - oc(a)) / dir(a);
    double tb = (p.size(a) - oc(a)) / dir(a);
    double s = -1.0;
    if (ta > tb) std::swap(ta, tb), s = 1.0;
    if (ta > t0) t0 = ta, axis = a, sign = s;
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= 0.0) return std::nullopt;
  Vec3 n = Vec3::Zero();
  n(axis) = sign;
  return SurfaceHit{t0, n, -1};
}

Vec3 surface_normal(const Primitive& p, const Vec3& x) {
  const Vec3 d = x - p.center;
  if (p.shape == Primitive::Shape::kSphere) return d.normalized();
  const Vec3 r = d.cwiseQuotient(p.size).cwiseAbs();
  int a = 0;
  r.maxCoeff(&a);
  Vec3 n = Vec3::Zero();
  n(a) = d(a) >= 0.0 ? 1.0 : -1.0;
  return n;
}

double surface_distance(const Primitive& p, const Vec3& x) {
  const Vec3 d = x - p.center;
  if (p.shape == Primitive::Shape::kSphere) return std::abs(d.norm() - p.size.x());
  const Vec3 q = d.cwiseAbs() - p.size;
  const double outside = q.cwiseMax(0.0).norm();
  return outside > 0.0 ? outside : -q.maxCoeff();
}

Vec3 sample_surface(const Primitive& p, Rng& rng) {
  if (p.shape == Primitive::Shape::kSphere) {
    const Vec3 d = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    return p.center + p.size.x() * d;
  }
  const Vec3 s = p.size;
  const double areas[3] = {s.y() * s.z(), s.x() * s.z(), s.x() * s.y()};
  const double pick = rng.uniform() * (areas[0] + areas[1] + areas[2]);
  const int a = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
  Vec3 q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  q(a) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return p.center + q.cwiseProduct(s);
}

ShLight random_light(const SyntheticSpec& s, Rng& rng) {
  ShLight l = constant_light(s.light_color * rng.uniform(0.8, 1.2));
  const double base = l.row(0).mean();
  for (int j = 1; j < 9; ++j) {
    const double amp = (j < 4 ? 0.25 : 0.1) * base;
    l.row(j) = amp * Eigen::RowVector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  return l;
}

}  // namespace

SyntheticSpec read_synthetic_spec(const std::string& name_or_path) {
  if (!fs::exists(name_or_path)) return synthetic_preset(name_or_path);
  const json j = read_json(name_or_path);
  try {
    SyntheticSpec s = spec_from_json(j);
    validate_spec(s);
    return s;
  } catch (const json::exception& e) {
    throw InputError(name_or_path + ": " + e.what());
  }
}

std::optional<SurfaceHit> intersect(const SyntheticSpec& spec, const Vec3& origin, const Vec3& dir) {
  std::optional<SurfaceHit> best;
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
    auto h = hit_primitive(spec.primitives[i], origin, dir);
    if (h && (!best || h->t < best->t)) {
      h->primitive = static_cast<int>(i);
      best = h;
    }
  }
  return best;
}

Matrix synthetic_density(const SyntheticSpec& spec, const Matrix& points) {
  Matrix out = Matrix::Zero(points.rows(), 1);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const Vec3 x = points.row(r).transpose();
    for (const Primitive& p : spec.primitives) {
      if (inside(p, x)) {
        out(r, 0) = spec.density;
        break;
      }
    }
  }
  return out;
}

Vec3 synthetic_normal(const SyntheticSpec& spec, const Vec3& x) {
  double best = 1e300;
  Vec3 n = Vec3::Zero();
  for (const Primitive& p : spec.primitives) {
    const double d = surface_distance(p, x);
    if (d < best) best = d, n = surface_normal(p, x);
  }
  return n;
}

SyntheticScene make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  SyntheticScene scene;
  scene.spec = spec;
  scene.seed = seed;
  Rng rng(seed);
  const int total = spec.views + spec.test_views;
  const double focal = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * kDegToRad);
  SceneDataset& d = scene.dataset;

  for (int v = 0; v < total; ++v) {
    // Training views evenly spaced in azimuth; test views interleaved halfway.
    const bool test = v >= spec.views;
    const double slot = test ? (v - spec.views + 0.5) * spec.views / std::max(1, spec.test_views) : v;
    const double az = 2.0 * std::numbers::pi * slot / spec.views + rng.uniform(-1, 1) * spec.jitter_deg * kDegToRad;
    const double t = spec.views > 1 ? (v % 2 == 0 ? 0.25 : 0.75) : 0.5;
    const double el = (spec.elevation_min_deg + t * (spec.elevation_max_deg - spec.elevation_min_deg)) * kDegToRad +
                      rng.uniform(-1, 1) * spec.jitter_deg * kDegToRad;
    const Vec3 eye = spec.distance * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const Camera cam = look_at(eye, Vec3::Zero(), Vec3::UnitZ(), focal, spec.width, spec.height,
                               std::max(0.05, spec.distance - 2.5), spec.distance + 2.5);
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", test ? "test" : "view", v);
    d.names.push_back(name);
    scene.true_cameras.push_back(cam);
    (test ? d.test : d.train).push_back(v);
  }

  const ShLight fixed = constant_light(spec.light_color);
  for (int v = 0; v < total; ++v) scene.lights.push_back(spec.random_lighting ? random_light(spec, rng) : fixed);

  for (int v = 0; v < total; ++v) {
    Camera cam = scene.true_cameras[static_cast<std::size_t>(v)];
    if (spec.pose_noise_deg > 0.0) {
      const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      cam.rotation = rodrigues(axis * spec.pose_noise_deg * kDegToRad) * cam.rotation;
    }
    d.cameras.push_back(cam);
  }

  for (int i = 0; i < spec.num_points; ++i) {
    const Primitive& p = spec.primitives[rng.index(spec.primitives.size())];
    const Vec3 x = sample_surface(p, rng);
    bool buried = false;
    for (const Primitive& q : spec.primitives) buried = buried || (&q != &p && inside(q, x));
    if (!buried) d.points.push_back(x);
  }

  const std::uint64_t render_seed = rng.next();
  const int ss = spec.supersample;
  for (int v = 0; v < total; ++v) {
    const Camera& cam = scene.true_cameras[static_cast<std::size_t>(v)];
    const ShLight& light = scene.lights[static_cast<std::size_t>(v)];
    const EnvFn env = [&light](const Vec3& w) { return sh_eval(light, w); };
    Image lin(spec.width, spec.height, 3);
    Image mask(spec.width, spec.height, 1);
    parallel_for(static_cast<std::size_t>(spec.height), [&](std::size_t y0, std::size_t y1) {
      for (std::size_t yy = y0; yy < y1; ++yy) {
        const int y = static_cast<int>(yy);
        Rng prng(render_seed ^ (static_cast<std::uint64_t>(v) << 40) ^ static_cast<std::uint64_t>(y));
        for (int x = 0; x < spec.width; ++x) {
          Vec3 acc = Vec3::Zero();
          int covered = 0;
          for (int sy = 0; sy < ss; ++sy) {
            for (int sx = 0; sx < ss; ++sx) {
              const Vec2 px(x + (sx + 0.5) / ss, y + (sy + 0.5) / ss);
              const Ray ray = pixel_ray(cam, px);
              const auto hit = intersect(spec, ray.origin, ray.direction);
              if (!hit) {
                acc += Vec3::Ones();
                continue;
              }
              ++covered;
              const Primitive& p = spec.primitives[static_cast<std::size_t>(hit->primitive)];
              const Vec3 wo = -ray.direction;
              if (spec.shading == "mc") {
                acc += mc_render_oracle(env, p.kd, p.ks, p.gloss, hit->normal, wo, spec.mc_samples, prng).mean;
              } else {
                acc += shade_point(light, hit->normal, wo, p.kd, p.ks, p.gloss);
              }
            }
          }
          lin.set_rgb(x, y, acc / (ss * ss));
          mask.at(x, y, 0) = 2 * covered >= ss * ss ? 1.0 : 0.0;
        }
      }
    });
    Image img(spec.width, spec.height, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = quantize8(tone_map(lin.data[i], spec.gamma));
    whiten_background(img, mask);
    scene.linear.push_back(std::move(lin));
    d.images.push_back(std::move(img));
    d.masks.push_back(std::move(mask));
  }
  return scene;
}

void write_synthetic(const fs::path& dir, const SyntheticScene& scene) {
  save_dataset(dir, scene.dataset);
  std::vector<CameraRecord> records;
  json lights = json::array();
  for (int i = 0; i < scene.dataset.size(); ++i) {
    records.push_back({scene.dataset.names[static_cast<std::size_t>(i)], scene.true_cameras[static_cast<std::size_t>(i)]});
    const auto flat = light_to_flat(scene.lights[static_cast<std::size_t>(i)]);
    lights.push_back(json(std::vector<double>(flat.begin(), flat.end())));
  }
  write_cameras(dir / "ground_truth_cameras.json", records);
  const json doc = {{"format", "irender-ground-truth"},
                    {"version", 1},
                    {"seed", scene.seed},
                    {"spec", spec_to_json(scene.spec)},
                    {"names", scene.dataset.names},
                    {"cameras_file", "ground_truth_cameras.json"},
                    {"lights", lights}};
  write_json(dir / "ground_truth.json", doc);
}

GroundTruth read_ground_truth(const fs::path& path) {
  const json doc = read_json(path);
  GroundTruth gt;
  try {
    if (doc.at("format") != "irender-ground-truth") throw InputError(path.string() + ": not a ground-truth file");
    gt.spec = spec_from_json(doc.at("spec"));
    gt.seed = doc.at("seed").get<std::uint64_t>();
    gt.names = doc.at("names").get<std::vector<std::string>>();
    for (const json& l : doc.at("lights")) {
      const auto flat = l.get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(kLightSize)) throw InputError(path.string() + ": bad light size");
      gt.lights.push_back(light_from_flat(flat));
    }
    const fs::path cams = path.parent_path() / doc.at("cameras_file").get<std::string>();
    for (const CameraRecord& r : read_cameras(cams)) gt.cameras.push_back(r.camera);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (gt.cameras.size() != gt.names.size() || gt.lights.size() != gt.names.size())
    throw InputError(path.string() + ": inconsistent record counts");
  return gt;
}

}  // namespace irender
