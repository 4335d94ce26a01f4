// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/model.hpp"

#include "irender/checkpoint.hpp"
#include "irender/diff/ops.hpp"
#include "irender/error.hpp"
#include "irender/util/runtime.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace irender {

using diff::Matrix;
using diff::Param;
using diff::Tape;
using diff::Var;
using json = nlohmann::json;

namespace {

constexpr double kInitialGamma = 2.4;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

}  // namespace

json camera_to_json(const Camera& c) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(c.rotation(i, j));
  return {{"R", r},
          {"t", vec_json(c.translation)},
          {"focal", c.focal},
          {"principal", json::array({c.principal.x(), c.principal.y()})},
          {"width", c.width},
          {"height", c.height},
          {"near", c.near},
          {"far", c.far}};
}

Camera camera_from_json(const json& j) {
  Camera c;
  const json& r = j.at("R");
  if (r.size() != 9) throw InputError("camera rotation must have 9 entries");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.at(static_cast<std::size_t>(3 * i + k)).get<double>();
  c.translation = vec_from(j.at("t"));
  c.focal = j.at("focal").get<double>();
  c.principal = Vec2(j.at("principal").at(0).get<double>(), j.at("principal").at(1).get<double>());
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.near = j.at("near").get<double>();
  c.far = j.at("far").get<double>();
  c.validate();
  return c;
}

json field_to_json(const FieldConfig& c) {
  return {{"pos_frequencies", c.pos_frequencies}, {"dir_frequencies", c.dir_frequencies},
          {"trunk_depth", c.trunk_depth},         {"trunk_width", c.trunk_width},
          {"branch_depth", c.branch_depth},       {"branch_width", c.branch_width},
          {"appearance_dim", c.appearance_dim},   {"transient_dim", c.transient_dim},
          {"transient", c.transient},             {"beta_min", c.beta_min},
          {"transient_density_bias", c.transient_density_bias}};
}

FieldConfig field_from_json(const json& j) {
  FieldConfig c;
  c.pos_frequencies = j.value("pos_frequencies", c.pos_frequencies);
  c.dir_frequencies = j.value("dir_frequencies", c.dir_frequencies);
  c.trunk_depth = j.value("trunk_depth", c.trunk_depth);
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.branch_depth = j.value("branch_depth", c.branch_depth);
  c.branch_width = j.value("branch_width", c.branch_width);
  c.appearance_dim = j.value("appearance_dim", c.appearance_dim);
  c.transient_dim = j.value("transient_dim", c.transient_dim);
  c.transient = j.value("transient", c.transient);
  c.beta_min = j.value("beta_min", c.beta_min);
  c.transient_density_bias = j.value("transient_density_bias", c.transient_density_bias);
  return c;
}

SceneFrame make_frame(const std::optional<Aabb>& box, std::span<const Camera> cameras) {
  SceneFrame f;
  if (box) {
    f.box = box;
    f.center = box->center();
    f.scale = 0.5 * box->extent().maxCoeff();
  } else {
    if (cameras.empty()) throw InputError("cannot build a scene frame without cameras or points");
    Vec3 c = Vec3::Zero();
    for (const Camera& cam : cameras) c += cam.center();
    c /= static_cast<double>(cameras.size());
    double r = 0.0;
    for (const Camera& cam : cameras) r += (cam.center() - c).norm();
    f.center = c;
    f.scale = std::max(1e-6, r / static_cast<double>(cameras.size()));
  }
  if (!(f.scale > 0.0)) throw InputError("degenerate scene frame");
  return f;
}

Model::Model(const FieldConfig& field, std::vector<Camera> cameras, std::vector<std::string> names, SceneFrame frame,
             std::uint64_t seed)
    : cameras_(std::move(cameras)), names_(std::move(names)), frame_(std::move(frame)) {
  if (cameras_.empty()) throw InputError("model needs at least one camera");
  if (names_.size() != cameras_.size()) throw ContractViolation("Model: one name per camera required");
  Rng rng(seed);
  geometry_ = std::make_unique<GeometryNet>(store_, field, num_images(), rng);
  deltas_ = &store_.add("camera", "deltas", Matrix::Zero(num_images(), CameraDelta::kSize));
}

void Model::add_rendering(std::uint64_t seed) {
  if (render_) return;
  Rng rng(seed ^ 0x5eed5eedULL);
  render_ = std::make_unique<RenderNet>(store_, *geometry_, rng);
  Matrix l(num_images(), kLightSize);
  const auto flat = light_to_flat(constant_light(Vec3::Ones()));
  for (int k = 0; k < num_images(); ++k)
    for (int j = 0; j < kLightSize; ++j) l(k, j) = flat[static_cast<std::size_t>(j)];
  lights_ = &store_.add("lighting", "sh", l);
  gamma_ = &store_.add("lighting", "gamma", Matrix::Constant(num_images(), 1, kInitialGamma));
}

std::vector<Camera> Model::cameras() const { return apply_deltas(cameras_, deltas_->value, shared_focal); }

Camera Model::to_refined(const Camera& input) const {
  const std::vector<Camera> refined = cameras();
  std::vector<Vec3> p, q;
  double focal_shift = 0.0;
  int used = 0;
  for (int i = 0; i < num_images(); ++i) {
    if (deltas_->value.row(i).isZero(0.0)) continue;
    const Camera& a = cameras_[static_cast<std::size_t>(i)];
    const Camera& b = refined[static_cast<std::size_t>(i)];
    // Centers plus a point along each optical axis pin down rotation even
    // for near-collinear rigs.
    p.push_back(a.center());
    q.push_back(b.center());
    p.push_back(a.center() + frame_.scale * a.rotation.col(2));
    q.push_back(b.center() + frame_.scale * b.rotation.col(2));
    focal_shift += b.focal - a.focal;
    ++used;
  }
  if (used == 0) return input;
  Vec3 pc = Vec3::Zero(), qc = Vec3::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) {
    pc += p[k];
    qc += q[k];
  }
  pc /= static_cast<double>(p.size());
  qc /= static_cast<double>(q.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) h += (p[k] - pc) * (q[k] - qc).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * fix * svd.matrixU().transpose();
  Camera out = input;
  out.rotation = r * input.rotation;
  out.translation = r * (input.translation - pc) + qc;
  out.focal = input.focal + focal_shift / used;
  return out;
}

Var Model::normalize(Tape& tape, const Var& x) const {
  Matrix shift(1, 3);
  shift.row(0) = (-frame_.center / frame_.scale).transpose();
  return diff::add_row(diff::scale(x, 1.0 / frame_.scale), tape.constant(shift));
}

Matrix Model::normalize(const Matrix& x) const {
  Matrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    out.row(r) = (x.row(r) - frame_.center.transpose()) / frame_.scale;
  return out;
}

Matrix Model::static_density(const Matrix& world) const {
  constexpr Eigen::Index kChunk = 16384;
  const Eigen::Index m = world.rows();
  Matrix out(m, 1);
  const auto chunks = static_cast<std::size_t>((m + kChunk - 1) / kChunk);
  parallel_for(chunks, [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(c) * kChunk;
      const Eigen::Index n = std::min(kChunk, m - r0);
      Tape tape;
      const Var x = tape.constant(normalize(Matrix(world.middleRows(r0, n))));
      out.middleRows(r0, n) = geometry_->density(tape, geometry_->feature(tape, x)).value();
    }
  });
  return out;
}

json Model::meta() const {
  json cams = json::array();
  for (const Camera& c : cameras_) cams.push_back(camera_to_json(c));
  json frame = {{"center", vec_json(frame_.center)}, {"scale", frame_.scale}};
  if (frame_.box) frame["box"] = {{"lo", vec_json(frame_.box->lo)}, {"hi", vec_json(frame_.box->hi)}};
  return {{"format", "irender-model"},
          {"field", field_to_json(field())},
          {"names", names_},
          {"cameras", cams},
          {"frame", frame},
          {"shared_focal", shared_focal},
          {"rendering", has_rendering()}};
}

void Model::save(const std::filesystem::path& path, json extra) const {
  extra["model"] = meta();
  save_checkpoint(path, extra, store_);
}

std::unique_ptr<Model> Model::load(const std::filesystem::path& path, json* meta_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  std::unique_ptr<Model> model;
  try {
    const json& m = ckpt.meta.at("model");
    if (m.at("format") != "irender-model") throw InputError(path.string() + ": not a model checkpoint");
    std::vector<Camera> cams;
    for (const json& c : m.at("cameras")) cams.push_back(camera_from_json(c));
    SceneFrame frame;
    frame.center = vec_from(m.at("frame").at("center"));
    frame.scale = m.at("frame").at("scale").get<double>();
    if (m.at("frame").contains("box")) {
      frame.box = Aabb{vec_from(m.at("frame").at("box").at("lo")), vec_from(m.at("frame").at("box").at("hi"))};
    }
    model = std::make_unique<Model>(field_from_json(m.at("field")), std::move(cams),
                                    m.at("names").get<std::vector<std::string>>(), frame, 0);
    model->shared_focal = m.value("shared_focal", false);
    if (m.value("rendering", false)) model->add_rendering(0);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  restore_params(model->store(), ckpt);
  if (meta_out != nullptr) *meta_out = ckpt.meta;
  return model;
}

// Batch rendering -----------------------------------------------------------

RayBatch make_rays(Tape& tape, const Model& model, std::span<const int> image, std::span<const int> pixel,
                   bool with_deltas) {
  if (image.size() != pixel.size()) throw ContractViolation("make_rays: one image per pixel required");
  const auto& cams = model.base_cameras();
  std::vector<Vec2> px(pixel.size());
  RayBatch rays;
  rays.image.assign(image.begin(), image.end());
  for (std::size_t i = 0; i < pixel.size(); ++i) {
    const Camera& c = cams.at(static_cast<std::size_t>(image[i]));
    px[i] = Vec2(pixel[i] % c.width + 0.5, pixel[i] / c.width + 0.5);
    rays.near.push_back(c.near);
    rays.far.push_back(c.far);
  }
  const Param& d = model.deltas();
  const Var deltas = with_deltas ? tape.param(const_cast<Param&>(d)) : tape.constant(d.value);
  const RayVars rv = camera_rays(tape, cams, deltas, image, px, model.shared_focal);
  rays.origins = rv.origins;
  rays.directions = rv.directions;
  return rays;
}

namespace {

const Aabb* box_of(const Model& m) { return m.frame().box ? &*m.frame().box : nullptr; }

SampleBatch sample_rays(const Model& model, const RayBatch& rays, const SampleOptions& opt, Rng* rng) {
  if (opt.samples < 2) throw InputError("at least two samples per ray are required");
  SampleBatch s = sample_batch(rays.origins.value(), rays.directions.value(), rays.near, rays.far, opt.samples,
                               box_of(model), rng);
  if (opt.fine_samples > 0 && s.valid() > 0) {
    const Matrix& o = rays.origins.value();
    const Matrix& d = rays.directions.value();
    Matrix pts(s.valid() * s.per_ray, 3);
    for (Eigen::Index r = 0; r < s.valid(); ++r) {
      const int b = s.ray_of[static_cast<std::size_t>(r)];
      for (int i = 0; i < s.per_ray; ++i) pts.row(r * s.per_ray + i) = o.row(b) + s.depths(r, i) * d.row(b);
    }
    const Matrix w = composite_weights(model.static_density(pts), s.deltas);
    s = resample_importance(s, w, opt.fine_samples, rng);
  }
  return s;
}

std::vector<int> per_sample(const SampleBatch& s, std::span<const int> per_ray_value) {
  std::vector<int> out(static_cast<std::size_t>(s.valid() * s.per_ray));
  for (Eigen::Index r = 0; r < s.valid(); ++r) {
    const int v = per_ray_value[static_cast<std::size_t>(s.ray_of[static_cast<std::size_t>(r)])];
    for (int i = 0; i < s.per_ray; ++i) out[static_cast<std::size_t>(r * s.per_ray + i)] = v;
  }
  return out;
}

Matrix missing_fill(const SampleBatch& s, double value) {
  Matrix fill = Matrix::Constant(s.rays, 1, value);
  for (int b : s.ray_of) fill(b, 0) = 0.0;
  return fill;
}

// out[target[j]] += weight[j] * values[j]; B x 1 result.
Var weighted_scatter(Tape& tape, const Var& values, std::vector<double> weight, std::vector<int> target,
                     Eigen::Index rows) {
  Matrix out = Matrix::Zero(rows, 1);
  const Matrix& v = values.value();
  for (std::size_t j = 0; j < target.size(); ++j) out(target[j], 0) += weight[j] * v(static_cast<Eigen::Index>(j), 0);
  return tape.record(std::move(out), {values},
                     [values, weight = std::move(weight), target = std::move(target)](Tape& t, const Matrix& g,
                                                                                      const Matrix&) {
                       Matrix gv(static_cast<Eigen::Index>(target.size()), 1);
                       for (std::size_t j = 0; j < target.size(); ++j)
                         gv(static_cast<Eigen::Index>(j), 0) = weight[j] * g(target[j], 0);
                       t.accumulate(values, gv);
                     });
}

}  // namespace

GeometryResult render_geometry(Tape& tape, const Model& model, const RayBatch& rays, const SampleOptions& opt,
                               Rng* rng, bool static_only, const Var& appearance, std::span<const int> light_image) {
  const FieldConfig& cfg = model.field();
  const GeometryNet& net = model.geometry();
  GeometryResult res;
  res.samples = sample_rays(model, rays, opt, rng);
  const SampleBatch& s = res.samples;
  const Eigen::Index b = s.rays;
  const bool joint = !static_only && cfg.transient;
  if (s.valid() == 0) {
    res.rgb = tape.constant(Matrix::Ones(b, 3));
    res.opacity = tape.constant(Matrix::Zero(b, 1));
    res.beta = tape.constant(Matrix::Constant(b, 1, joint ? cfg.beta_min : 1.0));
    return res;
  }
  const std::vector<int> own = per_sample(s, rays.image);
  const std::vector<int> light = light_image.empty() ? own : per_sample(s, light_image);
  const Var pts = sample_points(s, rays.origins, rays.directions);
  const Var dirs = sample_dirs(s, rays.directions);
  const Var feature = net.feature(tape, model.normalize(tape, pts));
  const Var sigma = net.density(tape, feature);
  const Var color = appearance.valid() ? net.color_with(tape, feature, dirs, diff::gather_rows(appearance, light))
                                       : net.color(tape, feature, dirs, light);
  if (!joint) {
    const Var pix = to_pixels(composite_static(sigma, color, s.deltas), s, 1.0);
    res.rgb = diff::slice_cols(pix, 0, 3);
    res.opacity = diff::slice_cols(pix, 3, 1);
    res.beta = tape.constant(Matrix::Ones(b, 1));
    return res;
  }
  const TransientOutput tr = net.transient(tape, feature, own);
  res.sigma_transient = tr.sigma;
  const Var pix =
      to_pixels(composite_joint(sigma, color, tr.sigma, tr.color, tr.beta, s.deltas, cfg.beta_min), s, 1.0);
  res.rgb = diff::slice_cols(pix, 0, 3);
  res.beta = diff::slice_cols(pix, 3, 1) + tape.constant(missing_fill(s, cfg.beta_min));
  res.opacity = diff::slice_cols(pix, 4, 1);
  return res;
}

RenderResult render_shaded(Tape& tape, const Model& model, const RayBatch& rays, const SampleOptions& opt, Rng* rng,
                           bool transient, const Var& lights_in, const Var& gamma_in,
                           std::span<const int> light_image) {
  if (!model.has_rendering()) throw ContractViolation("render_shaded: model has no rendering branch");
  const FieldConfig& cfg = model.field();
  const GeometryNet& net = model.geometry();
  const RenderNet& rnet = model.render_net();
  const bool use_transient = transient && cfg.transient;
  RenderResult res;
  res.samples = sample_rays(model, rays, opt, rng);
  const SampleBatch& s = res.samples;
  const Eigen::Index b = s.rays;
  const Var lights = lights_in.valid() ? lights_in : tape.param(const_cast<Param&>(model.lights()));
  const Var gamma = gamma_in.valid() ? gamma_in : tape.param(const_cast<Param&>(model.gamma()));
  const std::vector<int> light_of_ray =
      light_image.empty() ? rays.image : std::vector<int>(light_image.begin(), light_image.end());

  if (s.valid() == 0) {
    res.linear = tape.constant(Matrix::Ones(b, 3));
    res.rgb = tape.constant(Matrix::Ones(b, 3));
    res.opacity = tape.constant(Matrix::Zero(b, 1));
    res.beta = tape.constant(Matrix::Constant(b, 1, use_transient ? cfg.beta_min : 1.0));
    return res;
  }

  const Matrix& o = rays.origins.value();
  const Matrix& d = rays.directions.value();
  const Eigen::Index v = s.valid(), n = s.per_ray;
  Matrix world(v * n, 3);
  for (Eigen::Index r = 0; r < v; ++r) {
    const int ray = s.ray_of[static_cast<std::size_t>(r)];
    for (Eigen::Index i = 0; i < n; ++i) world.row(r * n + i) = o.row(ray) + s.depths(r, i) * d.row(ray);
  }
  const Matrix sigma = model.static_density(world);
  const Matrix weights = composite_weights(sigma, s.deltas);
  const DepthStats ds = depth_stats(weights, s.depths);

  std::vector<double> beta_weight;
  std::vector<int> beta_target;
  std::vector<Var> betas;

  const ShadeFn shade = [&](const Matrix& pts, std::span<const int> ray) -> Var {
    const auto m = static_cast<std::size_t>(pts.rows());
    ShadedPoints sp;
    sp.points = pts;
    sp.image.resize(m);
    std::vector<int> light(m);
    Matrix wo(pts.rows(), 3);
    std::vector<int> seen(static_cast<std::size_t>(v), 0), count(static_cast<std::size_t>(v), 0);
    for (int r : ray) ++count[static_cast<std::size_t>(r)];
    for (std::size_t j = 0; j < m; ++j) {
      const int r = ray[j];
      const int bray = s.ray_of[static_cast<std::size_t>(r)];
      sp.image[j] = rays.image[static_cast<std::size_t>(bray)];
      light[j] = light_of_ray[static_cast<std::size_t>(bray)];
      wo.row(static_cast<Eigen::Index>(j)) = -d.row(bray);
      if (use_transient) {
        const int k = seen[static_cast<std::size_t>(r)]++;
        beta_weight.push_back(count[static_cast<std::size_t>(r)] == 1 ? ds.opacity(r, 0) : weights(r, k));
        beta_target.push_back(bray);
      }
    }
    const Var x = tape.constant(model.normalize(pts));
    sp.feature = net.feature(tape, x);
    const Material mat = rnet.material(tape, x, sp.feature);
    sp.normal = mat.normal;
    sp.diffuse = mat.diffuse;
    sp.specular = mat.specular;
    sp.gloss = mat.gloss;
    Var c = shade_sh(lights, light, mat.normal, tape.constant(wo), mat.diffuse, mat.specular, mat.gloss);
    if (use_transient) {
      const TransientOutput tr = net.transient(tape, sp.feature, sp.image);
      sp.sigma_transient = tr.sigma;
      sp.beta = tr.beta;
      betas.push_back(tr.beta);
      c = blend_transient(c, tr.color, tr.sigma);
    }
    res.shaded.push_back(std::move(sp));
    return c;
  };

  double tau = opt.tau_d;
  if (tau < 0.0) {
    double span = 0.0;
    for (Eigen::Index r = 0; r < v; ++r) span += s.far(r, 0) - s.near(r, 0);
    tau = default_tau_d(0.0, span / static_cast<double>(v));
  }
  const Var per_ray = opt.hybrid ? hybrid_shade(tape, s, o, d, sigma, tau, shade, &res.hybrid)
                                 : shade_all_points(tape, s, o, d, sigma, shade);
  const Var pix = to_pixels(per_ray, s, 1.0);
  res.linear = diff::slice_cols(pix, 0, 3);
  res.opacity = diff::slice_cols(pix, 3, 1);
  res.rgb = tone_map(res.linear, gamma, light_of_ray);
  if (use_transient) {
    if (betas.size() != 1) throw ContractViolation("render_shaded: expected a single shading pass");
    res.beta = diff::add_scalar(weighted_scatter(tape, betas[0], beta_weight, beta_target, b), cfg.beta_min);
  } else {
    res.beta = tape.constant(Matrix::Ones(b, 1));
  }
  return res;
}

RenderedImage render_image(const Model& model, const Camera& camera, int light_image, const SampleOptions& opt,
                           bool stage2, const std::optional<ShLight>& light, std::optional<double> gamma, int chunk) {
  camera.validate();
  if (light_image < 0 || light_image >= model.num_images()) throw InputError("lighting image index out of range");
  RenderedImage out{Image(camera.width, camera.height, 3), Image(camera.width, camera.height, 1)};
  const int total = camera.width * camera.height;
  for (int start = 0; start < total; start += chunk) {
    const int count = std::min(chunk, total - start);
    Tape tape;
    RayBatch rays;
    Matrix o(count, 3), dm(count, 3);
    for (int i = 0; i < count; ++i) {
      const int p = start + i;
      const Ray r = pixel_ray(camera, Vec2(p % camera.width + 0.5, p / camera.width + 0.5));
      o.row(i) = r.origin.transpose();
      dm.row(i) = r.direction.transpose();
    }
    rays.origins = tape.constant(o);
    rays.directions = tape.constant(dm);
    rays.image.assign(static_cast<std::size_t>(count), light_image);
    rays.near.assign(static_cast<std::size_t>(count), camera.near);
    rays.far.assign(static_cast<std::size_t>(count), camera.far);
    Matrix rgb, alpha;
    if (stage2) {
      Var lv, gv;
      std::vector<int> li;
      if (light) {
        const auto flat = light_to_flat(*light);
        Matrix row(1, kLightSize);
        for (int j = 0; j < kLightSize; ++j) row(0, j) = flat[static_cast<std::size_t>(j)];
        lv = tape.constant(row);
      }
      if (gamma) gv = tape.constant(Matrix::Constant(1, 1, *gamma));
      if (light || gamma) {
        // Single-row tables indexed by zero.
        if (!lv.valid()) lv = tape.constant(model.lights().value.row(light_image));
        if (!gv.valid()) gv = tape.constant(model.gamma().value.row(light_image));
        li.assign(static_cast<std::size_t>(count), 0);
      }
      const RenderResult r = render_shaded(tape, model, rays, opt, nullptr, false, lv, gv, li);
      rgb = r.rgb.value();
      alpha = r.opacity.value();
    } else {
      const GeometryResult r = render_geometry(tape, model, rays, opt, nullptr, true);
      rgb = r.rgb.value();
      alpha = r.opacity.value();
    }
    for (int i = 0; i < count; ++i) {
      const int p = start + i;
      out.rgb.set_rgb(p % camera.width, p / camera.width, rgb.row(i).transpose());
      out.alpha.at(p % camera.width, p / camera.width, 0) = alpha(i, 0);
    }
  }
  return out;
}

LightingProbe::LightingProbe(const Model& model, const Camera& camera, const SampleOptions& opt, bool stage2,
                             int chunk)
    : stage2_(stage2), width_(camera.width), height_(camera.height) {
  camera.validate();
  if (stage2 && !model.has_rendering()) throw ContractViolation("LightingProbe: model has no rendering branch");
  const GeometryNet& net = model.geometry();
  const int adim = model.field().appearance_dim;
  const Matrix& head_w = model.store().at("color/head.weight").value;
  const Matrix& head_b = model.store().at("color/head.bias").value;
  appearance_weight_ = head_w.bottomRows(adim);
  const int total = width_ * height_;
  opacity_.resize(total, 1);
  for (int start = 0; start < total; start += chunk) {
    const int count = std::min(chunk, total - start);
    Chunk c;
    c.rays = count;
    c.origins.resize(count, 3);
    c.dirs.resize(count, 3);
    for (int i = 0; i < count; ++i) {
      const int p = start + i;
      const Ray r = pixel_ray(camera, Vec2(p % width_ + 0.5, p / width_ + 0.5));
      c.origins.row(i) = r.origin.transpose();
      c.dirs.row(i) = r.direction.transpose();
    }
    Tape tape;
    RayBatch rays;
    rays.origins = tape.constant(c.origins);
    rays.directions = tape.constant(c.dirs);
    rays.image.assign(static_cast<std::size_t>(count), 0);
    rays.near.assign(static_cast<std::size_t>(count), camera.near);
    rays.far.assign(static_cast<std::size_t>(count), camera.far);
    c.samples = sample_rays(model, rays, opt, nullptr);
    const SampleBatch& s = c.samples;
    if (s.valid() == 0) {
      opacity_.middleRows(start, count).setZero();
      chunks_.push_back(std::move(c));
      continue;
    }
    const Eigen::Index v = s.valid(), n = s.per_ray;
    Matrix world(v * n, 3);
    for (Eigen::Index r = 0; r < v; ++r) {
      const int ray = s.ray_of[static_cast<std::size_t>(r)];
      for (Eigen::Index i = 0; i < n; ++i) world.row(r * n + i) = c.origins.row(ray) + s.depths(r, i) * c.dirs.row(ray);
    }
    c.sigma = model.static_density(world);
    if (!stage2) {
      const Var pts = sample_points(s, rays.origins, rays.directions);
      const Var dirs = sample_dirs(s, rays.directions);
      const Var feature = net.feature(tape, model.normalize(tape, pts));
      const Var in = diff::concat_cols({feature, encode(dirs, model.field().dir_frequencies),
                                        tape.constant(Matrix::Zero(pts.rows(), adim))});
      c.base_logit = (in.value() * head_w).rowwise() + head_b.row(0);
      const Matrix w = composite_weights(c.sigma, s.deltas);
      const DepthStats ds = depth_stats(w, s.depths);
      opacity_.middleRows(start, count).setZero();
      for (Eigen::Index r = 0; r < v; ++r) opacity_(start + s.ray_of[static_cast<std::size_t>(r)], 0) = ds.opacity(r, 0);
    } else {
      double tau = opt.tau_d;
      if (tau < 0.0) {
        double span = 0.0;
        for (Eigen::Index r = 0; r < v; ++r) span += s.far(r, 0) - s.near(r, 0);
        tau = default_tau_d(0.0, span / static_cast<double>(v));
      }
      c.tau = opt.hybrid ? tau : -1.0;
      const ShadeFn shade = [&](const Matrix& pts, std::span<const int> ray) -> Var {
        Matrix wo(pts.rows(), 3);
        for (std::size_t j = 0; j < ray.size(); ++j)
          wo.row(static_cast<Eigen::Index>(j)) = -c.dirs.row(s.ray_of[static_cast<std::size_t>(ray[j])]);
        const Var x = tape.constant(model.normalize(pts));
        const Material mat = model.render_net().material(tape, x, net.feature(tape, x));
        c.normal = mat.normal.value();
        c.wo = wo;
        c.diffuse = mat.diffuse.value();
        c.specular = mat.specular.value();
        c.gloss = mat.gloss.value();
        return tape.constant(Matrix::Zero(pts.rows(), 3));
      };
      const Var per_ray = opt.hybrid ? hybrid_shade(tape, s, c.origins, c.dirs, c.sigma, c.tau, shade)
                                     : shade_all_points(tape, s, c.origins, c.dirs, c.sigma, shade);
      opacity_.middleRows(start, count) = to_pixels(per_ray, s, 1.0).value().col(3);
    }
    chunks_.push_back(std::move(c));
  }
}

Var LightingProbe::render(Tape& tape, const Var& lighting, const Var& gamma) const {
  if (lighting.rows() != 1) throw ContractViolation("LightingProbe: lighting must have one row");
  if (stage2_ && (lighting.cols() != kLightSize || !gamma.valid() || gamma.rows() != 1))
    throw ContractViolation("LightingProbe: stage 2 needs 1 x 48 lights and a 1 x 1 gamma");
  if (!stage2_ && lighting.cols() != appearance_weight_.rows())
    throw ContractViolation("LightingProbe: appearance size mismatch");
  std::vector<Var> parts;
  for (const Chunk& c : chunks_) {
    const SampleBatch& s = c.samples;
    if (s.valid() == 0) {
      parts.push_back(tape.constant(Matrix::Ones(c.rays, 3)));
      continue;
    }
    if (!stage2_) {
      const Var shift = diff::matmul(lighting, tape.constant(appearance_weight_));
      const Var color = diff::sigmoid(diff::add(tape.constant(c.base_logit), diff::repeat_rows(shift, c.base_logit.rows())));
      parts.push_back(diff::slice_cols(to_pixels(composite_static(tape.constant(c.sigma), color, s.deltas), s, 1.0), 0, 3));
      continue;
    }
    const ShadeFn shade = [&](const Matrix& pts, std::span<const int>) -> Var {
      if (pts.rows() != c.normal.rows()) throw ContractViolation("LightingProbe: shading order changed");
      const std::vector<int> zero(static_cast<std::size_t>(pts.rows()), 0);
      return shade_sh(lighting, zero, tape.constant(c.normal), tape.constant(c.wo), tape.constant(c.diffuse),
                      tape.constant(c.specular), tape.constant(c.gloss));
    };
    const Var per_ray = c.tau >= 0.0 ? hybrid_shade(tape, s, c.origins, c.dirs, c.sigma, c.tau, shade)
                                     : shade_all_points(tape, s, c.origins, c.dirs, c.sigma, shade);
    const std::vector<int> zero(static_cast<std::size_t>(c.rays), 0);
    parts.push_back(tone_map(diff::slice_cols(to_pixels(per_ray, s, 1.0), 0, 3), gamma, zero));
  }
  return parts.size() == 1 ? parts.front() : diff::concat_rows(parts);
}

}  // namespace irender
