// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/trainer.hpp"

#include "irender/diff/adam.hpp"
#include "irender/diff/ops.hpp"
#include "irender/error.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace irender {

namespace fs = std::filesystem;
using diff::Matrix;
using diff::Param;
using diff::Tape;
using diff::Var;
using json = nlohmann::json;

TrainConfig TrainConfig::desk() { return {}; }

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.field = FieldConfig::full();
  c.sampling.samples = 64;
  c.sampling.fine_samples = 64;
  c.batch_size = 4096;
  c.learning_rate = diff::kBaseLearningRate;
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  const LossWeights& w = c.weights;
  return {{"field", field_to_json(c.field)},
          {"samples", c.sampling.samples},
          {"fine_samples", c.sampling.fine_samples},
          {"hybrid", c.sampling.hybrid},
          {"tau_d", c.sampling.tau_d},
          {"batch_size", c.batch_size},
          {"geometry_epochs", c.geometry_epochs},
          {"rendering_epochs", c.rendering_epochs},
          {"max_steps", c.max_steps},
          {"learning_rate", c.learning_rate},
          {"grad_clip", c.grad_clip},
          {"silhouette", c.silhouette},
          {"adaptive", c.adaptive},
          {"camera_opt", c.camera_opt},
          {"camera_lr_scale", c.camera_lr_scale},
          {"shared_focal", c.shared_focal},
          {"transient_shading", c.transient_shading},
          {"smooth_std", c.smooth_std},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"weights",
           {{"geo_transient", w.geo_transient},
            {"silhouette", w.silhouette},
            {"camera", w.camera},
            {"render_transient", w.render_transient},
            {"normal", w.normal},
            {"smooth", w.smooth},
            {"spec", w.spec},
            {"gamma", w.gamma},
            {"light", w.light},
            {"light_tau", w.light_tau},
            {"bce_eps", w.bce_eps}}}};
}

TrainConfig train_config_from_json(const json& j) {
  try {
    TrainConfig c = j.value("preset", std::string("desk")) == "full" ? TrainConfig::full() : TrainConfig::desk();
    if (j.contains("preset") && j.at("preset") != "full" && j.at("preset") != "desk")
      throw InputError("unknown training preset " + j.at("preset").dump());
    if (j.contains("field")) {
      json f = field_to_json(c.field);
      f.update(j.at("field"));
      c.field = field_from_json(f);
    }
    c.sampling.samples = j.value("samples", c.sampling.samples);
    c.sampling.fine_samples = j.value("fine_samples", c.sampling.fine_samples);
    c.sampling.hybrid = j.value("hybrid", c.sampling.hybrid);
    c.sampling.tau_d = j.value("tau_d", c.sampling.tau_d);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.geometry_epochs = j.value("geometry_epochs", c.geometry_epochs);
    c.rendering_epochs = j.value("rendering_epochs", c.rendering_epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.silhouette = j.value("silhouette", c.silhouette);
    c.adaptive = j.value("adaptive", c.adaptive);
    c.camera_opt = j.value("camera_opt", c.camera_opt);
    c.camera_lr_scale = j.value("camera_lr_scale", c.camera_lr_scale);
    c.shared_focal = j.value("shared_focal", c.shared_focal);
    c.transient_shading = j.value("transient_shading", c.transient_shading);
    c.smooth_std = j.value("smooth_std", c.smooth_std);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      LossWeights& d = c.weights;
      d.geo_transient = w.value("geo_transient", d.geo_transient);
      d.silhouette = w.value("silhouette", d.silhouette);
      d.camera = w.value("camera", d.camera);
      d.render_transient = w.value("render_transient", d.render_transient);
      d.normal = w.value("normal", d.normal);
      d.smooth = w.value("smooth", d.smooth);
      d.spec = w.value("spec", d.spec);
      d.gamma = w.value("gamma", d.gamma);
      d.light = w.value("light", d.light);
      d.light_tau = w.value("light_tau", d.light_tau);
      d.bce_eps = w.value("bce_eps", d.bce_eps);
    }
    if (c.batch_size < 1 || c.sampling.samples < 2 || c.sampling.fine_samples < 0 || c.geometry_epochs < 0 ||
        c.rendering_epochs < 0 || c.max_steps < 0 || !(c.learning_rate > 0.0) || !(c.grad_clip > 0.0))
      throw InputError("training config has out-of-range values");
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("training config: ") + e.what());
  }
}

TrainConfig read_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  try {
    return train_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t step) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage * 0x100000001ULL + step + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Batch {
  std::vector<int> image;
  std::vector<int> pixel;
  Matrix target;  // B x 3
  Matrix mask;    // B x 1
};

Batch gather_batch(const SceneDataset& data, const std::vector<RayRef>& order, std::size_t start, std::size_t count) {
  Batch b;
  b.target.resize(static_cast<Eigen::Index>(count), 3);
  b.mask.resize(static_cast<Eigen::Index>(count), 1);
  for (std::size_t i = 0; i < count; ++i) {
    const RayRef& r = order[start + i];
    const Image& img = data.images[static_cast<std::size_t>(r.image)];
    const int x = r.pixel % img.width, y = r.pixel / img.width;
    b.image.push_back(r.image);
    b.pixel.push_back(r.pixel);
    b.target.row(static_cast<Eigen::Index>(i)) = img.rgb(x, y).transpose();
    b.mask(static_cast<Eigen::Index>(i), 0) = data.masks[static_cast<std::size_t>(r.image)].at(x, y, 0);
  }
  return b;
}

double batch_psnr(const Matrix& pred, const Matrix& target) {
  const double m = (pred - target).squaredNorm() / static_cast<double>(pred.size());
  return m > 0.0 ? std::min(99.0, -10.0 * std::log10(m)) : 99.0;
}

std::vector<Matrix> snapshot(const diff::ParamStore& store) {
  std::vector<Matrix> out;
  for (const Param* p : store.all()) out.push_back(p->value);
  return out;
}

void restore(diff::ParamStore& store, const std::vector<Matrix>& snap) {
  std::size_t i = 0;
  for (Param* p : store.all()) p->value = snap[i++];
}

double value_or_zero(const Var& v) { return v.valid() ? v.scalar() : 0.0; }

class StepLog {
 public:
  explicit StepLog(const fs::path& path) {
    if (!path.empty()) {
      out_.open(path, std::ios::trunc);
      if (!out_) throw InputError("cannot write log " + path.string());
    }
  }
  void write(const json& line) {
    if (out_.is_open()) out_ << line.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

void check_dataset(const Model& model, const SceneDataset& data) {
  if (model.num_images() != data.size()) throw InputError("checkpoint and dataset have different image counts");
  for (int i = 0; i < data.size(); ++i) {
    if (model.names()[static_cast<std::size_t>(i)] != data.names[static_cast<std::size_t>(i)])
      throw InputError("checkpoint and dataset image names differ at '" + data.names[static_cast<std::size_t>(i)] + "'");
  }
}

// Runs the epoch/batch loop shared by both stages. `step_fn` builds the loss
// on `tape` and returns {total, log fields, batch psnr}.
struct StepOutput {
  Var total;
  json fields;
  double psnr = 0.0;
  double transient = 0.0;
};

template <class StepFn>
StageReport run_stage(Model& model, const SceneDataset& data, const TrainConfig& cfg, diff::Stage stage, int epochs,
                      const fs::path& checkpoint, const json& extra_meta, StepFn step_fn) {
  const auto t0 = std::chrono::steady_clock::now();
  StageReport report;
  StepLog log(cfg.log_path);
  const RayPool pool = build_ray_pool(data, data.train);
  const std::uint64_t stage_id = stage == diff::Stage::Geometry ? 1 : 2;
  std::vector<Matrix> good = snapshot(model.store());
  bool stop = false;
  for (int epoch = 0; epoch < epochs && !stop; ++epoch) {
    const std::vector<RayRef> order =
        rebalance_epoch(pool, mix_seed(cfg.seed, stage_id, 1000000000ULL + static_cast<std::uint64_t>(epoch)),
                        cfg.adaptive);
    const std::size_t steps_per_epoch = (order.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                        static_cast<std::size_t>(cfg.batch_size);
    double transient_sum = 0.0;
    std::size_t transient_count = 0;
    for (std::size_t k = 0; k < steps_per_epoch; ++k) {
      if (cfg.max_steps > 0 && report.steps >= cfg.max_steps) {
        stop = true;
        break;
      }
      const std::size_t start = k * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      const Batch batch = gather_batch(data, order, start, count);
      const double progress = epoch + static_cast<double>(k) / static_cast<double>(steps_per_epoch);
      const double lr = diff::lr_schedule(stage, progress, cfg.learning_rate);
      Rng rng(mix_seed(cfg.seed, stage_id, static_cast<std::uint64_t>(report.steps)));
      Tape tape;
      StepOutput out = step_fn(tape, batch, rng);
      const double loss = out.total.scalar();
      if (!std::isfinite(loss)) {
        restore(model.store(), good);
        if (!checkpoint.empty()) model.save(checkpoint, extra_meta);
        throw NumericError("non-finite loss at step " + std::to_string(report.steps) +
                           "; restored the last good parameters");
      }
      good = snapshot(model.store());
      model.store().zero_grad();
      tape.backward(out.total);
      model.store().clip_grad_norm(cfg.grad_clip);
      diff::adam_step(model.store(), lr);
      json line = {{"stage", stage_id}, {"epoch", epoch}, {"step", report.steps}, {"lr", lr}, {"loss", loss},
                   {"psnr", out.psnr}};
      line.update(out.fields);
      log.write(line);
      report.step_loss.push_back(loss);
      report.step_psnr.push_back(out.psnr);
      report.final_loss = loss;
      transient_sum += out.transient;
      ++transient_count;
      ++report.steps;
    }
    if (transient_count > 0) report.epoch_transient.push_back(transient_sum / static_cast<double>(transient_count));
    if (!checkpoint.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      model.save(checkpoint, extra_meta);
  }
  if (!checkpoint.empty()) model.save(checkpoint, extra_meta);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Matrix random_unit_rows(Rng& rng, Eigen::Index n) {
  Matrix d(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) d.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized().transpose();
  return d;
}

}  // namespace

std::unique_ptr<Model> make_model(const SceneDataset& data, const TrainConfig& config) {
  if (data.size() == 0) throw InputError("empty dataset");
  auto model = std::make_unique<Model>(config.field, data.cameras, data.names,
                                       make_frame(data.point_bounds(), data.cameras), config.seed);
  model->shared_focal = config.shared_focal;
  return model;
}

StageReport train_geometry(Model& model, const SceneDataset& data, const TrainConfig& cfg, const fs::path& checkpoint) {
  check_dataset(model, data);
  diff::ParamStore& store = model.store();
  for (const std::string& g : store.groups()) store.set_trainable(g, true);
  store.set_trainable("camera", cfg.camera_opt);
  model.deltas().lr_scale = cfg.camera_lr_scale;
  if (model.has_rendering()) {
    store.set_trainable("material", false);
    store.set_trainable("lighting", false);
  }
  const FieldConfig& field = model.field();
  const double beta_floor = field.transient ? field.beta_min * (1.0 - 1e-12) : 0.0;
  const json meta = {{"stage", 1}, {"train", train_config_to_json(cfg)}};
  return run_stage(model, data, cfg, diff::Stage::Geometry, cfg.geometry_epochs, checkpoint, meta,
                   [&](Tape& tape, const Batch& batch, Rng& rng) {
                     const RayBatch rays = make_rays(tape, model, batch.image, batch.pixel, cfg.camera_opt);
                     const GeometryResult res = render_geometry(tape, model, rays, cfg.sampling, &rng, false);
                     GeoLossTerms t;
                     t.color = loss_color(res.rgb, batch.target, res.beta, beta_floor);
                     if (res.sigma_transient.valid()) t.transient = loss_transient(res.sigma_transient);
                     if (cfg.silhouette) t.silhouette = loss_silhouette(res.opacity, batch.mask, cfg.weights.bce_eps);
                     if (cfg.camera_opt) t.camera = loss_camera(tape.param(model.deltas()));
                     StepOutput out;
                     out.total = total_geo(tape, t, cfg.weights);
                     out.psnr = batch_psnr(res.rgb.value(), batch.target);
                     out.transient = value_or_zero(t.transient);
                     out.fields = {{"color", value_or_zero(t.color)},
                                   {"transient", out.transient},
                                   {"silhouette", value_or_zero(t.silhouette)},
                                   {"camera", value_or_zero(t.camera)}};
                     return out;
                   });
}

SurfaceCloud surface_cloud(const Model& model, const SceneDataset& data, const SampleOptions& sampling, int max_rays) {
  check_dataset(model, data);
  std::vector<int> image, pixel;
  for (int i : data.train) {
    const Image& m = data.masks[static_cast<std::size_t>(i)];
    for (int p = 0; p < m.width * m.height; ++p) {
      if (m.data[static_cast<std::size_t>(p)] > 0.5) {
        image.push_back(i);
        pixel.push_back(p);
      }
    }
  }
  // Even stride keeps the selection deterministic and spread over images.
  if (max_rays > 0 && image.size() > static_cast<std::size_t>(max_rays)) {
    std::vector<int> si, sp;
    const double stride = static_cast<double>(image.size()) / max_rays;
    for (int k = 0; k < max_rays; ++k) {
      const auto j = static_cast<std::size_t>(k * stride);
      si.push_back(image[j]);
      sp.push_back(pixel[j]);
    }
    image.swap(si);
    pixel.swap(sp);
  }
  SurfaceCloud cloud;
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < image.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, image.size() - start);
    Tape tape;
    const std::span<const int> ci(image.data() + start, n), cp(pixel.data() + start, n);
    const RayBatch rays = make_rays(tape, model, ci, cp, false);
    const SampleBatch s = sample_batch(rays.origins.value(), rays.directions.value(), rays.near, rays.far,
                                       sampling.samples, model.frame().box ? &*model.frame().box : nullptr, nullptr);
    if (s.valid() == 0) continue;
    const Matrix& o = rays.origins.value();
    const Matrix& d = rays.directions.value();
    Matrix world(s.valid() * s.per_ray, 3);
    for (Eigen::Index r = 0; r < s.valid(); ++r) {
      const int b = s.ray_of[static_cast<std::size_t>(r)];
      for (int i = 0; i < s.per_ray; ++i) world.row(r * s.per_ray + i) = o.row(b) + s.depths(r, i) * d.row(b);
    }
    const DepthStats ds = depth_stats(composite_weights(model.static_density(world), s.deltas), s.depths);
    for (Eigen::Index r = 0; r < s.valid(); ++r) {
      if (ds.empty[static_cast<std::size_t>(r)] || ds.opacity(r, 0) <= 0.5) continue;
      const int b = s.ray_of[static_cast<std::size_t>(r)];
      cloud.points.push_back((o.row(b) + ds.mean(r, 0) * d.row(b)).transpose());
    }
  }
  return cloud;
}

NormalGrid extract_normals(const Model& model, const SceneDataset& data, const SampleOptions& sampling,
                           const NormalExtractOptions& options) {
  const SurfaceCloud cloud = surface_cloud(model, data, sampling, options.max_rays);
  if (cloud.points.empty()) throw InputError("surface cloud is empty: no foreground ray reached opacity 0.5");
  const Aabb box = Aabb::around(cloud.points, 0.05);
  const DensityFn density = [&model](const Matrix& pts) { return model.static_density(pts); };
  if (!options.nel) return finite_difference_grid(density, box, options.grid.resolution);
  return extract_normal_grid(density, box, options.grid);
}

StageReport train_rendering(Model& model, const SceneDataset& data, const NormalGrid& grid, const TrainConfig& cfg,
                            const fs::path& checkpoint) {
  check_dataset(model, data);
  model.add_rendering(cfg.seed);
  diff::ParamStore& store = model.store();
  for (const std::string& g : store.groups()) store.set_trainable(g, false);
  for (const char* g : {"material", "transient", "transient_embed", "lighting"}) {
    for (const std::string& have : store.groups())
      if (have == g) store.set_trainable(g, true);
  }
  const FieldConfig& field = model.field();
  const bool transient = cfg.transient_shading && field.transient;
  const double beta_floor = transient ? field.beta_min * (1.0 - 1e-12) : 0.0;
  std::vector<int> train = data.train;
  const json meta = {{"stage", 2}, {"train", train_config_to_json(cfg)}};
  return run_stage(
      model, data, cfg, diff::Stage::Rendering, cfg.rendering_epochs, checkpoint, meta,
      [&](Tape& tape, const Batch& batch, Rng& rng) {
        const RayBatch rays = make_rays(tape, model, batch.image, batch.pixel, false);
        const RenderResult res = render_shaded(tape, model, rays, cfg.sampling, &rng, transient);
        RenderLossTerms t;
        t.color = loss_color(res.rgb, batch.target, res.beta, beta_floor);
        const Var lights = tape.param(model.lights());
        const Var gamma = tape.param(model.gamma());
        const auto nt = static_cast<Eigen::Index>(batch.image.size());
        std::vector<int> light_image(static_cast<std::size_t>(nt));
        for (int& k : light_image) k = train[rng.index(train.size())];
        const Matrix light_dirs = random_unit_rows(rng, nt);
        Var specular;
        if (!res.shaded.empty()) {
          const ShadedPoints& sp = res.shaded.front();
          if (sp.sigma_transient.valid()) t.transient = loss_transient(sp.sigma_transient);
          t.normal = loss_normal(sp.normal, grid.sample(sp.points));
          // Smoothness on up to one batch of the shaded points.
          const Eigen::Index m = sp.points.rows();
          std::vector<int> pick(static_cast<std::size_t>(std::min<Eigen::Index>(m, nt)));
          for (int& p : pick) p = static_cast<int>(rng.index(static_cast<std::size_t>(m)));
          Matrix jittered(static_cast<Eigen::Index>(pick.size()), 3);
          for (std::size_t i = 0; i < pick.size(); ++i) {
            jittered.row(static_cast<Eigen::Index>(i)) =
                sp.points.row(pick[i]) + cfg.smooth_std * Eigen::RowVector3d(rng.normal(), rng.normal(), rng.normal());
          }
          const Var xj = tape.constant(model.normalize(jittered));
          const Material mj = model.render_net().material(tape, xj, model.geometry().feature(tape, xj));
          t.smooth = loss_smooth(diff::gather_rows(sp.normal, pick), mj.normal);
          specular = sp.specular;
        } else {
          specular = tape.constant(Matrix::Zero(1, 1));
        }
        t.reg = loss_reg(specular, gamma, lights, light_image, light_dirs, cfg.weights).total;
        StepOutput out;
        out.total = total_render(tape, t, cfg.weights);
        out.psnr = batch_psnr(res.rgb.value(), batch.target);
        out.transient = value_or_zero(t.transient);
        out.fields = {{"color", value_or_zero(t.color)},   {"transient", out.transient},
                      {"normal", value_or_zero(t.normal)}, {"smooth", value_or_zero(t.smooth)},
                      {"reg", value_or_zero(t.reg)},       {"expected_rays", res.hybrid.expected_rays},
                      {"full_rays", res.hybrid.full_rays}};
        return out;
      });
}

}  // namespace irender
