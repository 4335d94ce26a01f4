// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// irender: command-line entry point for the full pipeline.

#include "irender/dataset.hpp"
#include "irender/error.hpp"
#include "irender/image.hpp"
#include "irender/metrics.hpp"
#include "irender/model.hpp"
#include "irender/normal_field.hpp"
#include "irender/shading.hpp"
#include "irender/trainer.hpp"
#include "irender/util/runtime.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace irender;

namespace {

// Outputs created by this run; removed when the command fails.
std::vector<fs::path> g_outputs;

void claim_output(const fs::path& p) {
  if (p.empty()) return;
  if (!fs::exists(p)) g_outputs.push_back(p);
  if (p.has_parent_path() && !p.parent_path().empty()) fs::create_directories(p.parent_path());
}

void remove_outputs() {
  std::error_code ec;
  for (const fs::path& p : g_outputs) fs::remove_all(p, ec);
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoi(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

// Image index by number or name, or -1.
int image_ref(const Model& model, const std::string& s) {
  int i = 0;
  if (parse_int(s, i)) {
    if (i < 0 || i >= model.num_images()) throw InputError("image index " + s + " out of range");
    return i;
  }
  for (int k = 0; k < model.num_images(); ++k)
    if (model.names()[static_cast<std::size_t>(k)] == s) return k;
  return -1;
}

Camera camera_arg(const Model& model, const std::string& s) {
  const int i = image_ref(model, s);
  if (i >= 0) return model.cameras()[static_cast<std::size_t>(i)];
  if (!fs::exists(s)) throw InputError("camera '" + s + "' is neither an image of the checkpoint nor a file");
  const std::vector<CameraRecord> recs = read_cameras(s);
  if (recs.empty()) throw InputError(s + ": no cameras");
  return model.to_refined(recs.front().camera);
}

Image read_image_any(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".pfm") return read_pfm(p);
  if (ext == ".png") return read_png(p);
  throw InputError("unsupported image format: " + p.string());
}

ShLight envmap_light(const fs::path& p) {
  Image env = read_image_any(p);
  if (env.channels < 3) throw InputError(p.string() + ": environment map must be RGB");
  if (env.channels == 4) {
    Image rgb(env.width, env.height, 3);
    for (int y = 0; y < env.height; ++y)
      for (int x = 0; x < env.width; ++x) rgb.set_rgb(x, y, env.rgb(x, y));
    env = rgb;
  }
  return project_envmap(env).light;
}

double mean_gamma(const Model& model) { return model.gamma().value.mean(); }

struct LightChoice {
  int image = 0;
  std::optional<ShLight> light;
};

LightChoice light_arg(const Model& model, const std::string& s) {
  LightChoice c;
  const int i = image_ref(model, s);
  if (i >= 0) {
    c.image = i;
    return c;
  }
  if (!fs::exists(s)) throw InputError("light '" + s + "' is neither an image of the checkpoint nor a file");
  if (!model.has_rendering()) throw InputError("a geometry checkpoint only supports lighting from a training image");
  const std::string ext = fs::path(s).extension().string();
  c.light = (ext == ".png" || ext == ".pfm") ? envmap_light(s) : read_sh_file(s);
  return c;
}

void write_render(const fs::path& out, const RenderedImage& r, const fs::path& alpha_out) {
  claim_output(out);
  write_png(out, r.rgb);
  if (!alpha_out.empty()) {
    claim_output(alpha_out);
    write_png(alpha_out, r.alpha);
  }
}

// Flags shared by the training commands.
struct TrainFlags {
  std::string data, config, out, log;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool no_transient = false, no_silhouette = false, no_adaptive = false, no_cam_opt = false;
  int mask_dilate = 0;
  int epochs = -1;
  long max_steps = -1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool stage1) {
  cmd->add_option("--data", f.data, "Dataset directory")->required();
  cmd->add_option("--config", f.config, "Training config JSON (overrides the desk preset)");
  cmd->add_option("--out", f.out, "Output checkpoint")->required();
  cmd->add_option("--log", f.log, "JSONL loss log");
  cmd->add_option("--seed", f.seed, "Random seed")->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_flag("--no-transient", f.no_transient, "Disable the transient branch");
  cmd->add_option("--mask-dilate", f.mask_dilate, "Dilate masks by R pixels")->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", f.epochs, "Epochs for this stage")->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-steps", f.max_steps, "Stop after this many steps")->check(CLI::NonNegativeNumber);
  if (stage1) {
    cmd->add_flag("--no-silhouette", f.no_silhouette, "Disable the silhouette loss");
    cmd->add_flag("--no-adaptive", f.no_adaptive, "Keep every background ray");
    cmd->add_flag("--no-cam-opt", f.no_cam_opt, "Keep cameras fixed");
  }
}

TrainConfig apply_flags(TrainConfig cfg, const TrainFlags& f, bool stage1) {
  if (!f.config.empty()) cfg = read_train_config(f.config);
  if (f.seed_set) cfg.seed = f.seed;
  if (f.no_transient) {
    cfg.transient_shading = false;
    if (stage1) cfg.field.transient = false;
  }
  if (f.no_silhouette) cfg.silhouette = false;
  if (f.no_adaptive) cfg.adaptive = false;
  if (f.no_cam_opt) cfg.camera_opt = false;
  if (f.epochs >= 0) (stage1 ? cfg.geometry_epochs : cfg.rendering_epochs) = f.epochs;
  if (f.max_steps >= 0) cfg.max_steps = f.max_steps;
  cfg.log_path = f.log;
  return cfg;
}

void print_report(const char* stage, const StageReport& r) {
  std::printf("%s: %ld steps, final loss %.6g, %.1f s\n", stage, r.steps, r.final_loss, r.seconds);
}

SampleOptions sampling_from_meta(const nlohmann::json& meta) {
  if (meta.contains("train")) return train_config_from_json(meta.at("train")).sampling;
  return {};
}

// Circle around the scene center at the mean training radius and elevation.
std::vector<Camera> orbit_cameras(const Model& model, int count) {
  const std::vector<Camera> cams = model.cameras();
  const Vec3 center = model.frame().center;
  Vec3 up = Vec3::Zero();
  for (const Camera& c : cams) up -= c.rotation.col(1);
  up.normalize();
  double radius = 0.0, elevation = 0.0;
  for (const Camera& c : cams) {
    const Vec3 d = c.center() - center;
    radius += d.norm();
    elevation += std::asin(std::clamp(d.normalized().dot(up), -1.0, 1.0));
  }
  radius /= static_cast<double>(cams.size());
  elevation /= static_cast<double>(cams.size());
  Vec3 e1 = cams.front().center() - center;
  e1 -= e1.dot(up) * up;
  if (e1.norm() < 1e-9) e1 = up.unitOrthogonal();
  e1.normalize();
  const Vec3 e2 = up.cross(e1);
  const Camera& ref = cams.front();
  std::vector<Camera> out;
  for (int k = 0; k < count; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / count;
    const Vec3 eye = center + radius * (std::cos(elevation) * (std::cos(phi) * e1 + std::sin(phi) * e2) +
                                        std::sin(elevation) * up);
    out.push_back(look_at(eye, center, up, ref.focal, ref.width, ref.height, ref.near, ref.far));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"irender: two-stage neural inverse rendering"};
  app.require_subcommand(1);
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--threads", threads, "Worker threads (1 gives bit-identical reruns)")->check(CLI::PositiveNumber);
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and its ground truth");
  std::string synth_spec = "red-sphere", synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", synth_spec, "Preset name (red-sphere, blocks, toy) or spec JSON");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train-geometry
  auto* tg = app.add_subcommand("train-geometry", "Stage 1: density, color and camera refinement");
  TrainFlags tg_flags;
  add_train_flags(tg, tg_flags, true);

  // extract-normals
  auto* en = app.add_subcommand("extract-normals", "Normal grid from a stage-1 checkpoint");
  std::string en_ckpt, en_data, en_out;
  NormalExtractOptions en_opt;
  bool en_no_nel = false;
  en->add_option("--ckpt", en_ckpt, "Stage-1 checkpoint")->required();
  en->add_option("--data", en_data, "Dataset directory (foreground pixels seed the surface cloud)")->required();
  en->add_option("--lambda", en_opt.grid.lambda, "Density remap scale")->check(CLI::PositiveNumber);
  en->add_option("--res", en_opt.grid.resolution, "Grid resolution")->check(CLI::Range(8, 1024));
  en->add_option("--max-rays", en_opt.max_rays, "Surface cloud ray budget")->check(CLI::PositiveNumber);
  en->add_flag("--unit-clamp", en_opt.grid.unit_clamp, "Clamp gradient magnitudes to one");
  en->add_flag("--no-nel", en_no_nel, "Raw central differences instead of the normal extraction layer");
  en->add_option("--out", en_out, "Output grid file")->required();

  // train-rendering
  auto* tr = app.add_subcommand("train-rendering", "Stage 2: materials, lighting and tone mapping");
  TrainFlags tr_flags;
  std::string tr_geom, tr_grid;
  add_train_flags(tr, tr_flags, false);
  tr->add_option("--geom", tr_geom, "Stage-1 checkpoint")->required();
  tr->add_option("--grid", tr_grid, "Normal grid")->required();

  // render
  auto* rd = app.add_subcommand("render", "Novel view");
  std::string rd_ckpt, rd_camera, rd_light = "0", rd_out, rd_alpha;
  std::optional<double> rd_gamma;
  rd->add_option("--ckpt", rd_ckpt, "Checkpoint")->required();
  rd->add_option("--camera", rd_camera, "Image index or name, or a cameras.json file (first record)")->required();
  rd->add_option("--light", rd_light, "SH file, environment map (.png/.pfm) or image index/name");
  rd->add_option("--gamma", rd_gamma, "Tone-mapping gamma for file lighting (default: mean learned)");
  rd->add_option("--out", rd_out, "Output PNG")->required();
  rd->add_option("--alpha", rd_alpha, "Optional alpha PNG");

  // relight
  auto* rl = app.add_subcommand("relight", "Orbit frames under a new environment");
  std::string rl_ckpt, rl_env, rl_out;
  int rl_orbit = 8;
  std::optional<double> rl_gamma;
  rl->add_option("--ckpt", rl_ckpt, "Stage-2 checkpoint")->required();
  rl->add_option("--envmap", rl_env, "Equirectangular environment map (.png/.pfm) or SH file")->required();
  rl->add_option("--orbit", rl_orbit, "Number of frames")->check(CLI::PositiveNumber);
  rl->add_option("--gamma", rl_gamma, "Tone-mapping gamma (default: mean learned)");
  rl->add_option("--out", rl_out, "Output directory")->required();

  // composite
  auto* cp = app.add_subcommand("composite", "Object over a background image (straight alpha)");
  std::string cp_ckpt, cp_bg, cp_camera, cp_env, cp_out;
  std::optional<double> cp_gamma;
  cp->add_option("--ckpt", cp_ckpt, "Checkpoint")->required();
  cp->add_option("--background", cp_bg, "Background PNG of the camera's size")->required();
  cp->add_option("--camera", cp_camera, "Image index or name, or a cameras.json file")->required();
  cp->add_option("--envmap", cp_env, "Environment map, SH file or image index/name")->required();
  cp->add_option("--gamma", cp_gamma, "Tone-mapping gamma for file lighting (default: mean learned)");
  cp->add_option("--out", cp_out, "Output PNG")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Metrics on the test split");
  std::string ev_ckpt, ev_data, ev_mode = "transfer", ev_out, ev_renders, ev_gt;
  int ev_steps = 1000, ev_dilate = 0;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--mode", ev_mode, "Lighting: transfer (nearest training image) or optimize")
      ->check(CLI::IsMember({"transfer", "optimize"}));
  ev->add_option("--steps", ev_steps, "Test-time lighting steps")->check(CLI::NonNegativeNumber);
  ev->add_option("--mask-dilate", ev_dilate, "Dilate masks by R pixels")->check(CLI::NonNegativeNumber);
  ev->add_option("--ground-truth", ev_gt, "ground_truth.json for FMSE (default: DATA/ground_truth.json if present)");
  ev->add_option("--renders", ev_renders, "Directory for rendered PNGs");
  ev->add_option("--out", ev_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  set_thread_count(threads);

  try {
    if (*synth) {
      const SyntheticScene scene = make_synthetic(read_synthetic_spec(synth_spec), synth_seed);
      claim_output(synth_out);
      write_synthetic(synth_out, scene);
      std::printf("wrote %d images to %s\n", scene.dataset.size(), synth_out.c_str());
    } else if (*tg) {
      const TrainConfig cfg = apply_flags(TrainConfig::desk(), tg_flags, true);
      const SceneDataset data = load_dataset(tg_flags.data, {tg_flags.mask_dilate});
      claim_output(tg_flags.out);
      claim_output(tg_flags.log);
      auto model = make_model(data, cfg);
      print_report("geometry", train_geometry(*model, data, cfg, tg_flags.out));
    } else if (*en) {
      nlohmann::json meta;
      const auto model = Model::load(en_ckpt, &meta);
      const SceneDataset data = load_dataset(en_data);
      en_opt.nel = !en_no_nel;
      const NormalGrid grid = extract_normals(*model, data, sampling_from_meta(meta), en_opt);
      claim_output(en_out);
      write_grid(en_out, grid);
      std::printf("grid %d^3 over [%g %g %g]-[%g %g %g]\n", grid.resolution(), grid.box().lo.x(), grid.box().lo.y(),
                  grid.box().lo.z(), grid.box().hi.x(), grid.box().hi.y(), grid.box().hi.z());
    } else if (*tr) {
      nlohmann::json meta;
      auto model = Model::load(tr_geom, &meta);
      if (model->has_rendering()) throw InputError(tr_geom + " is already a stage-2 checkpoint");
      const TrainConfig base = meta.contains("train") ? train_config_from_json(meta.at("train")) : TrainConfig::desk();
      const TrainConfig cfg = apply_flags(base, tr_flags, false);
      const SceneDataset data = load_dataset(tr_flags.data, {tr_flags.mask_dilate});
      const NormalGrid grid = read_grid(tr_grid);
      claim_output(tr_flags.out);
      claim_output(tr_flags.log);
      print_report("rendering", train_rendering(*model, data, grid, cfg, tr_flags.out));
    } else if (*rd) {
      nlohmann::json meta;
      const auto model = Model::load(rd_ckpt, &meta);
      const Camera cam = camera_arg(*model, rd_camera);
      const LightChoice lc = light_arg(*model, rd_light);
      std::optional<double> gamma = rd_gamma;
      if (lc.light && !gamma) gamma = mean_gamma(*model);
      const RenderedImage r =
          render_image(*model, cam, lc.image, sampling_from_meta(meta), model->has_rendering(), lc.light, gamma);
      write_render(rd_out, r, rd_alpha);
    } else if (*rl) {
      nlohmann::json meta;
      const auto model = Model::load(rl_ckpt, &meta);
      if (!model->has_rendering()) throw InputError("relight needs a stage-2 checkpoint");
      const LightChoice lc = light_arg(*model, rl_env);
      const double gamma = rl_gamma.value_or(mean_gamma(*model));
      const ShLight light =
          lc.light ? *lc.light
                   : light_from_flat(std::span<const double>(model->lights().value.row(lc.image).data(), kLightSize));
      claim_output(rl_out);
      fs::create_directories(rl_out);
      int k = 0;
      for (const Camera& cam : orbit_cameras(*model, rl_orbit)) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03d.png", k++);
        write_png(fs::path(rl_out) / name,
                  render_image(*model, cam, 0, sampling_from_meta(meta), true, light, gamma).rgb);
      }
      std::printf("wrote %d frames to %s\n", rl_orbit, rl_out.c_str());
    } else if (*cp) {
      nlohmann::json meta;
      const auto model = Model::load(cp_ckpt, &meta);
      const Camera cam = camera_arg(*model, cp_camera);
      const LightChoice lc = light_arg(*model, cp_env);
      const Image bg = read_png(cp_bg);
      if (bg.width != cam.width || bg.height != cam.height || bg.channels < 3)
        throw InputError("background must be an RGB image of the camera's size");
      const bool stage2 = model->has_rendering();
      double gamma = 1.0;
      if (stage2) gamma = lc.light ? cp_gamma.value_or(mean_gamma(*model)) : model->gamma().value(lc.image, 0);
      const RenderedImage r = render_image(*model, cam, lc.image, sampling_from_meta(meta), stage2, lc.light,
                                           stage2 ? std::optional<double>(gamma) : std::nullopt);
      Image out(cam.width, cam.height, 3);
      for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
          const double a = std::clamp(r.alpha.at(x, y, 0), 0.0, 1.0);
          for (int c = 0; c < 3; ++c) {
            const double b = bg.at(x, y, c);
            if (a <= 0.0) {
              out.at(x, y, c) = b;
              continue;
            }
            // Undo the white background in linear space, then re-encode.
            const double lin = std::pow(std::max(r.rgb.at(x, y, c), 0.0), gamma) - (1.0 - a);
            const double straight = std::pow(std::max(lin, 0.0) / a, 1.0 / gamma);
            out.at(x, y, c) = a * straight + (1.0 - a) * b;
          }
        }
      }
      claim_output(cp_out);
      write_png(cp_out, out);
    } else if (*ev) {
      nlohmann::json meta;
      const auto model = Model::load(ev_ckpt, &meta);
      const SceneDataset data = load_dataset(ev_data, {ev_dilate});
      std::optional<GroundTruth> gt;
      if (ev_gt.empty() && fs::exists(fs::path(ev_data) / "ground_truth.json"))
        ev_gt = (fs::path(ev_data) / "ground_truth.json").string();
      if (!ev_gt.empty()) gt = read_ground_truth(ev_gt);
      const EvalReport report =
          evaluate(*model, data, ev_mode == "transfer" ? EvalMode::kTransfer : EvalMode::kOptimize,
                   sampling_from_meta(meta), {}, ev_steps, gt ? &gt->cameras : nullptr);
      claim_output(ev_out);
      write_eval_csv(ev_out, report);
      if (!ev_renders.empty()) {
        claim_output(ev_renders);
        fs::create_directories(ev_renders);
        for (std::size_t k = 0; k < report.rows.size(); ++k) {
          write_png(fs::path(ev_renders) / (report.rows[k].image + ".png"), report.renders[k].rgb);
          write_png(fs::path(ev_renders) / (report.rows[k].image + "_alpha.png"), report.renders[k].alpha);
        }
      }
      for (const EvalRow& row : report.rows)
        std::printf("%s %s psnr %.3f masked %.3f ssim %.4f mmse %.5f\n", row.image.c_str(), row.mode.c_str(),
                    row.psnr, row.masked_psnr, row.ssim, row.mmse);
      if (report.fmse) std::printf("fmse %.6g\n", *report.fmse);
    }
  } catch (const InputError& e) {
    remove_outputs();
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    remove_outputs();
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
