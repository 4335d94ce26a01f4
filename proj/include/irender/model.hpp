// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// A trained scene: fields, per-image camera deltas and lighting, plus the
// frame used to normalize positions before they enter the networks.

#pragma once

#include "irender/camera.hpp"
#include "irender/diff/param_store.hpp"
#include "irender/field.hpp"
#include "irender/image.hpp"
#include "irender/normal_field.hpp"
#include "irender/render.hpp"
#include "irender/shading.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace irender {

/// Positions enter the networks as (x - center) / scale.
struct SceneFrame {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
  std::optional<Aabb> box;  // ray clipping box when known
};

/// Sampling options shared by training and rendering.
struct SampleOptions {
  int samples = 32;
  int fine_samples = 0;
  bool hybrid = true;
  /// Variance threshold of the expected-depth shortcut; negative selects
  /// (far - near) / 5000 per ray batch.
  double tau_d = -1.0;
};

class Model {
 public:
  /// Builds stage-1 parameters: geometry fields and zero camera deltas.
  Model(const FieldConfig& field, std::vector<Camera> cameras, std::vector<std::string> names, SceneFrame frame,
        std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Adds the material branch, SH lights (constant unit radiance) and gamma
  /// (2.4) for every image.
  void add_rendering(std::uint64_t seed);
  bool has_rendering() const { return render_ != nullptr; }

  diff::ParamStore& store() { return store_; }
  const diff::ParamStore& store() const { return store_; }
  const GeometryNet& geometry() const { return *geometry_; }
  const RenderNet& render_net() const { return *render_; }
  const FieldConfig& field() const { return geometry_->config(); }
  const SceneFrame& frame() const { return frame_; }
  int num_images() const { return static_cast<int>(cameras_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  /// Input cameras (before deltas).
  const std::vector<Camera>& base_cameras() const { return cameras_; }
  /// Input cameras with the learned deltas applied.
  std::vector<Camera> cameras() const;
  /// Maps a camera given in input coordinates into the refined frame: the
  /// rigid motion that best aligns the input to the refined cameras of every
  /// image with a nonzero delta, plus their mean focal offset.
  Camera to_refined(const Camera& input) const;

  diff::Param& deltas() { return *deltas_; }
  const diff::Param& deltas() const { return *deltas_; }
  diff::Param& lights() { return *lights_; }
  const diff::Param& lights() const { return *lights_; }
  diff::Param& gamma() { return *gamma_; }
  const diff::Param& gamma() const { return *gamma_; }
  bool shared_focal = false;

  /// World positions to network inputs.
  diff::Var normalize(diff::Tape& tape, const diff::Var& x) const;
  diff::Matrix normalize(const diff::Matrix& x) const;

  /// Static density at world positions (M x 3 -> M x 1), no gradients.
  diff::Matrix static_density(const diff::Matrix& world) const;

  /// meta["model"] carries architecture, frame, cameras and names; callers
  /// may add more keys.
  nlohmann::json meta() const;
  void save(const std::filesystem::path& path, nlohmann::json extra = nlohmann::json::object()) const;
  /// Rebuilds the architecture recorded in the checkpoint and restores all
  /// parameters.
  static std::unique_ptr<Model> load(const std::filesystem::path& path, nlohmann::json* meta_out = nullptr);

 private:
  diff::ParamStore store_;
  std::unique_ptr<GeometryNet> geometry_;
  std::unique_ptr<RenderNet> render_;
  std::vector<Camera> cameras_;
  std::vector<std::string> names_;
  SceneFrame frame_;
  diff::Param* deltas_ = nullptr;
  diff::Param* lights_ = nullptr;
  diff::Param* gamma_ = nullptr;
};

nlohmann::json camera_to_json(const Camera& c);
Camera camera_from_json(const nlohmann::json& j);
nlohmann::json field_to_json(const FieldConfig& c);
FieldConfig field_from_json(const nlohmann::json& j);

/// Frame from a point box (center, half of the largest extent) or, without
/// points, from the camera centers.
SceneFrame make_frame(const std::optional<Aabb>& box, std::span<const Camera> cameras);

// Batch rendering -----------------------------------------------------------

struct RayBatch {
  diff::Var origins;     // B x 3
  diff::Var directions;  // B x 3
  std::vector<int> image;
  std::vector<double> near;
  std::vector<double> far;
};

/// Rays through pixel centers (pixel index y * W + x) of the given images.
/// Camera deltas are differentiable when `with_deltas` and trainable.
RayBatch make_rays(diff::Tape& tape, const Model& model, std::span<const int> image, std::span<const int> pixel,
                   bool with_deltas);

struct GeometryResult {
  diff::Var rgb;      // B x 3, white background added
  diff::Var beta;     // B x 1, >= beta_min
  diff::Var opacity;  // B x 1
  diff::Var sigma_transient;  // samples x 1 (invalid when no ray hits the box)
  SampleBatch samples;
};

/// Stage-1 rendering. `static_only` drops the transient branch (used for
/// novel views); `appearance` (K x appearance_dim), when valid, replaces
/// the embedding table; `light_image` picks the embedding row per ray when
/// non-empty (defaults to the ray's own image).
GeometryResult render_geometry(diff::Tape& tape, const Model& model, const RayBatch& rays, const SampleOptions& opt,
                               Rng* rng, bool static_only, const diff::Var& appearance = {},
                               std::span<const int> light_image = {});

struct ShadedPoints {
  diff::Matrix points;            // world positions, M x 3
  std::vector<int> image;         // image per point
  diff::Var normal;               // M x 3
  diff::Var diffuse, specular, gloss;
  diff::Var sigma_transient;      // M x 1
  diff::Var beta;                 // M x 1
  diff::Var feature;              // trunk feature (constant)
};

struct RenderResult {
  diff::Var rgb;      // B x 3, tone mapped, white background
  diff::Var linear;   // B x 3, linear radiance over white
  diff::Var beta;     // B x 1
  diff::Var opacity;  // B x 1 (constant: geometry is frozen)
  std::vector<ShadedPoints> shaded;
  HybridStats hybrid;
  SampleBatch samples;
};

/// Stage-2 rendering with SH shading. `lights` (K x 48) and `gamma` (K x 1)
/// default to the model parameters; `light_image` picks the row per ray
/// when non-empty. Without `transient` the SH color is used as is.
RenderResult render_shaded(diff::Tape& tape, const Model& model, const RayBatch& rays, const SampleOptions& opt,
                           Rng* rng, bool transient, const diff::Var& lights = {}, const diff::Var& gamma = {},
                           std::span<const int> light_image = {});

struct RenderedImage {
  Image rgb;    // 3 channels
  Image alpha;  // 1 channel
};

/// Full image for `camera`. Stage 1 renders the static field with the
/// embedding of `light_image`; stage 2 shades with that image's lighting
/// (or `light`/`gamma` when given).
RenderedImage render_image(const Model& model, const Camera& camera, int light_image, const SampleOptions& opt,
                           bool stage2, const std::optional<ShLight>& light = std::nullopt,
                           std::optional<double> gamma = std::nullopt, int chunk = 4096);


/// One camera's image with frozen fields whose lighting stays free. Samples,
/// densities and shading inputs are computed once; `render` only redoes the
/// lighting-dependent part.
class LightingProbe {
 public:
  /// Stage 1 varies the appearance embedding, stage 2 the SH lights and
  /// gamma of a single image.
  LightingProbe(const Model& model, const Camera& camera, const SampleOptions& opt, bool stage2, int chunk = 4096);

  bool stage2() const { return stage2_; }
  int width() const { return width_; }
  int height() const { return height_; }
  /// W*H x 1 opacity, row-major pixels.
  const diff::Matrix& opacity() const { return opacity_; }

  /// W*H x 3 pixels. Stage 1: `lighting` is 1 x appearance_dim. Stage 2:
  /// `lighting` is 1 x 48 and `gamma` 1 x 1.
  diff::Var render(diff::Tape& tape, const diff::Var& lighting, const diff::Var& gamma = {}) const;

 private:
  struct Chunk {
    SampleBatch samples;
    Eigen::Index rays = 0;
    diff::Matrix origins, dirs, sigma;
    double tau = 0.0;
    diff::Matrix base_logit;  // stage 1, samples x 3
    diff::Matrix normal, wo, diffuse, specular, gloss;  // stage 2, shaded points
  };
  bool stage2_;
  int width_, height_;
  diff::Matrix appearance_weight_;  // appearance_dim x 3
  std::vector<Chunk> chunks_;
  diff::Matrix opacity_;
};

}  // namespace irender
