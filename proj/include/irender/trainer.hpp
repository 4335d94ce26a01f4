// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Two-stage training, normal extraction, test-time lighting and evaluation.

#pragma once

#include "irender/dataset.hpp"
#include "irender/losses.hpp"
#include "irender/model.hpp"
#include "irender/normal_field.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace irender {

struct TrainConfig {
  FieldConfig field = FieldConfig::desk();
  SampleOptions sampling;
  int batch_size = 1024;
  int geometry_epochs = 30;
  int rendering_epochs = 10;
  /// Stops a stage after this many steps (0: run every epoch).
  long max_steps = 0;
  double learning_rate = 5e-3;
  double grad_clip = 10.0;
  LossWeights weights;
  bool silhouette = true;
  bool adaptive = true;
  bool camera_opt = true;
  /// Step-size multiplier for the camera deltas.
  double camera_lr_scale = 0.2;
  bool shared_focal = false;
  /// Blend a transient color into the SH color in the rendering stage.
  bool transient_shading = true;
  double smooth_std = 0.01;
  std::uint64_t seed = 0;
  /// Saves the stage checkpoint every this many epochs (0: only at the end).
  int checkpoint_every = 0;
  std::filesystem::path log_path;

  static TrainConfig desk();
  static TrainConfig full();
};

/// JSON object whose keys override the desk preset ("preset": "full"
/// selects the other base).
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig read_train_config(const std::filesystem::path& path);
nlohmann::json train_config_to_json(const TrainConfig& c);

struct StageReport {
  long steps = 0;
  double final_loss = 0.0;
  std::vector<double> step_loss;
  std::vector<double> step_psnr;
  std::vector<double> epoch_transient;  // mean transient density per epoch
  double seconds = 0.0;
};

/// Builds an untrained stage-1 model for the dataset (frame from the point
/// box when available).
std::unique_ptr<Model> make_model(const SceneDataset& data, const TrainConfig& config);

/// Optimizes fields, embeddings and (optionally) camera deltas under the
/// geometry objective. Writes `checkpoint` when given. Throws NumericError
/// on a non-finite loss after restoring and saving the last good state.
StageReport train_geometry(Model& model, const SceneDataset& data, const TrainConfig& config,
                           const std::filesystem::path& checkpoint = {});

struct SurfaceCloud {
  std::vector<Vec3> points;
};

/// Expected ray-surface intersections for up to `max_rays` foreground pixels
/// of the training images (rays with opacity above one half).
SurfaceCloud surface_cloud(const Model& model, const SceneDataset& data, const SampleOptions& sampling,
                           int max_rays = 20000);

struct NormalExtractOptions {
  NormalGridOptions grid;
  /// Raw-density central differences instead of the remap and kernel.
  bool nel = true;
  int max_rays = 20000;
};

/// Surface cloud, padded box, density grid and normals. Throws InputError
/// when the cloud is empty.
NormalGrid extract_normals(const Model& model, const SceneDataset& data, const SampleOptions& sampling,
                           const NormalExtractOptions& options);

/// Adds the rendering branch and optimizes material, transient, lighting
/// and gamma with the geometry frozen.
StageReport train_rendering(Model& model, const SceneDataset& data, const NormalGrid& grid, const TrainConfig& config,
                            const std::filesystem::path& checkpoint = {});

/// Training image whose camera center is closest to `camera`.
int nearest_training_image(const Model& model, const SceneDataset& data, const Camera& camera);

struct LightingFit {
  /// Stage 1: 1 x appearance_dim; stage 2: 1 x 49 (48 SH values, gamma).
  diff::Matrix params;
  std::vector<double> loss;  // loss after every step, accepted or not
  int accepted = 0;
};

/// Gradient descent with step halving on the lighting of one image, all
/// networks frozen. Starts from the lighting of `init_image`.
LightingFit optimize_test_lighting(const Model& model, const Camera& camera, const Image& target, int init_image,
                                   int steps, const SampleOptions& sampling, double learning_rate = 1e-2);

/// Renders with fitted lighting parameters.
RenderedImage render_with_lighting(const Model& model, const Camera& camera, const LightingFit& fit,
                                   const SampleOptions& sampling);

enum class EvalMode { kTransfer, kOptimize };

struct EvalRow {
  std::string image;
  std::string mode;
  double psnr = 0.0;
  double masked_psnr = 0.0;
  double ssim = 0.0;
  double mmse = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::optional<double> fmse;
  std::vector<RenderedImage> renders;
};

/// Metrics on `images` (the test split when empty). FMSE over the training
/// cameras when ground-truth cameras are given.
EvalReport evaluate(const Model& model, const SceneDataset& data, EvalMode mode, const SampleOptions& sampling,
                    std::vector<int> images = {}, int optimize_steps = 1000,
                    const std::vector<Camera>* gt_cameras = nullptr);
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace irender
