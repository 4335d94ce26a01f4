// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/diff/ops.hpp"
#include "irender/error.hpp"
#include "irender/metrics.hpp"
#include "irender/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace irender {

namespace fs = std::filesystem;
using diff::Matrix;
using diff::Tape;
using diff::Var;

int nearest_training_image(const Model& model, const SceneDataset& data, const Camera& camera) {
  if (data.train.empty()) throw InputError("dataset has no training images");
  const std::vector<Camera> cams = model.cameras();
  int best = data.train.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (int i : data.train) {
    const double d = (cams[static_cast<std::size_t>(i)].center() - camera.center()).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

namespace {

Matrix image_rows(const Image& img) {
  Matrix m(static_cast<Eigen::Index>(img.width) * img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m.row(static_cast<Eigen::Index>(y) * img.width + x) = img.rgb(x, y).transpose();
  return m;
}

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

LossGrad probe_loss(const LightingProbe& probe, const Matrix& params, const Matrix& target) {
  Tape tape;
  Var light, gamma;
  if (probe.stage2()) {
    light = tape.variable(params.leftCols(kLightSize));
    gamma = tape.variable(params.rightCols(1));
  } else {
    light = tape.variable(params);
  }
  const Var loss = diff::mean(diff::square(diff::sub(probe.render(tape, light, gamma), tape.constant(target))));
  tape.backward(loss);
  LossGrad out;
  out.loss = loss.scalar();
  out.grad.resize(1, params.cols());
  if (probe.stage2()) {
    out.grad << light.grad(), gamma.grad();
  } else {
    out.grad = light.grad();
  }
  return out;
}

}  // namespace

LightingFit optimize_test_lighting(const Model& model, const Camera& camera, const Image& target, int init_image,
                                   int steps, const SampleOptions& sampling, double learning_rate) {
  if (target.width != camera.width || target.height != camera.height)
    throw InputError("test image size does not match its camera");
  if (init_image < 0 || init_image >= model.num_images()) throw InputError("lighting image index out of range");
  if (steps < 0 || !(learning_rate > 0.0)) throw InputError("invalid lighting optimization budget");
  const bool stage2 = model.has_rendering();
  LightingFit fit;
  if (stage2) {
    fit.params.resize(1, kLightSize + 1);
    fit.params << model.lights().value.row(init_image), model.gamma().value.row(init_image);
  } else {
    fit.params = model.geometry().appearance().value.row(init_image);
  }
  if (steps == 0) return fit;

  const LightingProbe probe(model, camera, sampling, stage2);
  const Matrix goal = image_rows(target);
  LossGrad cur = probe_loss(probe, fit.params, goal);
  // Adam proposals; a step is kept only if the loss does not rise, otherwise
  // the rate is halved.
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Matrix m = Matrix::Zero(1, fit.params.cols()), v = m;
  double lr = learning_rate;
  long t = 0;
  for (int step = 0; step < steps; ++step) {
    const Matrix m1 = kBeta1 * m + (1.0 - kBeta1) * cur.grad;
    const Matrix v1 = kBeta2 * v + (1.0 - kBeta2) * cur.grad.cwiseProduct(cur.grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t + 1));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t + 1));
    const Matrix update = (m1 / c1).array() / ((v1 / c2).array().sqrt() + kEps);
    Matrix next = fit.params - lr * update;
    if (stage2) next(0, kLightSize) = std::max(next(0, kLightSize), 0.5);
    LossGrad trial;
    bool ok = true;
    try {
      trial = probe_loss(probe, next, goal);
      ok = std::isfinite(trial.loss) && trial.loss <= cur.loss;
    } catch (const ContractViolation&) {
      ok = false;
    }
    if (ok) {
      fit.params = next;
      cur = std::move(trial);
      m = m1;
      v = v1;
      ++t;
      ++fit.accepted;
    } else {
      lr *= 0.5;
    }
    fit.loss.push_back(cur.loss);
  }
  return fit;
}

RenderedImage render_with_lighting(const Model& model, const Camera& camera, const LightingFit& fit,
                                   const SampleOptions& sampling) {
  const bool stage2 = model.has_rendering();
  const LightingProbe probe(model, camera, sampling, stage2);
  Tape tape;
  const Var out = stage2 ? probe.render(tape, tape.constant(fit.params.leftCols(kLightSize)),
                                        tape.constant(fit.params.rightCols(1)))
                         : probe.render(tape, tape.constant(fit.params));
  RenderedImage img{Image(camera.width, camera.height, 3), Image(camera.width, camera.height, 1)};
  for (int p = 0; p < camera.width * camera.height; ++p) {
    img.rgb.set_rgb(p % camera.width, p / camera.width, out.value().row(p).transpose());
    img.alpha.at(p % camera.width, p / camera.width, 0) = probe.opacity()(p, 0);
  }
  return img;
}

EvalReport evaluate(const Model& model, const SceneDataset& data, EvalMode mode, const SampleOptions& sampling,
                    std::vector<int> images, int optimize_steps, const std::vector<Camera>* gt_cameras) {
  if (model.num_images() != data.size()) throw InputError("checkpoint and dataset have different image counts");
  if (images.empty()) images = data.test;
  if (images.empty()) throw InputError("no evaluation images (empty test split)");
  const bool stage2 = model.has_rendering();
  const std::vector<Camera> cams = model.cameras();
  EvalReport report;
  for (int i : images) {
    if (i < 0 || i >= data.size()) throw InputError("evaluation image index out of range");
    const bool trained = std::find(data.train.begin(), data.train.end(), i) != data.train.end();
    const Camera cam = trained ? cams[static_cast<std::size_t>(i)] : model.to_refined(model.base_cameras()[static_cast<std::size_t>(i)]);
    const int light = nearest_training_image(model, data, cam);
    RenderedImage r = mode == EvalMode::kTransfer
                          ? render_image(model, cam, light, sampling, stage2)
                          : render_with_lighting(model, cam,
                                                 optimize_test_lighting(model, cam, data.images[static_cast<std::size_t>(i)],
                                                                        light, optimize_steps, sampling),
                                                 sampling);
    const Image& gt = data.images[static_cast<std::size_t>(i)];
    const Image& mask = data.masks[static_cast<std::size_t>(i)];
    EvalRow row;
    row.image = data.names[static_cast<std::size_t>(i)];
    row.mode = mode == EvalMode::kTransfer ? "transfer" : "optimize";
    row.psnr = psnr(r.rgb, gt);
    row.masked_psnr = psnr(r.rgb, gt, &mask);
    row.ssim = ssim(r.rgb, gt);
    row.mmse = mmse(r.alpha, mask);
    report.rows.push_back(row);
    report.renders.push_back(std::move(r));
  }
  if (gt_cameras) {
    if (static_cast<int>(gt_cameras->size()) != data.size()) throw InputError("ground-truth camera count mismatch");
    std::vector<Camera> a, b;
    for (int i : data.train) {
      a.push_back((*gt_cameras)[static_cast<std::size_t>(i)]);
      b.push_back(cams[static_cast<std::size_t>(i)]);
    }
    report.fmse = fmse(a, b);
  }
  return report;
}

void write_eval_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  out << "image,mode,psnr,masked_psnr,ssim,mmse,fmse\n";
  for (const EvalRow& r : report.rows) {
    out << r.image << ',' << r.mode << ',' << r.psnr << ',' << r.masked_psnr << ',' << r.ssim << ',' << r.mmse << ',';
    if (report.fmse) out << *report.fmse;
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace irender
