// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "irender/diff/param_store.hpp"

namespace irender::diff {

/// Standard Adam hyper-parameters; only the learning rate comes from the
/// training schedule.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every trainable parameter. Throws
/// NumericError naming the offending parameter, before touching any state,
/// if a gradient is not finite.
void adam_step(ParamStore& store, double lr, const AdamConfig& config = {});

enum class Stage { Geometry, Rendering };

inline constexpr double kBaseLearningRate = 4e-4;

/// Geometry stage: step decay by 0.3 every 10 epochs. Rendering stage:
/// cosine annealing to zero with T_max = 10. Fractional epochs are allowed
/// so callers can anneal per step.
double lr_schedule(Stage stage, double epoch, double base_lr = kBaseLearningRate);

}  // namespace irender::diff
