// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/diff/adam.hpp"

#include "irender/error.hpp"

#include <cmath>
#include <numbers>

namespace irender::diff {

void adam_step(ParamStore& store, double lr, const AdamConfig& config) {
  auto params = store.all();
  for (const Param* p : params) {
    if (!p->trainable || p->grad.size() == 0) continue;
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
  }
  for (Param* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() == 0) p->zero_grad();
    if (p->m.size() != p->value.size()) {
      p->m = Matrix::Zero(p->value.rows(), p->value.cols());
      p->v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    ++p->step;
    p->m = config.beta1 * p->m + (1.0 - config.beta1) * p->grad;
    p->v = config.beta2 * p->v + (1.0 - config.beta2) * p->grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(p->step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(p->step));
    p->value.array() -= lr * p->lr_scale * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + config.eps);
  }
}

double lr_schedule(Stage stage, double epoch, double base_lr) {
  if (epoch < 0) throw ContractViolation("lr_schedule: negative epoch");
  if (stage == Stage::Geometry) return base_lr * std::pow(0.3, std::floor(epoch / 10.0));
  constexpr double kTMax = 10.0;
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * epoch / kTMax));
}

}  // namespace irender::diff
