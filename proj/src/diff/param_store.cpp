// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/diff/param_store.hpp"

#include "irender/error.hpp"

#include <cmath>

namespace irender::diff {

Param& ParamStore::add(const std::string& group, const std::string& name, Matrix init) {
  const std::string full = group + "/" + name;
  if (find(full) != nullptr) throw ContractViolation("duplicate parameter '" + full + "'");
  entries_.push_back({group, std::make_unique<Param>(full, std::move(init))});
  return *entries_.back().param;
}

const ParamStore::Entry* ParamStore::find(const std::string& full_name) const {
  for (const Entry& e : entries_) {
    if (e.param->name == full_name) return &e;
  }
  return nullptr;
}

bool ParamStore::contains(const std::string& full_name) const { return find(full_name) != nullptr; }

Param& ParamStore::at(const std::string& full_name) {
  const Entry* e = find(full_name);
  if (e == nullptr) throw InputError("unknown parameter '" + full_name + "'");
  return *e->param;
}

const Param& ParamStore::at(const std::string& full_name) const {
  const Entry* e = find(full_name);
  if (e == nullptr) throw InputError("unknown parameter '" + full_name + "'");
  return *e->param;
}

std::vector<std::string> ParamStore::groups() const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) {
    bool seen = false;
    for (const auto& g : out) seen = seen || g == e.group;
    if (!seen) out.push_back(e.group);
  }
  return out;
}

const std::string& ParamStore::group_of(const std::string& full_name) const {
  const Entry* e = find(full_name);
  if (e == nullptr) throw InputError("unknown parameter '" + full_name + "'");
  return e->group;
}

std::vector<Param*> ParamStore::group(const std::string& group) {
  std::vector<Param*> out;
  for (Entry& e : entries_) {
    if (e.group == group) out.push_back(e.param.get());
  }
  return out;
}

std::vector<const Param*> ParamStore::group(const std::string& group) const {
  std::vector<const Param*> out;
  for (const Entry& e : entries_) {
    if (e.group == group) out.push_back(e.param.get());
  }
  return out;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  for (Entry& e : entries_) out.push_back(e.param.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  for (const Entry& e : entries_) out.push_back(e.param.get());
  return out;
}

void ParamStore::set_trainable(const std::string& group, bool trainable) {
  for (Entry& e : entries_) {
    if (e.group == group) e.param->trainable = trainable;
  }
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.param->zero_grad();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const Entry& e : entries_) {
    if (e.param->trainable && e.param->grad.size() > 0) sq += e.param->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (std::isfinite(norm) && norm > max_norm) {
    const double s = max_norm / norm;
    for (Entry& e : entries_) {
      if (e.param->trainable) e.param->grad *= s;
    }
  }
  return norm;
}

}  // namespace irender::diff
