// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "irender/diff/tape.hpp"

#include <memory>
#include <string>
#include <vector>

namespace irender::diff {

/// Owns every trainable tensor, grouped by role ("trunk", "camera",
/// "lighting", ...). Parameter addresses are stable for the store's lifetime
/// and iteration follows insertion order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  /// Registers `group/name`. Names are unique across the whole store.
  Param& add(const std::string& group, const std::string& name, Matrix init);

  bool contains(const std::string& full_name) const;
  Param& at(const std::string& full_name);
  const Param& at(const std::string& full_name) const;

  std::vector<std::string> groups() const;
  const std::string& group_of(const std::string& full_name) const;
  std::vector<Param*> group(const std::string& group);
  std::vector<const Param*> group(const std::string& group) const;
  std::vector<Param*> all();
  std::vector<const Param*> all() const;

  void set_trainable(const std::string& group, bool trainable);
  void zero_grad();
  /// Global L2 norm over the gradients of trainable parameters.
  double grad_norm() const;
  /// Rescales all trainable gradients so that their global norm is at most
  /// `max_norm`. Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

 private:
  struct Entry {
    std::string group;
    std::unique_ptr<Param> param;
  };
  const Entry* find(const std::string& full_name) const;
  std::vector<Entry> entries_;
};

}  // namespace irender::diff
