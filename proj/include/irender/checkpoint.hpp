// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint container.
//
// Layout: "NRCK", u32 version, u64 header size, UTF-8 JSON header, then the
// parameter values as little-endian float64 in header order. The header
// carries caller metadata under "meta" and, per parameter, its full name,
// group and shape.

#pragma once

#include "irender/diff/param_store.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace irender {

struct CheckpointEntry {
  std::string name;  // full "group/name"
  std::string group;
  diff::Matrix value;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta, const diff::ParamStore& store);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values for every parameter of `store` in the listed groups (all
/// groups when empty). Throws InputError on a missing name or shape mismatch.
void restore_params(diff::ParamStore& store, const Checkpoint& ckpt, const std::vector<std::string>& groups = {});

}  // namespace irender
