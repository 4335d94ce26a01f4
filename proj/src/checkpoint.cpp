// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/checkpoint.hpp"

#include "irender/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace irender {

using diff::Matrix;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'R', 'C', 'K'};

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const CheckpointEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const json& meta, const diff::ParamStore& store) {
  json params = json::array();
  for (const diff::Param* p : store.all()) {
    params.push_back({{"name", p->name}, {"group", store.group_of(p->name)}, {"rows", p->value.rows()},
                      {"cols", p->value.cols()}});
  }
  const std::string header = json{{"meta", meta}, {"params", params}}.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t size = header.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const diff::Param* p : store.all()) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InputError(path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion) {
    throw InputError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (size > (std::uint64_t{1} << 32)) throw InputError(path.string() + ": corrupt checkpoint header");
  std::string header(size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(size));
  Checkpoint ck;
  try {
    json h = json::parse(header);
    ck.meta = h.at("meta");
    for (const json& p : h.at("params")) {
      CheckpointEntry e;
      e.name = p.at("name").get<std::string>();
      e.group = p.at("group").get<std::string>();
      e.value.resize(p.at("rows").get<Eigen::Index>(), p.at("cols").get<Eigen::Index>());
      ck.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": corrupt checkpoint header: " + e.what());
  }
  for (CheckpointEntry& e : ck.entries) {
    in.read(reinterpret_cast<char*>(e.value.data()), static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!in) throw InputError(path.string() + ": truncated checkpoint");
  return ck;
}

void restore_params(diff::ParamStore& store, const Checkpoint& ckpt, const std::vector<std::string>& groups) {
  for (diff::Param* p : store.all()) {
    const std::string& g = store.group_of(p->name);
    if (!groups.empty() && std::find(groups.begin(), groups.end(), g) == groups.end()) continue;
    const CheckpointEntry* e = ckpt.find(p->name);
    if (e == nullptr) throw InputError("checkpoint lacks parameter " + p->name);
    if (e->value.rows() != p->value.rows() || e->value.cols() != p->value.cols()) {
      throw InputError("checkpoint shape mismatch for " + p->name + ": " + std::to_string(e->value.rows()) + "x" +
                       std::to_string(e->value.cols()) + " vs " + std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    }
    p->value = e->value;
  }
}

}  // namespace irender
