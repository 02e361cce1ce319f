// SPDX-License-Identifier: Apache-2.0
#include "rac/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <vector>

namespace rac {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native little-endian f32");

namespace {

constexpr char kMagic[4] = {'R', 'A', 'C', 'K'};

using json = nlohmann::json;

struct Entry {
  std::string kind;  // "param" | "adam_m" | "adam_v"
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
};

std::uint64_t byte_size(const Shape& shape) {
  return static_cast<std::uint64_t>(numel(shape)) * sizeof(float);
}

void append_group(std::vector<Entry>& entries, std::uint64_t& offset, const char* kind,
                  const std::map<std::string, Tensor>& group) {
  for (const auto& [name, t] : group) {
    entries.push_back({kind, name, t.shape, offset});
    offset += byte_size(t.shape);
  }
}

const std::map<std::string, Tensor>& group_of(const Checkpoint& ckpt, const std::string& kind) {
  if (kind == "param") return ckpt.params;
  if (kind == "adam_m") return ckpt.opt_m;
  if (kind == "adam_v") return ckpt.opt_v;
  fail("corrupt checkpoint header: unknown manifest kind '" + kind + "'");
}

std::map<std::string, Tensor>& group_of(Checkpoint& ckpt, const std::string& kind) {
  return const_cast<std::map<std::string, Tensor>&>(
      group_of(static_cast<const Checkpoint&>(ckpt), kind));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  // manifest in a fixed order (params, then moments, each name-sorted) so
  // save -> load -> save is byte-identical
  std::vector<Entry> entries;
  std::uint64_t offset = 0;
  append_group(entries, offset, "param", ckpt.params);
  append_group(entries, offset, "adam_m", ckpt.opt_m);
  append_group(entries, offset, "adam_v", ckpt.opt_v);

  std::string payload(offset, '\0');
  for (const Entry& e : entries) {
    const Tensor& t = group_of(ckpt, e.kind).at(e.name);
    std::memcpy(payload.data() + e.offset, t.data.data(), byte_size(t.shape));
  }

  json manifest = json::array();
  for (const Entry& e : entries)
    manifest.push_back({{"kind", e.kind}, {"name", e.name}, {"shape", e.shape},
                        {"offset", e.offset}});
  json header = {
      {"config", ckpt.config},
      {"iteration", ckpt.iteration},
      {"manifest", manifest},
      {"opt_step", ckpt.opt_step},
      {"payload_sha256", sha256_hex(payload.data(), payload.size())},
      {"rng_state", ckpt.rng_state},
      {"teacher_digest", ckpt.teacher_digest},
  };
  const std::string header_str = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open checkpoint for writing: " + tmp);
    out.write(kMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail("checkpoint write failed: " + path);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail("checkpoint rename failed: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 16) fail("truncated checkpoint (no header): " + path);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail("not a checkpoint file (bad magic): " + path);
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof(version));
  if (version != kCheckpointVersion)
    fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
         std::to_string(kCheckpointVersion) + "): " + path);
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, sizeof(header_len));
  if (16 + header_len > bytes.size()) fail("truncated checkpoint header: " + path);

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    fail("corrupt checkpoint header: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  std::vector<Entry> entries;
  std::string expected_digest;
  std::uint64_t manifest_end = 0;
  try {
    ckpt.config = header.at("config").get<std::map<std::string, std::string>>();
    ckpt.iteration = header.at("iteration").get<std::int64_t>();
    ckpt.opt_step = header.at("opt_step").get<std::int64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.teacher_digest = header.at("teacher_digest").get<std::string>();
    expected_digest = header.at("payload_sha256").get<std::string>();
    for (const json& j : header.at("manifest")) {
      Entry e;
      e.kind = j.at("kind").get<std::string>();
      e.name = j.at("name").get<std::string>();
      e.shape = j.at("shape").get<Shape>();
      e.offset = j.at("offset").get<std::uint64_t>();
      for (int extent : e.shape)
        if (extent <= 0) fail("corrupt checkpoint header: bad shape for " + e.name);
      entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail("corrupt checkpoint header: " + std::string(e.what()));
  }

  // the manifest must tile the payload: offsets contiguous from 0, no gaps
  // or overlaps, and the file must hold exactly that many payload bytes
  for (const Entry& e : entries) {
    if (e.offset != manifest_end)
      fail("checkpoint manifest does not tile the payload (entry " + e.name + " at offset " +
           std::to_string(e.offset) + ", expected " + std::to_string(manifest_end) + ")");
    manifest_end += byte_size(e.shape);
  }
  const std::uint64_t payload_size = bytes.size() - 16 - header_len;
  if (payload_size < manifest_end)
    fail("truncated checkpoint payload: expected " + std::to_string(manifest_end) +
         " bytes, found " + std::to_string(payload_size));
  if (payload_size > manifest_end)
    fail("checkpoint manifest does not tile the payload (" +
         std::to_string(payload_size - manifest_end) + " trailing bytes)");

  const char* payload = bytes.data() + 16 + header_len;
  if (sha256_hex(payload, payload_size) != expected_digest)
    fail("checkpoint payload digest mismatch: " + path);

  for (const Entry& e : entries) {
    Tensor t(e.shape);
    std::memcpy(t.data.data(), payload + e.offset, byte_size(e.shape));
    auto& group = group_of(ckpt, e.kind);
    if (!group.emplace(e.name, std::move(t)).second)
      fail("corrupt checkpoint header: duplicate manifest entry " + e.name);
  }
  return ckpt;
}

bool is_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0;
}

void restore_parameters(const Checkpoint& ckpt, ParameterSet& params) {
  for (Parameter& p : params.items()) {
    auto it = ckpt.params.find(p.name);
    if (it == ckpt.params.end()) fail("checkpoint missing parameter: " + p.name);
    if (!same_shape(it->second.shape, p.value.shape))
      fail("checkpoint parameter " + p.name + ": shape mismatch (checkpoint " +
           shape_str(it->second.shape) + ", model " + shape_str(p.value.shape) + ")");
    p.value.data = it->second.data;
  }
  if (ckpt.params.size() != params.size())
    for (const auto& [name, t] : ckpt.params)
      if (!params.contains(name)) fail("checkpoint has unknown parameter: " + name);
}

void save_tensor(const Tensor& t, const std::string& name, const std::string& path) {
  Checkpoint ckpt;
  ckpt.params.emplace(name, t.detached());
  save_checkpoint(ckpt, path);
}

Tensor load_tensor(const std::string& path, std::string* name) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.params.size() != 1)
    fail("expected a single-tensor container, found " + std::to_string(ckpt.params.size()) +
         " entries: " + path);
  if (name) *name = ckpt.params.begin()->first;
  return std::move(ckpt.params.begin()->second);
}

}  // namespace rac
