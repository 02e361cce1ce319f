// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rac/tensor.hpp"

namespace rac {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk layout: magic "RACK", u32 version (LE), u64 header length (LE),
// UTF-8 JSON header, then the concatenated little-endian f32 payload. The
// header carries the config snapshot, a (name, shape, byte-offset) manifest
// that tiles the payload exactly, the frozen-teacher digest, and a SHA-256
// of the payload so any flipped byte is caught on load.
struct Checkpoint {
  std::map<std::string, std::string> config;  // flat dotted-key snapshot
  std::map<std::string, Tensor> params;       // model parameters by name
  std::map<std::string, Tensor> opt_m;        // AdamW first moments, by parameter
  std::map<std::string, Tensor> opt_v;        // AdamW second moments, by parameter
  std::int64_t opt_step = 0;                  // AdamW step count
  std::int64_t iteration = 0;                 // training iterations completed
  std::string teacher_digest;                 // hex SHA-256, empty if no teacher
  std::string rng_state;                      // serialized mt19937, empty if unused
};

// Writes atomically (temp file + rename); a failed write leaves no partial
// file behind.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Errors are distinct per failure: bad magic, unsupported version, truncated
// header/payload, payload digest mismatch, manifest that does not tile the
// payload.
Checkpoint load_checkpoint(const std::string& path);

// True if the file starts with the checkpoint magic (cheap format sniff).
bool is_checkpoint_file(const std::string& path);

// Copies checkpoint parameters into an existing set. Every set entry must be
// present with a matching shape; mismatches name the offending parameter.
void restore_parameters(const Checkpoint& ckpt, ParameterSet& params);

// Latent files reuse the container with a single manifest entry.
void save_tensor(const Tensor& t, const std::string& name, const std::string& path);
Tensor load_tensor(const std::string& path, std::string* name = nullptr);

}  // namespace rac
