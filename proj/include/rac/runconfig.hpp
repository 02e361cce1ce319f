// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>

#include "rac/data.hpp"
#include "rac/field.hpp"
#include "rac/teacher.hpp"
#include "rac/trainer.hpp"

namespace rac {

// Merged view of every module's configuration. Dimensions shared between
// modules (state channels, latent geometry, resolution, pad value, seed)
// live in exactly one canonical home and are propagated by finalize(), so
// a config file can never state them inconsistently.
struct RunConfig {
  std::uint64_t seed = 0;
  StateSpec state;                 // C_s, C, f, pad_value canonical; H/W derived
  FieldConfig field;               // C_s derived
  TeacherConfig teacher;           // C, f, pad_value derived
  TeacherPretrainConfig pretrain;  // seed derived
  TrainConfig train;               // resolution, seed derived
  DatasetSpec data;                // resolution canonical; seed derived

  // Copies the canonical fields into their derived homes and validates
  // every sub-config.
  void finalize();
};

// All recognized dotted keys, sorted.
std::vector<std::string> config_keys();

// Canonical key -> value echo of a config (floats via %.9g, so a map round
// trip reproduces every 32-bit value exactly).
std::map<std::string, std::string> config_to_map(const RunConfig& cfg);

// Applies `values` onto `cfg` (not yet finalized). Unknown keys and
// malformed values are errors naming the key.
void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& values);

// Defaults + apply_config + finalize.
RunConfig config_from_map(const std::map<std::string, std::string>& values);

// Flat `key = value` UTF-8 file; full-line # comments and blank lines
// allowed; duplicate keys rejected.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// `key = value` lines in sorted key order — the effective-config echo.
std::string render_config(const std::map<std::string, std::string>& values);

// Overlays `overrides` onto `base` (command-line flags over file values).
void merge_config(std::map<std::string, std::string>& base,
                  const std::map<std::string, std::string>& overrides);

}  // namespace rac
