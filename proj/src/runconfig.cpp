// SPDX-License-Identifier: Apache-2.0
#include "rac/runconfig.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace rac {

namespace {

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

float parse_float(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const float v = std::strtof(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    fail("config key " + key + ": bad float '" + value + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    fail("config key " + key + ": bad integer '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0' || value[0] == '-')
    fail("config key " + key + ": bad unsigned integer '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail("config key " + key + ": bad bool '" + value + "' (want true/false)");
}

// One dotted key bound to a field of RunConfig.
struct KeyBinding {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<KeyBinding> make_bindings() {
  std::vector<KeyBinding> b;
  auto field_of = [&](const std::string& key, auto getter, auto setter) {
    b.push_back({key, getter, setter});
  };

  field_of("seed", [](const RunConfig& c) { return std::to_string(c.seed); },
           [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); });

  // state geometry (canonical home of all shared dimensions)
  field_of("state.C_s",
           [](const RunConfig& c) { return std::to_string(c.state.C_s); },
           [](RunConfig& c, const std::string& v) {
             c.state.C_s = static_cast<int>(parse_int("state.C_s", v));
           });
  field_of("state.C",
           [](const RunConfig& c) { return std::to_string(c.state.C); },
           [](RunConfig& c, const std::string& v) {
             c.state.C = static_cast<int>(parse_int("state.C", v));
           });
  field_of("state.f",
           [](const RunConfig& c) { return std::to_string(c.state.f); },
           [](RunConfig& c, const std::string& v) {
             c.state.f = static_cast<int>(parse_int("state.f", v));
           });
  field_of("state.pad_value",
           [](const RunConfig& c) { return format_float(c.state.pad_value); },
           [](RunConfig& c, const std::string& v) {
             c.state.pad_value = parse_float("state.pad_value", v);
           });

  // velocity field
  field_of("field.width",
           [](const RunConfig& c) { return std::to_string(c.field.width); },
           [](RunConfig& c, const std::string& v) {
             c.field.width = static_cast<int>(parse_int("field.width", v));
           });
  field_of("field.depth",
           [](const RunConfig& c) { return std::to_string(c.field.depth); },
           [](RunConfig& c, const std::string& v) {
             c.field.depth = static_cast<int>(parse_int("field.depth", v));
           });
  field_of("field.down_factor",
           [](const RunConfig& c) { return std::to_string(c.field.down_factor); },
           [](RunConfig& c, const std::string& v) {
             c.field.down_factor = static_cast<int>(parse_int("field.down_factor", v));
           });
  field_of("field.use_pos_enc",
           [](const RunConfig& c) { return c.field.use_pos_enc ? "true" : "false"; },
           [](RunConfig& c, const std::string& v) {
             c.field.use_pos_enc = parse_bool("field.use_pos_enc", v);
           });
  field_of("field.zero_init_head",
           [](const RunConfig& c) { return c.field.zero_init_head ? "true" : "false"; },
           [](RunConfig& c, const std::string& v) {
             c.field.zero_init_head = parse_bool("field.zero_init_head", v);
           });

  // teacher
  field_of("teacher.mode",
           [](const RunConfig& c) {
             return c.teacher.mode == TeacherMode::Analytic ? "analytic" : "learned";
           },
           [](RunConfig& c, const std::string& v) {
             if (v == "analytic")
               c.teacher.mode = TeacherMode::Analytic;
             else if (v == "learned")
               c.teacher.mode = TeacherMode::Learned;
             else
               fail("config key teacher.mode: unknown mode '" + v + "'");
           });
  field_of("teacher.hidden",
           [](const RunConfig& c) { return std::to_string(c.teacher.hidden); },
           [](RunConfig& c, const std::string& v) {
             c.teacher.hidden = static_cast<int>(parse_int("teacher.hidden", v));
           });
  field_of("teacher.kl_weight",
           [](const RunConfig& c) { return format_float(c.teacher.kl_weight); },
           [](RunConfig& c, const std::string& v) {
             c.teacher.kl_weight = parse_float("teacher.kl_weight", v);
           });

  // teacher pretraining
  field_of("pretrain.iterations",
           [](const RunConfig& c) { return std::to_string(c.pretrain.iterations); },
           [](RunConfig& c, const std::string& v) {
             c.pretrain.iterations = static_cast<int>(parse_int("pretrain.iterations", v));
           });
  field_of("pretrain.batch_size",
           [](const RunConfig& c) { return std::to_string(c.pretrain.batch_size); },
           [](RunConfig& c, const std::string& v) {
             c.pretrain.batch_size = static_cast<int>(parse_int("pretrain.batch_size", v));
           });
  field_of("pretrain.lr",
           [](const RunConfig& c) { return format_float(c.pretrain.lr); },
           [](RunConfig& c, const std::string& v) {
             c.pretrain.lr = parse_float("pretrain.lr", v);
           });
  field_of("pretrain.weight_decay",
           [](const RunConfig& c) { return format_float(c.pretrain.weight_decay); },
           [](RunConfig& c, const std::string& v) {
             c.pretrain.weight_decay = parse_float("pretrain.weight_decay", v);
           });

  // optimizer + loop
  field_of("train.lr", [](const RunConfig& c) { return format_float(c.train.lr); },
           [](RunConfig& c, const std::string& v) { c.train.lr = parse_float("train.lr", v); });
  field_of("train.beta1", [](const RunConfig& c) { return format_float(c.train.beta1); },
           [](RunConfig& c, const std::string& v) {
             c.train.beta1 = parse_float("train.beta1", v);
           });
  field_of("train.beta2", [](const RunConfig& c) { return format_float(c.train.beta2); },
           [](RunConfig& c, const std::string& v) {
             c.train.beta2 = parse_float("train.beta2", v);
           });
  field_of("train.weight_decay",
           [](const RunConfig& c) { return format_float(c.train.weight_decay); },
           [](RunConfig& c, const std::string& v) {
             c.train.weight_decay = parse_float("train.weight_decay", v);
           });
  field_of("train.K",
           [](const RunConfig& c) { return std::to_string(c.train.K); },
           [](RunConfig& c, const std::string& v) {
             c.train.K = static_cast<int>(parse_int("train.K", v));
           });
  field_of("train.noise_sigma",
           [](const RunConfig& c) { return format_float(c.train.noise_sigma); },
           [](RunConfig& c, const std::string& v) {
             c.train.noise_sigma = parse_float("train.noise_sigma", v);
           });
  field_of("train.random_grid",
           [](const RunConfig& c) { return c.train.random_grid ? "true" : "false"; },
           [](RunConfig& c, const std::string& v) {
             c.train.random_grid = parse_bool("train.random_grid", v);
           });
  field_of("train.batch_size",
           [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
           [](RunConfig& c, const std::string& v) {
             c.train.batch_size = static_cast<int>(parse_int("train.batch_size", v));
           });
  field_of("train.iterations",
           [](const RunConfig& c) { return std::to_string(c.train.iterations); },
           [](RunConfig& c, const std::string& v) {
             c.train.iterations = static_cast<int>(parse_int("train.iterations", v));
           });
  field_of("train.eval_every",
           [](const RunConfig& c) { return std::to_string(c.train.eval_every); },
           [](RunConfig& c, const std::string& v) {
             c.train.eval_every = static_cast<int>(parse_int("train.eval_every", v));
           });
  field_of("train.checkpoint_every",
           [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); },
           [](RunConfig& c, const std::string& v) {
             c.train.checkpoint_every = static_cast<int>(parse_int("train.checkpoint_every", v));
           });
  field_of("train.rt_detach_inner",
           [](const RunConfig& c) { return c.train.rt_detach_inner ? "true" : "false"; },
           [](RunConfig& c, const std::string& v) {
             c.train.rt_detach_inner = parse_bool("train.rt_detach_inner", v);
           });
  field_of("train.down_mode",
           [](const RunConfig& c) {
             return c.train.down_mode == DownMode::AvgPool ? "avg_pool" : "learned";
           },
           [](RunConfig& c, const std::string& v) {
             if (v == "avg_pool")
               c.train.down_mode = DownMode::AvgPool;
             else if (v == "learned")
               c.train.down_mode = DownMode::Learned;
             else
               fail("config key train.down_mode: unknown mode '" + v + "'");
           });

  // loss weights (recon is the fixed unit reference)
  field_of("loss.path", [](const RunConfig& c) { return format_float(c.train.weights.path); },
           [](RunConfig& c, const std::string& v) {
             c.train.weights.path = parse_float("loss.path", v);
           });
  field_of("loss.latent",
           [](const RunConfig& c) { return format_float(c.train.weights.latent); },
           [](RunConfig& c, const std::string& v) {
             c.train.weights.latent = parse_float("loss.latent", v);
           });
  field_of("loss.pixel", [](const RunConfig& c) { return format_float(c.train.weights.pixel); },
           [](RunConfig& c, const std::string& v) {
             c.train.weights.pixel = parse_float("loss.pixel", v);
           });
  field_of("loss.rt", [](const RunConfig& c) { return format_float(c.train.weights.rt); },
           [](RunConfig& c, const std::string& v) {
             c.train.weights.rt = parse_float("loss.rt", v);
           });
  field_of("loss.mv", [](const RunConfig& c) { return format_float(c.train.weights.mv); },
           [](RunConfig& c, const std::string& v) {
             c.train.weights.mv = parse_float("loss.mv", v);
           });

  // dataset
  field_of("data.source",
           [](const RunConfig& c) {
             return c.data.source == DatasetSpec::Source::Synthetic ? "synthetic" : "ppm_dir";
           },
           [](RunConfig& c, const std::string& v) {
             if (v == "synthetic")
               c.data.source = DatasetSpec::Source::Synthetic;
             else if (v == "ppm_dir")
               c.data.source = DatasetSpec::Source::PpmDir;
             else
               fail("config key data.source: unknown source '" + v + "'");
           });
  field_of("data.kinds",
           [](const RunConfig& c) {
             std::string out;
             for (std::size_t i = 0; i < c.data.kinds.size(); ++i) {
               if (i) out += ",";
               out += to_string(c.data.kinds[i]);
             }
             return out;
           },
           [](RunConfig& c, const std::string& v) {
             std::vector<ImageKind> kinds;
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) kinds.push_back(image_kind_from_string(item));
             if (kinds.empty()) fail("config key data.kinds: empty kind list");
             c.data.kinds = std::move(kinds);
           });
  field_of("data.count",
           [](const RunConfig& c) { return std::to_string(c.data.count); },
           [](RunConfig& c, const std::string& v) {
             c.data.count = static_cast<int>(parse_int("data.count", v));
           });
  field_of("data.resolution",
           [](const RunConfig& c) { return std::to_string(c.data.resolution); },
           [](RunConfig& c, const std::string& v) {
             c.data.resolution = static_cast<int>(parse_int("data.resolution", v));
           });
  field_of("data.ppm_dir", [](const RunConfig& c) { return c.data.ppm_dir; },
           [](RunConfig& c, const std::string& v) { c.data.ppm_dir = v; });

  std::sort(b.begin(), b.end(),
            [](const KeyBinding& x, const KeyBinding& y) { return x.key < y.key; });
  return b;
}

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> b = make_bindings();
  return b;
}

const KeyBinding* find_binding(const std::string& key) {
  const auto& b = bindings();
  const auto it = std::lower_bound(
      b.begin(), b.end(), key,
      [](const KeyBinding& kb, const std::string& k) { return kb.key < k; });
  return (it != b.end() && it->key == key) ? &*it : nullptr;
}

std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

}  // namespace

void RunConfig::finalize() {
  state.H = data.resolution;
  state.W = data.resolution;
  field.C_s = state.C_s;
  teacher.C = state.C;
  teacher.f = state.f;
  teacher.pad_value = state.pad_value;
  train.resolution = data.resolution;
  train.seed = seed;
  pretrain.seed = seed;
  data.seed = seed;

  state.validate();
  field.validate();
  train.validate();
  train.weights.validate();
  data.validate();
  if (data.resolution % field.down_factor != 0)
    fail("config: data.resolution " + std::to_string(data.resolution) +
         " not divisible by field.down_factor " + std::to_string(field.down_factor));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  keys.reserve(bindings().size());
  for (const KeyBinding& kb : bindings()) keys.push_back(kb.key);
  return keys;
}

std::map<std::string, std::string> config_to_map(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const KeyBinding& kb : bindings()) out.emplace(kb.key, kb.get(cfg));
  return out;
}

void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const KeyBinding* kb = find_binding(key);
    if (!kb) fail("unknown config key: " + key);
    kb->set(cfg, value);
  }
}

RunConfig config_from_map(const std::map<std::string, std::string>& values) {
  RunConfig cfg;
  apply_config(cfg, values);
  cfg.finalize();
  return cfg;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      fail("config file " + path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      fail("config file " + path + ":" + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second)
      fail("config file " + path + ":" + std::to_string(lineno) + ": duplicate key " + key);
  }
  return out;
}

std::string render_config(const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& [key, value] : values) out += key + " = " + value + "\n";
  return out;
}

void merge_config(std::map<std::string, std::string>& base,
                  const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) base[key] = value;
}

}  // namespace rac
