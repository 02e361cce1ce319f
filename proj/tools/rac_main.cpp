// SPDX-License-Identifier: Apache-2.0
//
// rac — rectified-flow autocoder pipeline driver.
//
// One executable, eight subcommands: teacher-pretrain, train, decode,
// encode, roundtrip, sweep, pca, gradcheck. Every subcommand assembles its
// effective configuration from (defaults <- checkpoint snapshot <- --config
// file <- --set/--seed flags) and echoes it before doing any work.
//
// Exit codes: 0 success, 1 error, 2 unwritable output directory,
// 3 unreadable/corrupt checkpoint.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "rac/checkpoint.hpp"
#include "rac/data.hpp"
#include "rac/eval.hpp"
#include "rac/gradcheck.hpp"
#include "rac/runconfig.hpp"
#include "rac/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace rac;

constexpr int kExitError = 1;
constexpr int kExitOutDir = 2;
constexpr int kExitCheckpoint = 3;

// Thrown where the contract demands a specific process exit code.
struct ExitWith {
  int code;
  std::string message;
};

// Flags shared by every subcommand.
struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "flat key = value configuration file");
  cmd->add_option("--set", args.sets, "override one config key, e.g. --set train.lr=0.001")
      ->expected(-1);
  cmd->add_option_function<std::uint64_t>(
          "--seed", [&args](std::uint64_t v) { args.seed = v; },
          "top-level seed; all randomness derives from it")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

std::map<std::string, std::string> flag_overrides(const CommonArgs& args) {
  std::map<std::string, std::string> out;
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      fail("--set expects KEY=VALUE, got '" + kv + "'");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (args.seed) out["seed"] = std::to_string(*args.seed);
  return out;
}

// defaults <- base (checkpoint snapshot) <- config file <- flags
RunConfig effective_config(const CommonArgs& args,
                           const std::map<std::string, std::string>& base = {}) {
  std::map<std::string, std::string> merged = base;
  if (!args.config_file.empty()) merge_config(merged, parse_config_file(args.config_file));
  merge_config(merged, flag_overrides(args));
  return config_from_map(merged);
}

void echo_config(const RunConfig& cfg) {
  std::cout << render_config(config_to_map(cfg)) << "\n";
}

// Creates out_dir if needed and proves it is writable.
void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path probe = fs::path(out_dir) / ".write_probe";
  std::ofstream test(probe);
  if (ec || !test) throw ExitWith{kExitOutDir, "output directory not writable: " + out_dir};
  test.close();
  fs::remove(probe, ec);
}

Checkpoint load_checkpoint_strict(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw ExitWith{kExitCheckpoint, e.what()};
  }
}

// Teacher per the config; learned mode restores weights from --teacher.
TeacherModel make_teacher(const RunConfig& cfg, const std::string& teacher_file) {
  if (cfg.teacher.mode == TeacherMode::Analytic) return TeacherModel::analytic(cfg.teacher);
  if (teacher_file.empty())
    fail("teacher.mode = learned requires --teacher <pretrained .rack file>");
  const Checkpoint ckpt = load_checkpoint_strict(teacher_file);
  TeacherModel teacher = TeacherModel::learned_init(cfg.teacher, cfg.seed);
  restore_parameters(ckpt, teacher.params());
  teacher.freeze();
  return teacher;
}

// Rebuilds the trained field (and its spec) from a checkpoint.
struct LoadedModel {
  RunConfig cfg;
  VelocityField field;
  TeacherModel teacher;
};

LoadedModel load_model(const std::string& ckpt_path, const CommonArgs& args,
                       const std::string& teacher_file) {
  const Checkpoint ckpt = load_checkpoint_strict(ckpt_path);
  RunConfig cfg = effective_config(args, ckpt.config);
  VelocityField field(cfg.field, cfg.seed);
  if (cfg.train.down_mode == DownMode::Learned && !field.params().contains("projector.kernel"))
    field.params().adopt(make_projector(cfg.state));
  restore_parameters(ckpt, field.params());
  TeacherModel teacher = make_teacher(cfg, teacher_file);
  if (!ckpt.teacher_digest.empty() && ckpt.teacher_digest != teacher.digest())
    fail("teacher digest mismatch: checkpoint was trained against a different teacher");
  return LoadedModel{std::move(cfg), std::move(field), std::move(teacher)};
}

std::vector<int> parse_steps_list(const std::string& text) {
  std::vector<int> steps;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0' || v < 1)
      fail("--steps expects a comma list of positive integers, got '" + text + "'");
    steps.push_back(static_cast<int>(v));
  }
  if (steps.empty()) fail("--steps list is empty");
  return steps;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot write: " + path);
  out << body;
  if (!out) fail("write failed: " + path);
}

int cmd_train(const CommonArgs& args, const std::string& out_dir,
              const std::string& teacher_file, const std::string& resume_file) {
  RunConfig cfg = effective_config(args);
  echo_config(cfg);
  ensure_out_dir(out_dir);
  write_text_file(out_dir + "/config.cfg", render_config(config_to_map(cfg)));

  const std::vector<Tensor> images = load_dataset(cfg.data);
  TeacherModel teacher = make_teacher(cfg, teacher_file);
  VelocityField field(cfg.field, cfg.seed);
  Trainer trainer(cfg.train, cfg.state, teacher, field, config_to_map(cfg));
  if (!resume_file.empty()) trainer.restore(load_checkpoint_strict(resume_file));

  const TrainRunResult res = trainer.train_loop(images, out_dir);
  if (!res.reports.empty())
    std::cout << "final total loss " << res.reports.back().total << " after "
              << trainer.iteration() << " iterations\n";
  std::cout << "checkpoint: " << out_dir << "/ckpt_final.rack\n";
  return 0;
}

int cmd_teacher_pretrain(const CommonArgs& args, const std::string& out_dir) {
  RunConfig cfg = effective_config(args);
  echo_config(cfg);
  if (cfg.teacher.mode != TeacherMode::Learned)
    fail("teacher-pretrain requires teacher.mode = learned (--set teacher.mode=learned)");
  ensure_out_dir(out_dir);
  write_text_file(out_dir + "/config.cfg", render_config(config_to_map(cfg)));

  const std::vector<Tensor> images = load_dataset(cfg.data);
  std::ofstream log(out_dir + "/teacher_log.csv", std::ios::trunc);
  if (!log) fail("cannot write: " + out_dir + "/teacher_log.csv");
  TeacherModel teacher = teacher_pretrain(images, cfg.teacher, cfg.pretrain, &log);

  Checkpoint ckpt;
  ckpt.config = config_to_map(cfg);
  for (const Parameter& p : teacher.params().items()) ckpt.params.emplace(p.name, p.value);
  ckpt.teacher_digest = teacher.digest();
  save_checkpoint(ckpt, out_dir + "/teacher.rack");
  std::cout << "teacher: " << out_dir << "/teacher.rack (digest " << teacher.digest() << ")\n";
  return 0;
}

int cmd_decode(const CommonArgs& args, const std::string& ckpt_path, const std::string& input,
               const std::string& out_file, const std::string& teacher_file, int steps) {
  LoadedModel m = load_model(ckpt_path, args, teacher_file);
  echo_config(m.cfg);
  IntegrationOptions options;
  options.K = steps > 0 ? steps : m.cfg.train.K;

  Tensor z;
  std::optional<Tensor> source;  // original image, when given one
  if (is_checkpoint_file(input)) {
    z = load_tensor(input);
  } else {
    source = load_ppm(input);
    z = m.teacher.encode(normalize_image(*source));
  }
  const DecodeResult res = decode(m.field, m.cfg.state, z, options);
  save_ppm(out_file, res.image);
  std::cout << "decoded " << shape_str(res.image.shape) << " -> " << out_file << " (K "
            << options.K << ")\n";
  if (source) {
    const Metrics metrics = compute_metrics(res.image, *source);
    std::cout << "mse " << metrics.mse << " psnr " << metrics.psnr << "\n";
  }
  return 0;
}

int cmd_encode(const CommonArgs& args, const std::string& ckpt_path, const std::string& input,
               const std::string& out_file, const std::string& teacher_file, int steps) {
  LoadedModel m = load_model(ckpt_path, args, teacher_file);
  echo_config(m.cfg);
  IntegrationOptions options;
  options.K = steps > 0 ? steps : m.cfg.train.K;

  const Tensor x = load_ppm(input);
  const ParameterSet* proj =
      m.cfg.train.down_mode == DownMode::Learned ? &m.field.params() : nullptr;
  const EncodeResult res =
      encode(m.field, m.cfg.state, x, options, m.cfg.train.down_mode, proj);
  save_tensor(res.latent, "latent", out_file);
  std::cout << "encoded " << shape_str(x.shape) << " -> latent " << shape_str(res.latent.shape)
            << " at " << out_file << " (K " << options.K << ")\n";
  return 0;
}

int cmd_roundtrip(const CommonArgs& args, const std::string& ckpt_path,
                  const std::string& teacher_file, int steps) {
  LoadedModel m = load_model(ckpt_path, args, teacher_file);
  echo_config(m.cfg);
  const int K = steps > 0 ? steps : m.cfg.train.K;
  const std::vector<Tensor> images = load_dataset(m.cfg.data);
  const double rel = roundtrip_eval(m.field, m.cfg.state, images, K);
  std::cout << "roundtrip_rel_err " << rel << " over " << images.size() << " images (K " << K
            << ")\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& ckpt_path,
              const std::string& teacher_file, const std::string& steps_text,
              const std::string& out_file) {
  LoadedModel m = load_model(ckpt_path, args, teacher_file);
  echo_config(m.cfg);
  const std::vector<int> steps = parse_steps_list(steps_text);
  const std::vector<Tensor> images = load_dataset(m.cfg.data);
  const std::string csv = sweep_csv(step_sweep(m.field, m.teacher, m.cfg.state, images, steps));
  if (out_file.empty())
    std::cout << csv;
  else
    write_text_file(out_file, csv);
  return 0;
}

int cmd_pca(const CommonArgs& args, const std::string& ckpt_path,
            const std::string& teacher_file, int positions, int steps, int image_index,
            bool all_images, const std::string& out_file) {
  LoadedModel m = load_model(ckpt_path, args, teacher_file);
  echo_config(m.cfg);
  const int K = steps > 0 ? steps : m.cfg.train.K;
  std::vector<Tensor> images = load_dataset(m.cfg.data);
  if (!all_images) {
    if (image_index < 0 || image_index >= static_cast<int>(images.size()))
      fail("--image-index out of range (dataset has " + std::to_string(images.size()) +
           " images)");
    images = {images[static_cast<std::size_t>(image_index)]};
  }
  const PcaExport e =
      pca_trajectories(m.field, m.teacher, m.cfg.state, images, K, positions, m.cfg.seed);
  std::cout << "explained";
  for (float r : e.explained) std::cout << " " << r;
  std::cout << "\n";
  const std::string csv = pca_csv(e);
  if (out_file.empty())
    std::cout << csv;
  else
    write_text_file(out_file, csv);
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  RunConfig cfg = effective_config(args);
  echo_config(cfg);
  const std::vector<GradCheckCase> cases = gradcheck_suite(cfg.seed);
  bool all_pass = true;
  for (const GradCheckCase& c : cases) {
    std::cout << (c.pass ? "[ok]   " : "[FAIL] ") << c.name << " rel_err " << c.rel_err
              << " (tol " << c.tolerance << ")\n";
    all_pass = all_pass && c.pass;
  }
  std::cout << (all_pass ? "gradcheck passed" : "gradcheck FAILED") << " (" << cases.size()
            << " cases)\n";
  return all_pass ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rectified-flow autocoder pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string out_dir, out_file, ckpt_path, input, teacher_file, resume_file;
  std::string steps_text = "1,2,4,8,16";
  int steps = 0;  // 0 = take train.K from the config
  int positions = 16;
  int image_index = 0;
  bool all_images = false;

  CLI::App* train = app.add_subcommand("train", "train the velocity field");
  add_common_flags(train, common);
  train->add_option("--out", out_dir, "output directory (created if missing)")->required();
  train->add_option("--teacher", teacher_file, "pretrained teacher .rack (learned mode)");
  train->add_option("--resume", resume_file, "checkpoint to resume from");

  CLI::App* pretrain = app.add_subcommand("teacher-pretrain", "pretrain the learned teacher");
  add_common_flags(pretrain, common);
  pretrain->add_option("--out", out_dir, "output directory (created if missing)")->required();

  CLI::App* decode_cmd = app.add_subcommand("decode", "latent or image -> decoded PPM");
  add_common_flags(decode_cmd, common);
  decode_cmd->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  decode_cmd->add_option("--input", input, "latent .rack or image .ppm (sniffed)")->required();
  decode_cmd->add_option("--out", out_file, "output PPM path")->required();
  decode_cmd->add_option("--teacher", teacher_file, "pretrained teacher .rack (learned mode)");
  decode_cmd->add_option("--steps", steps, "Euler steps (default train.K)");

  CLI::App* encode_cmd = app.add_subcommand("encode", "image -> latent via time reversal");
  add_common_flags(encode_cmd, common);
  encode_cmd->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  encode_cmd->add_option("--input", input, "image .ppm")->required();
  encode_cmd->add_option("--out", out_file, "output latent .rack path")->required();
  encode_cmd->add_option("--teacher", teacher_file, "pretrained teacher .rack (learned mode)");
  encode_cmd->add_option("--steps", steps, "Euler steps (default train.K)");

  CLI::App* roundtrip = app.add_subcommand("roundtrip", "state round-trip relative error");
  add_common_flags(roundtrip, common);
  roundtrip->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  roundtrip->add_option("--teacher", teacher_file, "pretrained teacher .rack (learned mode)");
  roundtrip->add_option("--steps", steps, "Euler steps (default train.K)");

  CLI::App* sweep = app.add_subcommand("sweep", "reconstruction quality vs decode steps");
  add_common_flags(sweep, common);
  sweep->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  sweep->add_option("--teacher", teacher_file, "pretrained teacher .rack (learned mode)");
  sweep->add_option("--steps", steps_text, "comma list of step counts (default 1,2,4,8,16)");
  sweep->add_option("--out", out_file, "CSV path (default stdout)");

  CLI::App* pca = app.add_subcommand("pca", "decode-trajectory PCA export");
  add_common_flags(pca, common);
  pca->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  pca->add_option("--teacher", teacher_file, "pretrained teacher .rack (learned mode)");
  pca->add_option("--positions", positions, "sampled spatial sites per image (default 16)");
  pca->add_option("--steps", steps, "Euler steps (default train.K)");
  pca->add_option("--image-index", image_index, "which dataset image (default 0)");
  pca->add_flag("--all-images", all_images, "fit one PCA over the whole dataset");
  pca->add_option("--out", out_file, "CSV path (default stdout)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient self-check");
  add_common_flags(gradcheck, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(common, out_dir, teacher_file, resume_file);
    if (pretrain->parsed()) return cmd_teacher_pretrain(common, out_dir);
    if (decode_cmd->parsed())
      return cmd_decode(common, ckpt_path, input, out_file, teacher_file, steps);
    if (encode_cmd->parsed())
      return cmd_encode(common, ckpt_path, input, out_file, teacher_file, steps);
    if (roundtrip->parsed()) return cmd_roundtrip(common, ckpt_path, teacher_file, steps);
    if (sweep->parsed()) return cmd_sweep(common, ckpt_path, teacher_file, steps_text, out_file);
    if (pca->parsed())
      return cmd_pca(common, ckpt_path, teacher_file, positions, steps, image_index, all_images,
                     out_file);
    if (gradcheck->parsed()) return cmd_gradcheck(common);
  } catch (const ExitWith& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;  // unreachable: require_subcommand guarantees one branch
}
