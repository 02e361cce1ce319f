// SPDX-License-Identifier: Apache-2.0
#include "rac/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace rac {

ImageKind image_kind_from_string(std::string_view name) {
  if (name == "gradient") return ImageKind::Gradient;
  if (name == "checkerboard") return ImageKind::Checkerboard;
  if (name == "blobs") return ImageKind::Blobs;
  if (name == "sinusoid") return ImageKind::Sinusoid;
  fail("unknown image kind: " + std::string(name));
}

std::string to_string(ImageKind kind) {
  switch (kind) {
    case ImageKind::Gradient: return "gradient";
    case ImageKind::Checkerboard: return "checkerboard";
    case ImageKind::Blobs: return "blobs";
    case ImageKind::Sinusoid: return "sinusoid";
  }
  fail("unknown image kind enum value");
}

void DatasetSpec::validate() const {
  if (count < 1) fail("dataset count must be >= 1");
  if (resolution < 2) fail("dataset resolution must be >= 2");
  if (source == Source::Synthetic && kinds.empty()) fail("dataset kinds must be non-empty");
  if (source == Source::PpmDir && ppm_dir.empty()) fail("dataset ppm_dir not set");
}

namespace {

float& at(Tensor& img, int c, int i, int j) {
  const int R = img.shape[1];
  return img.data[(c * R + i) * img.shape[2] + j];
}

// Linear ramp hitting 0 exactly at one edge and ~1 (per-channel scale in
// [0.85, 1]) at the other, along a random axis/direction.
Tensor gen_gradient(int R, std::mt19937& rng) {
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  const bool horizontal = (rng() & 1u) != 0;
  const bool flipped = (rng() & 1u) != 0;
  float chan_scale[3];
  for (float& s : chan_scale) s = 0.85f + 0.15f * u01(rng);

  Tensor img(Shape{3, R, R});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j) {
        const int a = horizontal ? j : i;
        const float pos = static_cast<float>(flipped ? (R - 1 - a) : a) / static_cast<float>(R - 1);
        at(img, c, i, j) = pos * chan_scale[c];
      }
  return img;
}

// Two values per channel with at least 0.3 contrast; cell size a power of
// two no larger than R/2.
Tensor gen_checkerboard(int R, std::mt19937& rng) {
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  std::vector<int> cells;
  for (int c = 2; c * 2 <= R; c *= 2) cells.push_back(c);
  if (cells.empty()) cells.push_back(1);
  const int cell = cells[rng() % cells.size()];

  float lo[3], hi[3];
  for (int c = 0; c < 3; ++c) {
    lo[c] = 0.7f * u01(rng);
    hi[c] = lo[c] + 0.3f + (1.0f - lo[c] - 0.3f) * u01(rng);
  }
  Tensor img(Shape{3, R, R});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j)
        at(img, c, i, j) = ((i / cell + j / cell) % 2 == 0) ? lo[c] : hi[c];
  return img;
}

// A few Gaussian bumps over a dark base, clamped to [0,1].
Tensor gen_blobs(int R, std::mt19937& rng) {
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  const int n = 2 + static_cast<int>(rng() % 3u);
  struct Bump {
    float ci, cj, inv2r2, amp[3];
  };
  std::vector<Bump> bumps(static_cast<std::size_t>(n));
  for (Bump& b : bumps) {
    b.ci = u01(rng) * static_cast<float>(R - 1);
    b.cj = u01(rng) * static_cast<float>(R - 1);
    const float r = (0.125f + 0.125f * u01(rng)) * static_cast<float>(R);
    b.inv2r2 = 1.0f / (2.0f * r * r);
    for (float& a : b.amp) a = 0.3f + 0.7f * u01(rng);
  }
  Tensor img(Shape{3, R, R}, 0.1f);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j) {
        float v = 0.1f;
        for (const Bump& b : bumps) {
          const float di = static_cast<float>(i) - b.ci;
          const float dj = static_cast<float>(j) - b.cj;
          v += b.amp[c] * std::exp(-(di * di + dj * dj) * b.inv2r2);
        }
        at(img, c, i, j) = std::clamp(v, 0.0f, 1.0f);
      }
  return img;
}

// Plane waves with per-channel phase, range within [0.05, 0.95].
Tensor gen_sinusoid(int R, std::mt19937& rng) {
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  const float fi = static_cast<float>(1 + rng() % 3u);
  const float fj = static_cast<float>(1 + rng() % 3u);
  float phase[3];
  for (float& p : phase) p = 6.2831853f * u01(rng);

  Tensor img(Shape{3, R, R});
  const float w = 6.2831853f / static_cast<float>(R);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j)
        at(img, c, i, j) =
            0.5f + 0.45f * std::sin(w * (fi * static_cast<float>(i) + fj * static_cast<float>(j)) +
                                    phase[c]);
  return img;
}

}  // namespace

std::vector<Tensor> gen_synthetic_batch(const DatasetSpec& spec, int index) {
  spec.validate();
  std::mt19937 rng = make_rng(spec.seed, "synthetic-batch-" + std::to_string(index));
  std::vector<Tensor> batch;
  batch.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    const ImageKind kind = spec.kinds[static_cast<std::size_t>(i) % spec.kinds.size()];
    switch (kind) {
      case ImageKind::Gradient: batch.push_back(gen_gradient(spec.resolution, rng)); break;
      case ImageKind::Checkerboard: batch.push_back(gen_checkerboard(spec.resolution, rng)); break;
      case ImageKind::Blobs: batch.push_back(gen_blobs(spec.resolution, rng)); break;
      case ImageKind::Sinusoid: batch.push_back(gen_sinusoid(spec.resolution, rng)); break;
    }
  }
  return batch;
}

namespace {

// One PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int parse_dim(const std::string& tok, const char* what) {
  int v = 0;
  try {
    v = std::stoi(tok);
  } catch (const std::exception&) {
    fail(std::string("bad PPM ") + what + ": '" + tok + "'");
  }
  if (v <= 0) fail(std::string("bad PPM ") + what + ": '" + tok + "'");
  return v;
}

}  // namespace

Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open image: " + path);
  const std::string magic = next_token(in);
  if (magic != "P6") fail("not a binary PPM (expected magic P6, got '" + magic + "'): " + path);
  const int W = parse_dim(next_token(in), "width");
  const int H = parse_dim(next_token(in), "height");
  const int maxval = parse_dim(next_token(in), "maxval");
  if (maxval != 255) fail("unsupported PPM maxval " + std::to_string(maxval) + " (expected 255): " + path);

  std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    fail("truncated PPM payload (expected " + std::to_string(raw.size()) + " bytes, found " +
         std::to_string(in.gcount()) + "): " + path);

  Tensor img(Shape{3, H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c)
        img.data[(c * H + i) * W + j] =
            static_cast<float>(raw[(static_cast<std::size_t>(i) * W + j) * 3 + c]) / 255.0f;
  return img;
}

void save_ppm(const std::string& path, const Tensor& image) {
  if (image.shape.size() != 3 || image.shape[0] != 3)
    fail("save_ppm: expected a 3xHxW image, got " + shape_str(image.shape));
  const int H = image.shape[1], W = image.shape[2];

  std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 3);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.data[(c * H + i) * W + j], 0.0f, 1.0f);
        raw[(static_cast<std::size_t>(i) * W + j) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open image for writing: " + path);
  out << "P6\n" << W << " " << H << "\n255\n";
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail("image write failed: " + path);
}

std::vector<Tensor> load_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.source == DatasetSpec::Source::Synthetic) return gen_synthetic_batch(spec, 0);

  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(spec.ppm_dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      paths.push_back(entry.path().string());
  if (ec) fail("cannot read image directory: " + spec.ppm_dir);
  if (paths.empty()) fail("no .ppm images in directory: " + spec.ppm_dir);
  std::sort(paths.begin(), paths.end());

  std::vector<Tensor> images;
  for (const std::string& p : paths) {
    Tensor img = load_ppm(p);
    if (img.shape[1] != spec.resolution || img.shape[2] != spec.resolution)
      fail("image " + p + " is " + shape_str(img.shape) + ", expected resolution " +
           std::to_string(spec.resolution));
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace rac
