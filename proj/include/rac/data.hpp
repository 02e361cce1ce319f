// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rac/tensor.hpp"

namespace rac {

enum class ImageKind { Gradient, Checkerboard, Blobs, Sinusoid };

ImageKind image_kind_from_string(std::string_view name);
std::string to_string(ImageKind kind);

struct DatasetSpec {
  enum class Source { Synthetic, PpmDir };

  Source source = Source::Synthetic;
  std::vector<ImageKind> kinds = {ImageKind::Gradient, ImageKind::Checkerboard, ImageKind::Blobs,
                                  ImageKind::Sinusoid};
  int count = 8;
  int resolution = 32;
  std::uint64_t seed = 0;
  std::string ppm_dir;  // used when source == PpmDir

  void validate() const;
};

// `count` procedural 3 x R x R images in [0,1], cycling through the spec's
// kinds. (seed, index) fully determines the batch.
std::vector<Tensor> gen_synthetic_batch(const DatasetSpec& spec, int index);

// Binary PPM ("P6", maxval 255). load maps byte b to b/255; save clamps to
// [0,1] and rounds to the nearest byte, so save -> load -> save is
// byte-stable and a round trip moves a channel by at most 1/510.
Tensor load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Tensor& image);

// Synthetic: batch 0 of the spec. PpmDir: every *.ppm in the directory in
// filename order, each required to match the spec resolution.
std::vector<Tensor> load_dataset(const DatasetSpec& spec);

}  // namespace rac
