/*
 * Copyright 2026 The advfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "advfeat/tensor.hpp"

namespace advfeat {

/// Binary netpbm raster: P5 (grey, 1 channel) or P6 (RGB, 3 channels),
/// samples interleaved row-major. maxval <= 255 uses one byte per sample,
/// larger maxval two big-endian bytes.
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> samples;
};

PnmImage read_pnm(std::istream& in);
PnmImage read_pnm(const std::filesystem::path& path);
void write_pnm(std::ostream& out, const PnmImage& image);
void write_pnm(const std::filesystem::path& path, const PnmImage& image);

/// [C,H,W] tensor with values sample / maxval.
Tensor pnm_to_tensor(const PnmImage& image);
/// Quantizes [C,H,W] values in [0,1] to 8 bits (round to nearest, clamped).
PnmImage tensor_to_pnm(const Tensor& image);

}  // namespace advfeat
