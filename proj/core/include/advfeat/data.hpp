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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advfeat/random.hpp"
#include "advfeat/tensor.hpp"

namespace advfeat {

struct ClassImages {
  std::string name;
  std::vector<Tensor> images;  // each [3,S,S] in [0,1]
};

using Split = std::vector<ClassImages>;

enum class SplitKind { train, val, test };

std::string_view to_string(SplitKind s);
SplitKind parse_split(std::string_view s);

/// Train/validation/test classes. Class names never repeat across splits.
struct Dataset {
  Split train;
  Split val;
  Split test;
  std::size_t image_size = 0;

  const Split& split(SplitKind s) const;
  Split& split(SplitKind s);

  /// Throws DataError on overlapping class names, empty classes, or images
  /// that are not [3,S,S] with values in [0,1].
  void validate() const;
};

std::size_t image_count(const Split& split);

/// Reads root/{train,val,test}/<class>/<image>.{ppm,pgm,pnm}. Classes and
/// files are visited in lexicographic order; images are resized to
/// image_size x image_size by nearest neighbour. When root/manifest.txt is
/// present its per-class counts must match what was found.
Dataset load_directory(const std::filesystem::path& root, std::size_t image_size);

/// Writes the directory layout above (8-bit P6) plus manifest.txt.
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);

/// One line per class: "<split> <class> <file count>".
std::string manifest_text(const Dataset& dataset);

inline constexpr std::string_view kManifestFile = "manifest.txt";

/// Nearest-neighbour resize of a [C,H,W] image: source index = dst * src / dst_size.
Tensor resize_nearest(const Tensor& image, std::size_t size);

Tensor flip_horizontal(const Tensor& image);

/// Horizontal mirror with probability 0.5.
Tensor augment_flip(const Tensor& image, Rng& rng);

/// Copies [3,S,S] images into one [B,3,S,S] batch.
Tensor stack_images(std::span<const Tensor* const> images);

}  // namespace advfeat
