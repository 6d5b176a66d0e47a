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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advfeat/data.hpp"
#include "advfeat/random.hpp"
#include "advfeat/tensor.hpp"

namespace advfeat {

// Procedural stand-in for an ImageNet-style few-shot benchmark. A class is a
// (shape, colour, texture) triple; instances vary in position, scale,
// rotation, background and pixel noise.

enum class SynthShape { circle, square, triangle, cross, ring, diamond };
enum class SynthTexture { solid, stripes, checker, dots };

inline constexpr std::size_t kSynthShapes = 6;
inline constexpr std::size_t kSynthColors = 6;
inline constexpr std::size_t kSynthTextures = 4;

struct SynthClass {
  SynthShape shape;
  std::size_t color;  // index into the palette
  SynthTexture texture;

  std::string name() const;
  friend bool operator==(const SynthClass&, const SynthClass&) = default;
};

struct SynthSpec {
  std::size_t n_train = 8;
  std::size_t n_val = 3;
  std::size_t n_test = 5;
  std::size_t images_per_class = 100;
  std::size_t image_size = 64;
  std::uint64_t seed = 7;
  // Object radius as a fraction of the image size.
  double min_scale = 0.22;
  double max_scale = 0.36;
  double background_noise = 0.06;
  double pixel_noise = 0.04;
};

/// Where and how large the object is drawn; centre in [0,1] image units,
/// radius as a fraction of the image size, rotation in radians.
struct Placement {
  double cx = 0.5;
  double cy = 0.5;
  double radius = 0.3;
  double rotation = 0.0;
};

struct SynthSample {
  Tensor image;        // [3,S,S], values k/255
  Tensor object_mask;  // [S,S], 1 inside the object, 0 elsewhere
};

/// Classes for each split, drawn without replacement from the full
/// attribute grid; throws DataError when the grid is exhausted.
struct SynthClasses {
  std::vector<SynthClass> train, val, test;
};
SynthClasses assign_synth_classes(const SynthSpec& spec);

Placement random_placement(const SynthSpec& spec, Rng& rng);

SynthSample render_synthetic(const SynthClass& cls, const Placement& where, const SynthSpec& spec, Rng& rng);

Dataset generate_synthetic(const SynthSpec& spec);

}  // namespace advfeat
