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

#include "advfeat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace advfeat {

namespace {

constexpr const char* kShapeNames[kSynthShapes] = {"circle", "square", "triangle", "cross", "ring", "diamond"};
constexpr const char* kColorNames[kSynthColors] = {"red", "green", "blue", "yellow", "magenta", "cyan"};
constexpr const char* kTextureNames[kSynthTextures] = {"solid", "stripes", "checker", "dots"};

constexpr std::array<std::array<double, 3>, kSynthColors> kPalette = {{
    {0.90, 0.15, 0.15},
    {0.15, 0.80, 0.20},
    {0.20, 0.30, 0.95},
    {0.95, 0.90, 0.20},
    {0.85, 0.20, 0.85},
    {0.20, 0.85, 0.90},
}};

// (u, v) are object-local coordinates, radius-normalized.
bool inside(SynthShape shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape) {
    case SynthShape::circle:
      return u * u + v * v <= 1.0;
    case SynthShape::square:
      return std::max(au, av) <= 0.8;
    case SynthShape::triangle:
      return v <= 0.6 && v >= -0.9 && au <= 0.9 * (v + 0.9) / 1.5;
    case SynthShape::cross:
      return (au <= 0.3 && av <= 0.95) || (av <= 0.3 && au <= 0.95);
    case SynthShape::ring: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case SynthShape::diamond:
      return au + av <= 1.0;
  }
  return false;
}

// 1 for the base colour, < 1 where the texture darkens it.
double texture_gain(SynthTexture texture, double u, double v) {
  constexpr double kPeriod = 0.4;
  switch (texture) {
    case SynthTexture::solid:
      return 1.0;
    case SynthTexture::stripes:
      return static_cast<long>(std::floor(u / kPeriod)) % 2 == 0 ? 1.0 : 0.4;
    case SynthTexture::checker:
      return (static_cast<long>(std::floor(u / kPeriod)) + static_cast<long>(std::floor(v / kPeriod))) % 2 == 0 ? 1.0
                                                                                                                 : 0.4;
    case SynthTexture::dots: {
      const double pu = u / kPeriod - std::round(u / kPeriod);
      const double pv = v / kPeriod - std::round(v / kPeriod);
      return pu * pu + pv * pv <= 0.09 ? 0.3 : 1.0;
    }
  }
  return 1.0;
}

float quantize(double v) {
  const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<float>(q) / 255.0f;
}

}  // namespace

std::string SynthClass::name() const {
  return std::string(kShapeNames[static_cast<std::size_t>(shape)]) + "-" + kColorNames[color] + "-" +
         kTextureNames[static_cast<std::size_t>(texture)];
}

SynthClasses assign_synth_classes(const SynthSpec& spec) {
  const std::size_t total = kSynthShapes * kSynthColors * kSynthTextures;
  const std::size_t wanted = spec.n_train + spec.n_val + spec.n_test;
  if (wanted > total) {
    throw DataError("synthetic generator has " + std::to_string(total) + " attribute combinations, " +
                    std::to_string(wanted) + " classes requested");
  }
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng rng = make_stream(spec.seed, streams::synthesis, 0);
  std::shuffle(order.begin(), order.end(), rng);

  auto decode = [](std::size_t code) {
    return SynthClass{static_cast<SynthShape>(code / (kSynthColors * kSynthTextures)),
                      (code / kSynthTextures) % kSynthColors, static_cast<SynthTexture>(code % kSynthTextures)};
  };
  SynthClasses out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < spec.n_train; ++i) out.train.push_back(decode(order[next++]));
  for (std::size_t i = 0; i < spec.n_val; ++i) out.val.push_back(decode(order[next++]));
  for (std::size_t i = 0; i < spec.n_test; ++i) out.test.push_back(decode(order[next++]));
  return out;
}

Placement random_placement(const SynthSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Placement p;
  p.radius = spec.min_scale + (spec.max_scale - spec.min_scale) * unit(rng);
  p.cx = p.radius + (1.0 - 2.0 * p.radius) * unit(rng);
  p.cy = p.radius + (1.0 - 2.0 * p.radius) * unit(rng);
  p.rotation = 2.0 * std::numbers::pi * unit(rng);
  return p;
}

SynthSample render_synthetic(const SynthClass& cls, const Placement& where, const SynthSpec& spec, Rng& rng) {
  const std::size_t s = spec.image_size;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<double, 3> background{};
  for (double& b : background) b = 0.15 + 0.3 * unit(rng);
  // Low-frequency background shading so the background is not constant.
  const double gx = (unit(rng) - 0.5) * 0.2, gy = (unit(rng) - 0.5) * 0.2;

  const auto& color = kPalette[cls.color];
  const double cos_r = std::cos(where.rotation), sin_r = std::sin(where.rotation);
  const double radius_px = where.radius * static_cast<double>(s);

  SynthSample out{Tensor(Shape{3, s, s}), Tensor(Shape{s, s})};
  const std::size_t hw = s * s;
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(s);
      const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(s);
      const double dx = (static_cast<double>(x) + 0.5 - where.cx * static_cast<double>(s)) / radius_px;
      const double dy = (static_cast<double>(y) + 0.5 - where.cy * static_cast<double>(s)) / radius_px;
      const double u = cos_r * dx + sin_r * dy;
      const double v = -sin_r * dx + cos_r * dy;
      const bool obj = inside(cls.shape, u, v);
      const double gain = obj ? texture_gain(cls.texture, u, v) : 0.0;
      out.object_mask[y * s + x] = obj ? 1.0f : 0.0f;
      const double shade = gx * (fx - 0.5) + gy * (fy - 0.5);
      for (std::size_t c = 0; c < 3; ++c) {
        double value;
        if (obj) {
          value = color[c] * gain + spec.pixel_noise * (2.0 * unit(rng) - 1.0);
        } else {
          value = background[c] + shade + spec.background_noise * (2.0 * unit(rng) - 1.0);
        }
        out.image[c * hw + y * s + x] = quantize(value);
      }
    }
  }
  return out;
}

Dataset generate_synthetic(const SynthSpec& spec) {
  if (spec.image_size == 0 || spec.images_per_class == 0) throw DataError("synthetic spec needs positive sizes");
  const SynthClasses classes = assign_synth_classes(spec);
  Dataset ds;
  ds.image_size = spec.image_size;
  std::uint64_t class_stream = 1;
  auto fill = [&](const std::vector<SynthClass>& list, Split& split) {
    for (const SynthClass& cls : list) {
      Rng rng = make_stream(spec.seed, streams::synthesis, class_stream++);
      ClassImages ci{cls.name(), {}};
      ci.images.reserve(spec.images_per_class);
      for (std::size_t i = 0; i < spec.images_per_class; ++i) {
        const Placement where = random_placement(spec, rng);
        ci.images.push_back(render_synthetic(cls, where, spec, rng).image);
      }
      split.push_back(std::move(ci));
    }
  };
  fill(classes.train, ds.train);
  fill(classes.val, ds.val);
  fill(classes.test, ds.test);
  // Same class order as load_directory, so labels survive a disk round trip.
  for (Split* split : {&ds.train, &ds.val, &ds.test}) {
    std::sort(split->begin(), split->end(), [](const ClassImages& a, const ClassImages& b) { return a.name < b.name; });
  }
  ds.validate();
  return ds;
}

}  // namespace advfeat
