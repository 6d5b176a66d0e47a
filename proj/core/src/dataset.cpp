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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "advfeat/data.hpp"
#include "advfeat/netpbm.hpp"

namespace fs = std::filesystem;

namespace advfeat {

std::string_view to_string(SplitKind s) {
  switch (s) {
    case SplitKind::train:
      return "train";
    case SplitKind::val:
      return "val";
    case SplitKind::test:
      return "test";
  }
  return "train";
}

SplitKind parse_split(std::string_view s) {
  if (s == "train") return SplitKind::train;
  if (s == "val") return SplitKind::val;
  if (s == "test") return SplitKind::test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

const Split& Dataset::split(SplitKind s) const {
  switch (s) {
    case SplitKind::train:
      return train;
    case SplitKind::val:
      return val;
    case SplitKind::test:
      return test;
  }
  return train;
}

Split& Dataset::split(SplitKind s) { return const_cast<Split&>(std::as_const(*this).split(s)); }

namespace {

constexpr SplitKind kSplits[] = {SplitKind::train, SplitKind::val, SplitKind::test};

}  // namespace

void Dataset::validate() const {
  std::map<std::string, SplitKind> owner;
  for (SplitKind s : kSplits) {
    for (const auto& cls : split(s)) {
      auto [it, inserted] = owner.emplace(cls.name, s);
      if (!inserted) {
        throw DataError("class '" + cls.name + "' appears in both " + std::string(to_string(it->second)) + " and " +
                        std::string(to_string(s)) + " splits");
      }
      if (cls.images.empty()) throw DataError("class '" + cls.name + "' has no images");
      for (const auto& img : cls.images) {
        if (!(img.shape() == Shape{3, image_size, image_size})) {
          throw DataError("class '" + cls.name + "' has an image of shape " + img.shape().to_string());
        }
        for (float v : img.data()) {
          if (!(v >= 0.0f && v <= 1.0f)) throw DataError("class '" + cls.name + "' has pixel values outside [0,1]");
        }
      }
    }
  }
}

std::size_t image_count(const Split& split) {
  std::size_t n = 0;
  for (const auto& c : split) n += c.images.size();
  return n;
}

Tensor resize_nearest(const Tensor& image, std::size_t size) {
  if (image.rank() != 3) throw ShapeError("resize_nearest expects [C,H,W]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == size && w == size) return image;
  Tensor out(Shape{c, size, size});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < size; ++y) {
      const std::size_t sy = y * h / size;
      for (std::size_t x = 0; x < size; ++x) out.at(ch, y, x) = image.at(ch, sy, x * w / size);
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("flip_horizontal expects [C,H,W]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = image.at(ch, y, w - 1 - x);
    }
  }
  return out;
}

Tensor augment_flip(const Tensor& image, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? flip_horizontal(image) : image;
}

Tensor stack_images(std::span<const Tensor* const> images) {
  if (images.empty()) throw ShapeError("stack_images: empty batch");
  const Shape inner = images.front()->shape();
  std::vector<std::size_t> dims{images.size()};
  dims.insert(dims.end(), inner.dims().begin(), inner.dims().end());
  Tensor out{Shape(dims)};
  const std::size_t n = inner.numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i]->shape() == inner)) throw ShapeError("stack_images: inconsistent image shapes");
    std::copy(images[i]->data().begin(), images[i]->data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return out;
}

std::string manifest_text(const Dataset& dataset) {
  std::ostringstream os;
  for (SplitKind s : kSplits) {
    std::vector<const ClassImages*> sorted;
    for (const auto& cls : dataset.split(s)) sorted.push_back(&cls);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
    for (const auto* cls : sorted) os << to_string(s) << ' ' << cls->name << ' ' << cls->images.size() << '\n';
  }
  return os.str();
}

namespace {

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : (entry.is_regular_file() && is_image_file(entry.path()))) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Dataset load_directory(const fs::path& root, std::size_t image_size) {
  if (image_size == 0) throw std::invalid_argument("image size must be positive");
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  Dataset ds;
  ds.image_size = image_size;
  for (SplitKind s : kSplits) {
    const fs::path split_dir = root / std::string(to_string(s));
    if (!fs::is_directory(split_dir)) throw DataError("missing split directory " + split_dir.string());
    for (const auto& class_dir : sorted_entries(split_dir, true)) {
      ClassImages cls{class_dir.filename().string(), {}};
      for (const auto& file : sorted_entries(class_dir, false)) {
        Tensor img = pnm_to_tensor(read_pnm(file));
        if (img.dim(0) == 1) {
          Tensor rgb(Shape{3, img.dim(1), img.dim(2)});
          const std::size_t hw = img.dim(1) * img.dim(2);
          for (std::size_t c = 0; c < 3; ++c) std::copy_n(img.data().begin(), hw, rgb.data().begin() + c * hw);
          img = std::move(rgb);
        }
        cls.images.push_back(resize_nearest(img, image_size));
      }
      if (cls.images.empty()) throw DataError("class directory " + class_dir.string() + " contains no images");
      ds.split(s).push_back(std::move(cls));
    }
  }
  ds.validate();

  const fs::path manifest = root / std::string(kManifestFile);
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::stringstream expected;
    expected << in.rdbuf();
    if (expected.str() != manifest_text(ds)) {
      throw DataError("dataset contents do not match " + manifest.string());
    }
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  dataset.validate();
  for (SplitKind s : kSplits) {
    const fs::path split_dir = root / std::string(to_string(s));
    fs::create_directories(split_dir);
    for (const auto& cls : dataset.split(s)) {
      const fs::path class_dir = split_dir / cls.name;
      fs::create_directories(class_dir);
      for (std::size_t i = 0; i < cls.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.ppm", i);
        write_pnm(class_dir / name, tensor_to_pnm(cls.images[i]));
      }
    }
  }
  std::ofstream out(root / std::string(kManifestFile), std::ios::binary);
  if (!out) throw DataError("cannot write manifest under " + root.string());
  out << manifest_text(dataset);
}

}  // namespace advfeat
