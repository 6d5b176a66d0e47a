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

#include "advfeat/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace advfeat {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
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
  if (tok.empty()) throw DataError("netpbm: truncated header");
  return tok;
}

std::size_t header_number(std::istream& in, const char* what) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw DataError(std::string("netpbm: bad ") + what + " '" + tok + "'");
  }
  return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace

PnmImage read_pnm(std::istream& in) {
  const std::string magic = header_token(in);
  PnmImage img;
  if (magic == "P6") {
    img.channels = 3;
  } else if (magic == "P5") {
    img.channels = 1;
  } else {
    throw DataError("netpbm: unsupported magic '" + magic + "' (expected P5 or P6)");
  }
  img.width = header_number(in, "width");
  img.height = header_number(in, "height");
  const std::size_t maxval = header_number(in, "maxval");
  if (img.width == 0 || img.height == 0) throw DataError("netpbm: zero image size");
  if (maxval == 0 || maxval > 65535) throw DataError("netpbm: maxval out of range");
  img.maxval = static_cast<std::uint32_t>(maxval);
  // header_token consumed exactly one whitespace byte after maxval.

  const std::size_t n = img.width * img.height * img.channels;
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(n * bytes_per);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DataError("netpbm: truncated pixel data");
  }
  img.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t v = bytes_per == 1 ? raw[i] : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    if (v > maxval) throw DataError("netpbm: sample exceeds maxval");
    img.samples[i] = v;
  }
  return img;
}

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  try {
    return read_pnm(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pnm(std::ostream& out, const PnmImage& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("netpbm: channels must be 1 or 3");
  if (image.samples.size() != image.width * image.height * image.channels) {
    throw DataError("netpbm: sample count does not match dimensions");
  }
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << '\n'
      << image.maxval << '\n';
  if (image.maxval < 256) {
    std::vector<char> raw(image.samples.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<char>(image.samples[i]);
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<char> raw(image.samples.size() * 2);
    for (std::size_t i = 0; i < image.samples.size(); ++i) {
      raw[2 * i] = static_cast<char>(image.samples[i] >> 8);
      raw[2 * i + 1] = static_cast<char>(image.samples[i] & 0xff);
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  }
}

void write_pnm(const std::filesystem::path& path, const PnmImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path.string());
  write_pnm(out, image);
  if (!out) throw DataError("failed writing image " + path.string());
}

Tensor pnm_to_tensor(const PnmImage& image) {
  const std::size_t hw = image.width * image.height;
  Tensor t(Shape{image.channels, image.height, image.width});
  const auto maxval = static_cast<float>(image.maxval);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      t[c * hw + p] = static_cast<float>(image.samples[p * image.channels + c]) / maxval;
    }
  }
  return t;
}

PnmImage tensor_to_pnm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("tensor_to_pnm expects [1|3,H,W], got " + image.shape().to_string());
  }
  PnmImage img;
  img.channels = image.dim(0);
  img.height = image.dim(1);
  img.width = image.dim(2);
  img.maxval = 255;
  const std::size_t hw = img.width * img.height;
  img.samples.resize(hw * img.channels);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < img.channels; ++c) {
      const float v = std::clamp(image[c * hw + p], 0.0f, 1.0f);
      img.samples[p * img.channels + c] = static_cast<std::uint16_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

}  // namespace advfeat
