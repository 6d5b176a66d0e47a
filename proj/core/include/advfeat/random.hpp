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

#include <cstdint>
#include <random>
#include <string_view>

namespace advfeat {

using Rng = std::mt19937_64;

/// Independent generator for a named sub-stream of `master`. Distinct names
/// (and distinct `index` values) give decorrelated streams; the same
/// (master, name, index) triple always reproduces the same stream.
Rng make_stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

/// Named sub-streams used across the engine.
namespace streams {
inline constexpr std::string_view init = "init";
inline constexpr std::string_view augmentation = "augmentation";
inline constexpr std::string_view shuffle = "shuffle";
inline constexpr std::string_view episodes = "episodes";
inline constexpr std::string_view synthesis = "synthesis";
}  // namespace streams

}  // namespace advfeat
