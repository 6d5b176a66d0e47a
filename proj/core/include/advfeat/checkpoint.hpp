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

#include <filesystem>
#include <iosfwd>

#include "advfeat/training.hpp"

namespace advfeat {

// Checkpoint layout (little-endian):
//   "AFCK" | u32 version | str preset | str variant | u32 epoch | u64 step
//   | u32 n | n tensor records (parameters, then BN running statistics)
//   | str optimizer kind | u32 m | m tensor records (optimizer moments)
// where str is a u32 length followed by UTF-8 bytes.

inline constexpr char kCheckpointMagic[4] = {'A', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainingState& state, std::ostream& out);
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);

/// Rebuilds a state from the file alone.
TrainingState load_checkpoint(std::istream& in);
TrainingState load_checkpoint(const std::filesystem::path& path);

/// Loads into an existing state; throws ShapeError on preset, variant or
/// tensor shape mismatch and FormatError on bad magic/version/truncation.
void load_checkpoint_into(TrainingState& state, std::istream& in);
void load_checkpoint_into(TrainingState& state, const std::filesystem::path& path);

}  // namespace advfeat
