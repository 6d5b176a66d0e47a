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
#include <functional>

namespace advfeat {

/// Worker cap: AF_THREADS if set to a positive integer, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
/// must write only to per-index outputs so results do not depend on the
/// number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Keeps freed activation buffers in the process heap instead of handing
/// them back to the OS, which avoids page-fault storms when large tensors
/// are reallocated every step. Call once, early in main().
void retain_heap_memory();

}  // namespace advfeat
