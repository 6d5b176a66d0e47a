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

#include <stdexcept>
#include <string>

namespace advfeat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or observed, or a run that diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, malformed or inconsistent dataset input.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Binary file with bad magic, version or truncated content.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace advfeat
