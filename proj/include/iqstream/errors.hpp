// include/iqstream/errors.hpp

// Copyright 2026 The iqstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IQSTREAM_ERRORS_HPP_
#define IQSTREAM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace iqstream {

// Error taxonomy used across the library. Everything derives from Error so
// the CLI can catch one type and map it to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/vector dimensions do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// A caller-supplied value violates a precondition.
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& msg)
      : Error("argument error: " + msg) {}
};

// Filesystem-level failure; message names the file.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

// A file exists but its contents are not what the format requires.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg)
      : Error("format error: " + msg) {}
};

// Optimization failure (divergence, non-finite gradients).
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg)
      : Error("training error: " + msg) {}
};

// A numeric result left the valid domain (NaN/inf loss).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg)
      : Error("numeric error: " + msg) {}
};

}  // namespace iqstream

#endif  // IQSTREAM_ERRORS_HPP_
