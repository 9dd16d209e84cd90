// Copyright 2026 The mbrdiag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MBRDIAG_ERROR_H_
#define MBRDIAG_ERROR_H_

#include <stdexcept>
#include <string>

namespace mbrdiag {

// Malformed inputs, bad arguments, inconsistent files. Maps to CLI exit 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerically undefined or degenerate computations. Maps to CLI exit 2.
class ComputationError : public std::runtime_error {
 public:
  explicit ComputationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mbrdiag

#endif  // MBRDIAG_ERROR_H_
