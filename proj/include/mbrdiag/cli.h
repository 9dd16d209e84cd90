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

#ifndef MBRDIAG_CLI_H_
#define MBRDIAG_CLI_H_

#include <iosfwd>

namespace mbrdiag {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitComputation = 2;

// Runs one subcommand: matrix, decode, oracle, diagnose, correlate, synth
// or report. Errors go to `err` as "mbrdiag: <kind> error: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mbrdiag

#endif  // MBRDIAG_CLI_H_
