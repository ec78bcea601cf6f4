// Copyright 2026 The SMT Authors.
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

#pragma once

#include <iosfwd>

namespace smt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

inline constexpr const char* kResolvedConfigFile = "resolved_config.json";

/// Entry point of the `smt` executable. Diagnostics go to `err`; `describe`
/// prints the checkpoint header to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace smt::cli
