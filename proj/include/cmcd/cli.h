// Copyright 2026 The CMCD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CMCD_CLI_H_
#define CMCD_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cmcd {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Environment variable naming a default --config path.
inline constexpr const char* kConfigEnvVar = "CMCD_CONFIG";

// Entry point for `cmcd <subcommand> [flags]`. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cmcd

#endif  // CMCD_CLI_H_
