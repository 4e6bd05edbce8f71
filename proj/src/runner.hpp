/*
 * Copyright 2026 The relugrad Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// JSON-configured command runner shared by the C API and the CLI.
//
// Every command takes a flat JSON object. Missing keys take the command's
// defaults, unknown keys are rejected, and the whole configuration is
// validated before any computation starts. The result carries a summary JSON
// (with the fully resolved config, enough to replay the run) and a list of
// named text artifacts such as CSV tables.

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace relugrad {

struct CommandResult {
  nlohmann::json summary;
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, contents
};

std::vector<std::string> command_names();

/// Defaults merged with `config`, with unknown keys and bad types rejected.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& config);

CommandResult run_command(const std::string& command, const nlohmann::json& config);

const char* library_version();

}  // namespace relugrad
