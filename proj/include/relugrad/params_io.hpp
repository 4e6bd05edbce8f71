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

// Weight file:
//   {"dims": [p, n1, ..., nL], "outputs": K,
//    "weights": [[[...row per destination node...]] per layer],
//    "biases": [[...] per layer], "beta0": [K values], "beta": [[nL values] per output]}
// Numbers are written with 17 significant digits.

#include <filesystem>
#include <string>
#include <string_view>

#include "relugrad/network.hpp"

namespace relugrad {

std::string params_to_json(const NetworkParams& params);
NetworkParams params_from_json(std::string_view text);

void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);

/// "%.17g"
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace relugrad
