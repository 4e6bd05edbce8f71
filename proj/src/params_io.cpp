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
#include "relugrad/params_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "relugrad/error.hpp"

namespace relugrad {

using nlohmann::json;

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

namespace {

template <typename Row>
void append_row(std::string& out, const Row& row) {
  out += '[';
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += format_double(row[i]);
  }
  out += ']';
}

void append_matrix(std::string& out, const Matrix& m) {
  out += '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out += ',';
    append_row(out, m.row(r));
  }
  out += ']';
}

std::size_t as_size(const json& v, const char* what) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorKind::MalformedFile, fmt::format("'{}' must be a non-negative integer", what));
  }
  return v.get<std::size_t>();
}

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) fail(ErrorKind::MalformedFile, fmt::format("missing field '{}'", name));
  return *it;
}

Vector read_vector(const json& v, const char* what) {
  if (!v.is_array()) fail(ErrorKind::MalformedFile, fmt::format("'{}' must be an array", what));
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      fail(ErrorKind::MalformedFile, fmt::format("'{}' contains a non-number", what));
    }
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

Matrix read_matrix(const json& v, std::size_t rows, std::size_t cols, const std::string& what) {
  if (!v.is_array()) fail(ErrorKind::MalformedFile, what + " must be an array of rows");
  require(v.size() == rows, ErrorKind::ShapeMismatch,
          fmt::format("{} has {} rows, expected {}", what, v.size(), rows));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector row = read_vector(v[r], what.c_str());
    require(static_cast<std::size_t>(row.size()) == cols, ErrorKind::ShapeMismatch,
            fmt::format("{} row {} has {} entries, expected {}", what, r + 1, row.size(), cols));
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace

std::string params_to_json(const NetworkParams& params) {
  params.validate();
  const auto& arch = params.arch;
  std::string out = "{\"dims\":[";
  out += std::to_string(arch.input_dim);
  for (auto w : arch.hidden_widths) out += "," + std::to_string(w);
  out += "],\"outputs\":" + std::to_string(arch.output_count);
  out += ",\"weights\":[";
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    if (l) out += ',';
    append_matrix(out, params.weights[l]);
  }
  out += "],\"biases\":[";
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    if (l) out += ',';
    append_row(out, params.biases[l]);
  }
  out += "],\"beta0\":";
  append_row(out, params.output_bias);
  out += ",\"beta\":";
  append_matrix(out, params.output_weights);
  out += "}\n";
  return out;
}

NetworkParams params_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::MalformedFile, std::string("weight file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::MalformedFile, "weight file must hold a JSON object");

  const json& dims = field(doc, "dims");
  if (!dims.is_array() || dims.size() < 2) {
    fail(ErrorKind::MalformedFile, "'dims' must list the input dimension and >= 1 hidden width");
  }
  ArchSpec arch;
  arch.input_dim = as_size(dims[0], "dims");
  for (std::size_t i = 1; i < dims.size(); ++i) arch.hidden_widths.push_back(as_size(dims[i], "dims"));
  arch.output_count = as_size(field(doc, "outputs"), "outputs");
  try {
    arch.validate();
  } catch (const Error& e) {
    fail(ErrorKind::MalformedFile, e.what());
  }

  const json& weights = field(doc, "weights");
  const json& biases = field(doc, "biases");
  if (!weights.is_array() || !biases.is_array()) {
    fail(ErrorKind::MalformedFile, "'weights' and 'biases' must be arrays");
  }
  require(weights.size() == arch.depth() && biases.size() == arch.depth(),
          ErrorKind::ShapeMismatch,
          fmt::format("'dims' declares {} hidden layers but weights/biases hold {}/{}",
                      arch.depth(), weights.size(), biases.size()));

  NetworkParams p;
  p.arch = arch;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    p.weights.push_back(read_matrix(weights[l], arch.width(l), arch.fan_in(l),
                                    fmt::format("weights[{}]", l)));
    Vector b = read_vector(biases[l], "biases");
    require(static_cast<std::size_t>(b.size()) == arch.width(l), ErrorKind::ShapeMismatch,
            fmt::format("biases[{}] has length {}, expected {}", l, b.size(), arch.width(l)));
    p.biases.push_back(std::move(b));
  }
  p.output_bias = read_vector(field(doc, "beta0"), "beta0");
  require(static_cast<std::size_t>(p.output_bias.size()) == arch.output_count,
          ErrorKind::ShapeMismatch,
          fmt::format("'beta0' has length {}, expected {}", p.output_bias.size(), arch.output_count));
  p.output_weights =
      read_matrix(field(doc, "beta"), arch.output_count, arch.hidden_widths.back(), "beta");
  p.validate();
  return p;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), ErrorKind::Io, fmt::format("error reading '{}'", path.string()));
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io,
          fmt::format("cannot open '{}' for writing", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorKind::Io, fmt::format("error writing '{}'", path.string()));
}

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  write_text_file(path, params_to_json(params));
}

NetworkParams load_params(const std::filesystem::path& path) {
  return params_from_json(read_text_file(path));
}

}  // namespace relugrad
