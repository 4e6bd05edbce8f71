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
#include "relugrad/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "relugrad/error.hpp"

namespace relugrad {

// ---------------------------------------------------------------------------
// ArchSpec / ParamDistribution

std::size_t ArchSpec::hidden_node_count() const noexcept {
  std::size_t total = 0;
  for (auto w : hidden_widths) total += w;
  return total;
}

std::size_t ArchSpec::parameter_count() const noexcept {
  std::size_t total = 0;
  for (std::size_t l = 0; l < depth(); ++l) total += hidden_widths[l] * (fan_in(l) + 1);
  if (depth() > 0) total += output_count * (hidden_widths.back() + 1);
  return total;
}

std::size_t ArchSpec::narrowest_layer() const {
  require(depth() > 0, ErrorKind::InvalidArgument, "architecture has no hidden layers");
  std::size_t best = 0;
  for (std::size_t l = 1; l < depth(); ++l) {
    if (hidden_widths[l] <= hidden_widths[best]) best = l;
  }
  return best;
}

void ArchSpec::validate() const {
  require(input_dim >= 1, ErrorKind::InvalidArgument, "input dimension must be >= 1");
  require(!hidden_widths.empty(), ErrorKind::InvalidArgument, "at least one hidden layer is required");
  for (std::size_t l = 0; l < hidden_widths.size(); ++l) {
    require(hidden_widths[l] >= 1, ErrorKind::InvalidArgument,
            fmt::format("hidden layer {} has width 0", l + 1));
  }
  require(output_count >= 1, ErrorKind::InvalidArgument, "output count must be >= 1");
}

void ParamDistribution::validate() const {
  require(std::isfinite(bound) && bound > 0.0, ErrorKind::InvalidArgument,
          "distribution bound must be positive and finite");
  if (kind == DistKind::TruncatedGaussian) {
    require(std::isfinite(variance) && variance > 0.0, ErrorKind::InvalidArgument,
            "gaussian variance must be positive and finite");
  }
}

double ParamDistribution::sample(Rng& rng) const {
  if (kind == DistKind::Uniform) return bound * (2.0 * rng.uniform01() - 1.0);
  const double sd = std::sqrt(variance);
  for (;;) {
    const double v = sd * rng.standard_normal();
    if (std::abs(v) <= bound) return v;
  }
}

// ---------------------------------------------------------------------------
// NetworkParams

NetworkParams NetworkParams::zeros(const ArchSpec& arch) {
  arch.validate();
  NetworkParams p;
  p.arch = arch;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    p.weights.push_back(Matrix::Zero(static_cast<Eigen::Index>(arch.width(l)),
                                     static_cast<Eigen::Index>(arch.fan_in(l))));
    p.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(arch.width(l))));
  }
  p.output_bias = Vector::Zero(static_cast<Eigen::Index>(arch.output_count));
  p.output_weights = Matrix::Zero(static_cast<Eigen::Index>(arch.output_count),
                                  static_cast<Eigen::Index>(arch.hidden_widths.back()));
  return p;
}

void NetworkParams::validate() const {
  arch.validate();
  const auto L = arch.depth();
  require(weights.size() == L && biases.size() == L, ErrorKind::ShapeMismatch,
          fmt::format("expected {} weight and bias layers, got {} and {}", L, weights.size(),
                      biases.size()));
  for (std::size_t l = 0; l < L; ++l) {
    const auto rows = static_cast<Eigen::Index>(arch.width(l));
    const auto cols = static_cast<Eigen::Index>(arch.fan_in(l));
    require(weights[l].rows() == rows && weights[l].cols() == cols, ErrorKind::ShapeMismatch,
            fmt::format("layer {} weights are {}x{}, expected {}x{}", l + 1, weights[l].rows(),
                        weights[l].cols(), rows, cols));
    require(biases[l].size() == rows, ErrorKind::ShapeMismatch,
            fmt::format("layer {} bias has length {}, expected {}", l + 1, biases[l].size(), rows));
    require(weights[l].allFinite() && biases[l].allFinite(), ErrorKind::InvalidArgument,
            fmt::format("layer {} has non-finite parameters", l + 1));
  }
  const auto K = static_cast<Eigen::Index>(arch.output_count);
  require(output_bias.size() == K, ErrorKind::ShapeMismatch,
          fmt::format("output bias has length {}, expected {}", output_bias.size(), K));
  require(output_weights.rows() == K &&
              output_weights.cols() == static_cast<Eigen::Index>(arch.hidden_widths.back()),
          ErrorKind::ShapeMismatch,
          fmt::format("output weights are {}x{}, expected {}x{}", output_weights.rows(),
                      output_weights.cols(), K, arch.hidden_widths.back()));
  require(output_bias.allFinite() && output_weights.allFinite(), ErrorKind::InvalidArgument,
          "output layer has non-finite parameters");
}

bool NetworkParams::operator==(const NetworkParams& other) const {
  if (!(arch == other.arch) || weights.size() != other.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return output_bias == other.output_bias && output_weights == other.output_weights;
}

NetworkParams generate_params(const ArchSpec& arch, const ParamDistribution& dist,
                              std::uint64_t seed) {
  arch.validate();
  dist.validate();
  NetworkParams p = NetworkParams::zeros(arch);
  Rng rng(seed);
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    auto& w = p.weights[l];
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      for (Eigen::Index k = 0; k < w.cols(); ++k) w(j, k) = dist.sample(rng);
      p.biases[l][j] = dist.sample(rng);
    }
  }
  for (Eigen::Index k = 0; k < p.output_weights.rows(); ++k) {
    for (Eigen::Index j = 0; j < p.output_weights.cols(); ++j) {
      p.output_weights(k, j) = dist.sample(rng);
    }
    p.output_bias[k] = dist.sample(rng);
  }
  return p;
}

Readout make_readout(const NetworkParams& params, const OutputSelector& selector) {
  const auto K = params.arch.output_count;
  require(selector.output < K, ErrorKind::InvalidArgument,
          fmt::format("output index {} out of range (K = {})", selector.output, K));
  const auto k = static_cast<Eigen::Index>(selector.output);
  Readout r{params.output_weights.row(k).transpose(), params.output_bias[k]};
  if (selector.minus) {
    require(*selector.minus < K, ErrorKind::InvalidArgument,
            fmt::format("output index {} out of range (K = {})", *selector.minus, K));
    const auto m = static_cast<Eigen::Index>(*selector.minus);
    r.weights -= params.output_weights.row(m).transpose();
    r.bias -= params.output_bias[m];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Forward evaluation

ForwardState forward(const NetworkParams& params, const Vector& x) {
  const auto& arch = params.arch;
  require(x.size() == static_cast<Eigen::Index>(arch.input_dim), ErrorKind::ShapeMismatch,
          fmt::format("input has dimension {}, network expects {}", x.size(), arch.input_dim));
  ForwardState s;
  s.input = x;
  s.preactivations.reserve(arch.depth());
  s.activations.reserve(arch.depth());
  const Vector* h = &s.input;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    s.preactivations.push_back(params.biases[l] + params.weights[l] * (*h));
    s.activations.push_back(s.preactivations.back().cwiseMax(0.0));
    h = &s.activations.back();
  }
  s.output = params.output_bias + params.output_weights * (*h);
  return s;
}

ForwardState forward(const NetworkParams& params, std::span<const double> x) {
  Vector v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
  return forward(params, v);
}

double evaluate(const NetworkParams& params, const Vector& x, const Readout& readout) {
  require(x.size() == static_cast<Eigen::Index>(params.arch.input_dim), ErrorKind::ShapeMismatch,
          fmt::format("input has dimension {}, network expects {}", x.size(),
                      params.arch.input_dim));
  Vector h = x;
  for (std::size_t l = 0; l < params.arch.depth(); ++l) {
    h = (params.biases[l] + params.weights[l] * h).cwiseMax(0.0);
  }
  return readout.bias + readout.weights.dot(h);
}

// ---------------------------------------------------------------------------
// ActivationPattern

ActivationPattern::ActivationPattern(const ArchSpec& arch)
    : ActivationPattern(std::span<const std::size_t>(arch.hidden_widths)) {}

ActivationPattern::ActivationPattern(std::span<const std::size_t> widths) {
  offsets_.reserve(widths.size() + 1);
  offsets_.push_back(0);
  for (auto w : widths) offsets_.push_back(offsets_.back() + w);
  bits_.assign(offsets_.back(), 0);
}

std::size_t ActivationPattern::flat_index(NodeId node) const {
  require(node.layer < layer_count() && node.index < width(node.layer), ErrorKind::InvalidArgument,
          fmt::format("node ({}, {}) out of range", node.layer + 1, node.index + 1));
  return offsets_[node.layer] + node.index;
}

NodeId ActivationPattern::node_at(std::size_t flat) const {
  require(flat < bits_.size(), ErrorKind::InvalidArgument, "flat node index out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
  const auto layer = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return {layer, flat - offsets_[layer]};
}

ActivationPattern ActivationPattern::flipped(NodeId node) const {
  ActivationPattern out = *this;
  out.set(node, !active(node));
  return out;
}

std::span<const std::uint8_t> ActivationPattern::layer(std::size_t layer) const {
  return {bits_.data() + offsets_.at(layer), width(layer)};
}

std::span<std::uint8_t> ActivationPattern::layer(std::size_t layer) {
  return {bits_.data() + offsets_.at(layer), width(layer)};
}

std::size_t ActivationPattern::active_count(std::size_t layer) const {
  std::size_t n = 0;
  for (auto b : this->layer(layer)) n += b;
  return n;
}

std::string ActivationPattern::key() const {
  std::string out((bits_.size() + 7) / 8, '\0');
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out[i / 8] = static_cast<char>(out[i / 8] | (1 << (i % 8)));
  }
  return out;
}

ActivationPattern activation_pattern(const ForwardState& state) {
  std::vector<std::size_t> widths;
  for (const auto& z : state.preactivations) widths.push_back(static_cast<std::size_t>(z.size()));
  ActivationPattern pattern(widths);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    auto bits = pattern.layer(l);
    const auto& z = state.preactivations[l];
    for (std::size_t j = 0; j < bits.size(); ++j) bits[j] = z[static_cast<Eigen::Index>(j)] >= 0.0;
  }
  return pattern;
}

// ---------------------------------------------------------------------------
// Region gradients

namespace {

void check_pattern(const NetworkParams& params, const ActivationPattern& pattern) {
  const auto& widths = params.arch.hidden_widths;
  bool ok = pattern.layer_count() == widths.size();
  for (std::size_t l = 0; ok && l < widths.size(); ++l) ok = pattern.width(l) == widths[l];
  require(ok, ErrorKind::ShapeMismatch, "activation pattern does not match the architecture");
}

// Row vector a (over layer l's activations) pulled back to layer l-1's
// activations through the mask of layer l: a^T D_l W_l. Only active rows are
// touched.
Vector pull_back(const Matrix& w, std::span<const std::uint8_t> mask, const Vector& a) {
  Vector out = Vector::Zero(w.cols());
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    const double aj = a[j];
    if (mask[static_cast<std::size_t>(j)] && aj != 0.0) out.noalias() += aj * w.row(j).transpose();
  }
  return out;
}

// Sensitivity of the readout to the activations of layer `layer`, i.e.
// r^T D_L W_L ... D_{layer+1} W_{layer+1}, which excludes layer's own mask.
Vector sensitivity(const NetworkParams& params, const ActivationPattern& pattern,
                   const Readout& readout, std::size_t layer) {
  Vector a = readout.weights;
  for (std::size_t l = params.arch.depth() - 1; l > layer; --l) {
    a = pull_back(params.weights[l], pattern.layer(l), a);
  }
  return a;
}

}  // namespace

Vector gradient_of_region(const NetworkParams& params, const ActivationPattern& pattern,
                          const Readout& readout) {
  check_pattern(params, pattern);
  Vector a = readout.weights;
  for (std::size_t l = params.arch.depth(); l-- > 0;) {
    a = pull_back(params.weights[l], pattern.layer(l), a);
  }
  return a;
}

Vector gradient_of_region(const NetworkParams& params, const ActivationPattern& pattern,
                          const OutputSelector& selector) {
  return gradient_of_region(params, pattern, make_readout(params, selector));
}

Vector pathsum_gradient(const NetworkParams& params, const ActivationPattern& pattern,
                        const OutputSelector& selector, std::size_t path_cap) {
  check_pattern(params, pattern);
  const Readout readout = make_readout(params, selector);
  const auto& arch = params.arch;
  const std::size_t L = arch.depth();

  // index[0] = j_0 (input), index[l] = j_l for hidden layer l (1-based here).
  std::vector<std::size_t> extent(L + 1);
  extent[0] = arch.input_dim;
  double paths = static_cast<double>(arch.input_dim);
  for (std::size_t l = 0; l < L; ++l) {
    extent[l + 1] = arch.width(l);
    paths *= static_cast<double>(arch.width(l));
  }
  require(paths <= static_cast<double>(path_cap), ErrorKind::CapExceeded,
          fmt::format("path enumeration needs {:.0f} paths, cap is {}", paths, path_cap));

  Vector grad = Vector::Zero(static_cast<Eigen::Index>(arch.input_dim));
  std::vector<std::size_t> index(L + 1, 0);
  for (;;) {
    double term = readout.weights[static_cast<Eigen::Index>(index[L])];
    for (std::size_t l = 0; l < L; ++l) {
      term *= params.weights[l](static_cast<Eigen::Index>(index[l + 1]),
                                static_cast<Eigen::Index>(index[l]));
      term *= pattern.active({l, index[l + 1]}) ? 1.0 : 0.0;
    }
    grad[static_cast<Eigen::Index>(index[0])] += term;

    std::size_t d = 0;
    while (d <= L && ++index[d] == extent[d]) index[d++] = 0;
    if (d > L) break;
  }
  return grad;
}

Vector flip_gradient_diff(const NetworkParams& params, const ActivationPattern& pattern,
                          NodeId node, const Readout& readout) {
  check_pattern(params, pattern);
  require(node.layer < params.arch.depth() && node.index < params.arch.width(node.layer),
          ErrorKind::InvalidArgument,
          fmt::format("node ({}, {}) out of range", node.layer + 1, node.index + 1));

  const double downstream =
      sensitivity(params, pattern, readout, node.layer)[static_cast<Eigen::Index>(node.index)];

  // Input gradient of z_node: w_node^T D_{l-1} W_{l-1} ... D_1 W_1.
  Vector up = params.weights[node.layer].row(static_cast<Eigen::Index>(node.index)).transpose();
  for (std::size_t l = node.layer; l-- > 0;) {
    up = pull_back(params.weights[l], pattern.layer(l), up);
  }
  const double sign = pattern.active(node) ? 1.0 : -1.0;
  return (sign * downstream) * up;
}

Vector flip_gradient_diff(const NetworkParams& params, const ActivationPattern& pattern,
                          NodeId node, const OutputSelector& selector) {
  return flip_gradient_diff(params, pattern, node, make_readout(params, selector));
}

std::vector<Vector> flip_gradient_norms(const NetworkParams& params,
                                        const ActivationPattern& pattern,
                                        const Readout& readout) {
  check_pattern(params, pattern);
  const std::size_t L = params.arch.depth();

  // Sensitivities for every layer, top down.
  std::vector<Vector> sens(L);
  sens[L - 1] = readout.weights;
  for (std::size_t l = L - 1; l > 0; --l) {
    sens[l - 1] = pull_back(params.weights[l], pattern.layer(l), sens[l]);
  }

  std::vector<Vector> norms(L);
  Matrix jacobian = params.weights[0];  // d z^(l) / d x
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) {
      Matrix masked = jacobian;
      const auto mask = pattern.layer(l - 1);
      for (Eigen::Index r = 0; r < masked.rows(); ++r) {
        if (!mask[static_cast<std::size_t>(r)]) masked.row(r).setZero();
      }
      jacobian = params.weights[l] * masked;
    }
    norms[l] = sens[l].cwiseAbs().cwiseProduct(jacobian.rowwise().norm());
  }
  return norms;
}

// ---------------------------------------------------------------------------
// Histogram

double Histogram::bin_width() const noexcept {
  return counts.empty() ? 0.0 : (upper - lower) / static_cast<double>(counts.size());
}

std::size_t Histogram::total() const noexcept {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

Histogram weight_histogram(const NetworkParams& params, std::size_t bin_count) {
  require(bin_count >= 1, ErrorKind::InvalidArgument, "bin count must be >= 1");
  std::vector<double> values;
  values.reserve(params.arch.parameter_count());
  auto append = [&values](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) values.push_back(m.data()[i]);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    append(params.weights[l]);
    append(params.biases[l]);
  }
  append(params.output_weights);
  append(params.output_bias);

  Histogram h;
  h.counts.assign(bin_count, 0);
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.lower = *lo;
  h.upper = *hi;
  const double span = h.upper - h.lower;
  for (double v : values) {
    std::size_t bin = 0;
    if (span > 0.0) {
      bin = static_cast<std::size_t>((v - h.lower) / span * static_cast<double>(bin_count));
      bin = std::min(bin, bin_count - 1);
    }
    ++h.counts[bin];
  }
  return h;
}

}  // namespace relugrad
