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

// Fully-connected ReLU networks: parameters, forward evaluation, activation
// patterns and the exact gradient of each linear region.
//
// Layers are indexed from 0 inside the library: hidden layer l (0 <= l < L)
// has weights of shape width(l) x fan_in(l), where fan_in(0) is the input
// dimension. Text exports (CSV) report layers and nodes 1-based.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "relugrad/rng.hpp"

namespace relugrad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ArchSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_count = 1;

  std::size_t depth() const noexcept { return hidden_widths.size(); }
  std::size_t width(std::size_t layer) const { return hidden_widths.at(layer); }
  std::size_t fan_in(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden_widths.at(layer - 1);
  }
  std::size_t hidden_node_count() const noexcept;
  std::size_t parameter_count() const noexcept;

  /// Smallest layer; ties go to the deepest such layer.
  std::size_t narrowest_layer() const;

  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

enum class DistKind { TruncatedGaussian, Uniform };

/// Symmetric parameter distribution supported on [-bound, bound].
struct ParamDistribution {
  DistKind kind = DistKind::TruncatedGaussian;
  double bound = 1.0;
  double variance = 1.0;  // pre-truncation variance, gaussian only

  static ParamDistribution truncated_gaussian(double variance, double bound) {
    return {DistKind::TruncatedGaussian, bound, variance};
  }
  static ParamDistribution uniform(double bound) { return {DistKind::Uniform, bound, 1.0}; }

  void validate() const;
  double sample(Rng& rng) const;
};

struct NodeId {
  std::size_t layer = 0;
  std::size_t index = 0;

  auto operator<=>(const NodeId&) const = default;
};

struct NetworkParams {
  ArchSpec arch;
  std::vector<Matrix> weights;  // weights[l](j, j') feeds node j of l from node j' of l-1
  std::vector<Vector> biases;
  Vector output_bias;           // length K
  Matrix output_weights;        // K x n_L

  static NetworkParams zeros(const ArchSpec& arch);

  /// Throws ShapeMismatch on inconsistent shapes, InvalidArgument on
  /// non-finite entries.
  void validate() const;

  bool operator==(const NetworkParams& other) const;
};

/// Every weight, bias and output coefficient drawn i.i.d. from `dist`.
/// Draw order: hidden layers in order; within a layer node by node, each
/// node's fan-in weights followed by its bias; then each output row's
/// weights followed by its bias.
NetworkParams generate_params(const ArchSpec& arch, const ParamDistribution& dist,
                              std::uint64_t seed);

/// Which scalar function of the network is analysed: output `output`, or the
/// class difference f_output - f_minus.
struct OutputSelector {
  std::size_t output = 0;
  std::optional<std::size_t> minus;
};

/// Output row reduced to a single affine readout of the top hidden layer.
struct Readout {
  Vector weights;
  double bias = 0.0;
};

Readout make_readout(const NetworkParams& params, const OutputSelector& selector = {});

struct ForwardState {
  Vector input;
  std::vector<Vector> preactivations;
  std::vector<Vector> activations;
  Vector output;
};

ForwardState forward(const NetworkParams& params, std::span<const double> x);
ForwardState forward(const NetworkParams& params, const Vector& x);

/// Selected scalar output only.
double evaluate(const NetworkParams& params, const Vector& x, const Readout& readout);

class ActivationPattern {
 public:
  ActivationPattern() = default;
  /// All bits zero, shaped like the hidden layers of `arch`.
  explicit ActivationPattern(const ArchSpec& arch);
  explicit ActivationPattern(std::span<const std::size_t> widths);

  std::size_t layer_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t width(std::size_t layer) const { return offsets_.at(layer + 1) - offsets_[layer]; }
  std::size_t node_count() const noexcept { return bits_.size(); }

  bool active(NodeId node) const { return bits_[flat_index(node)] != 0; }
  void set(NodeId node, bool on) { bits_[flat_index(node)] = on ? 1 : 0; }
  ActivationPattern flipped(NodeId node) const;

  std::span<const std::uint8_t> layer(std::size_t layer) const;
  std::span<std::uint8_t> layer(std::size_t layer);
  std::size_t active_count(std::size_t layer) const;

  std::size_t flat_index(NodeId node) const;
  NodeId node_at(std::size_t flat) const;

  /// Packed bit string, suitable as a hash key for region bookkeeping.
  std::string key() const;

  bool operator==(const ActivationPattern&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> offsets_;
};

/// Bit (l, j) is 1 iff z_j^(l) >= 0; an exact zero counts as active.
ActivationPattern activation_pattern(const ForwardState& state);

/// Gradient of the selected output on the region of `pattern`, by masked
/// back-substitution: r^T D_L W_L ... D_1 W_1.
Vector gradient_of_region(const NetworkParams& params, const ActivationPattern& pattern,
                          const OutputSelector& selector = {});
Vector gradient_of_region(const NetworkParams& params, const ActivationPattern& pattern,
                          const Readout& readout);

/// Literal path-sum over every index tuple (j_0, ..., j_L). Exponential cost;
/// meant as a test oracle. Throws CapExceeded when the number of paths
/// exceeds `path_cap`.
Vector pathsum_gradient(const NetworkParams& params, const ActivationPattern& pattern,
                        const OutputSelector& selector = {},
                        std::size_t path_cap = 1'000'000);

/// grad_R - grad_R' where R' is R with bit `node` flipped. Computed from the
/// paths through `node` alone: the sensitivity of the output to h_node times
/// the input gradient of z_node, signed by the node's bit in R.
Vector flip_gradient_diff(const NetworkParams& params, const ActivationPattern& pattern,
                          NodeId node, const OutputSelector& selector = {});
Vector flip_gradient_diff(const NetworkParams& params, const ActivationPattern& pattern,
                          NodeId node, const Readout& readout);

/// Norms of flip_gradient_diff for every node at once, per layer.
std::vector<Vector> flip_gradient_norms(const NetworkParams& params,
                                        const ActivationPattern& pattern,
                                        const Readout& readout);

struct Histogram {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::size_t> counts;

  double bin_width() const noexcept;
  std::size_t total() const noexcept;
};

/// Equal-width bins over [min, max] of every parameter (weights, biases and
/// output coefficients). The last bin is closed on the right.
Histogram weight_histogram(const NetworkParams& params, std::size_t bin_count);

}  // namespace relugrad
