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

// Monte Carlo harnesses over random (or imported) ReLU networks.
//
// Replicate b (1-based) uses seed `seed ^ b`: the network is drawn with
// generate_params from that seed and the path endpoints from an independent
// stream derived from it. Replicates run on a worker pool and are reduced in
// index order, so every report is independent of the worker count.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relugrad/network.hpp"
#include "relugrad/tracer.hpp"

namespace relugrad {

enum class EndpointSampler { Uniform, TruncatedGaussian };
enum class JumpMetric { VectorNorm, AbsScalar };

struct ExperimentConfig {
  ArchSpec arch;
  /// When non-empty, widths are generated as round(n^alpha_l) for each base n
  /// (theorem1_ratio); `arch.hidden_widths` is then ignored there.
  std::vector<double> width_exponents;
  ParamDistribution dist;
  std::size_t replicates = 100;
  std::size_t paths_per_replicate = 20;
  EndpointSampler endpoints = EndpointSampler::Uniform;
  std::uint64_t seed = 7;
  JumpMetric metric = JumpMetric::VectorNorm;
  TraceTolerances tol;
  OutputSelector output;
  std::size_t workers = 0;  // 0: hardware concurrency

  /// Imported network used by every replicate instead of a random draw.
  std::shared_ptr<const NetworkParams> network;
  /// Explicit endpoint pairs, used cyclically instead of the sampler.
  std::vector<std::pair<Vector, Vector>> fixed_endpoints;

  void validate() const;
  std::uint64_t replicate_seed(std::size_t b) const noexcept { return seed ^ b; }
};

struct ReplicateDraw {
  std::shared_ptr<const NetworkParams> params;
  std::vector<std::pair<Vector, Vector>> endpoints;
};

/// Network and `path_count` endpoint pairs of replicate b (1-based).
ReplicateDraw draw_replicate(const ExperimentConfig& config, std::size_t b,
                             std::size_t path_count);

std::vector<std::size_t> widths_for_base(std::span<const double> exponents, double base);

/// Runs fn(i) for i in [0, n) on `workers` threads (0: hardware concurrency).
/// The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::size_t resolve_workers(std::size_t requested);

// ---------------------------------------------------------------------------
// Layer statistics

struct LayerStatsRow {
  std::size_t layer = 0;  // 1-based
  std::size_t width = 0;
  std::size_t count = 0;
  double share = 0.0;           // percent of single-flip events
  double share_se = 0.0;        // Monte Carlo standard error, percent
  double expected_share = 0.0;  // 100 * n_l / sum n_h
  double mean_abs = 0.0;        // mean |jump| after pooled unit-sd scaling
};

struct LayerStats {
  JumpMetric metric = JumpMetric::VectorNorm;
  std::vector<LayerStatsRow> layers;
  double pooled_sd = 0.0;
  std::size_t single_flip_events = 0;
  std::size_t multi_flip_events = 0;
  std::size_t replicates = 0;
  std::vector<std::vector<std::size_t>> replicate_counts;  // [b][layer]
  std::vector<std::vector<double>> normalized;              // [layer][event]
};

/// One path per replicate; jump magnitudes pooled over replicates, scaled to
/// unit sample standard deviation, summarised per layer. Multi-flip events
/// are counted separately. Throws Numeric when no single-flip event occurs.
LayerStats run_layer_stats(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Ratio of the largest off-narrowest flip to the largest narrowest-layer flip

struct RatioRow {
  double base = 0.0;  // NaN for an explicit architecture
  std::vector<std::size_t> widths;
  std::size_t narrowest_layer = 0;  // 1-based
  std::vector<double> ratios;       // per replicate, defined ones only
  std::size_t undefined_replicates = 0;
  double median = 0.0;
  double q90 = 0.0;
  double mean_regions = 0.0;
  std::size_t subsampled_replicates = 0;
};

struct RatioReport {
  std::vector<RatioRow> rows;
  std::size_t paths_per_replicate = 0;
  static constexpr std::size_t kSubsampleThreshold = 100'000;
  static constexpr std::size_t kSubsampleSize = 10'000;
};

/// max over (regions, nodes outside `narrowest`) of the flip norm, divided by
/// the max over (regions, nodes of `narrowest`). nullopt when the
/// denominator is empty or zero.
std::optional<double> ratio_statistic(const NetworkParams& params,
                                      std::span<const ActivationPattern> regions,
                                      const Readout& readout, std::size_t narrowest);

/// For every base n: widths round(n^alpha_l), `paths_per_replicate` traced
/// paths per replicate, the flip norms evaluated on every visited region.
/// With no width exponents the configured architecture gives a single row.
RatioReport theorem1_ratio(const ExperimentConfig& config, std::span<const double> bases);

double quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------
// Degeneracy of event attribution

struct DegeneracyReport {
  std::size_t traces = 0;
  double t_merge = 0.0;
  std::size_t events = 0;
  std::size_t multi_flip = 0;
  double fraction = 0.0;
  double t_merge_fine = 0.0;  // t_merge / 10
  std::size_t events_fine = 0;
  std::size_t multi_flip_fine = 0;
  double fraction_fine = 0.0;
};

DegeneracyReport prop1_degeneracy(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Region counting

enum class RegionMode { Line, Grid2d };

/// x(u, v) = origin + u * dir_u + v * dir_v for (u, v) in [-1, 1]^2.
struct Slice2d {
  Vector origin;
  Vector dir_u;
  Vector dir_v;
};

struct RegionCountReport {
  RegionMode mode = RegionMode::Line;
  std::size_t resolution = 0;
  std::size_t slice_dim = 1;
  std::vector<std::size_t> counts;           // per trace (line) or per replicate (grid)
  std::vector<std::size_t> count_replicate;  // replicate id (1-based) of each count
  std::optional<double> bound;               // single hidden layer only
  bool bound_satisfied = true;
};

/// sum_{s=0}^{d} C(n, s)
double arrangement_bound(std::size_t hyperplanes, std::size_t dim);

std::size_t count_grid_patterns(const NetworkParams& params, const Slice2d& slice,
                                std::size_t resolution);

/// Default slice: origin 0, first two coordinate axes (p == 1 uses v = 0).
Slice2d default_slice(std::size_t input_dim);

RegionCountReport region_count(const ExperimentConfig& config, RegionMode mode,
                               std::size_t resolution, const std::optional<Slice2d>& slice = {});

// ---------------------------------------------------------------------------
// Event concentration around zero crossings of g

struct BoundaryReport {
  double h = 0.05;
  std::size_t narrowest_layer = 0;  // 1-based
  std::vector<std::size_t> window_counts;
  std::vector<std::size_t> full_counts;
  std::vector<double> window_share;
  std::vector<double> full_share;
  std::size_t traces = 0;
  std::size_t crossings = 0;
  std::size_t interval_crossings = 0;  // skipped: g vanishes on an interval
  std::size_t replicates_with_crossing = 0;
  std::size_t replicates_concentrated = 0;  // narrowest window share > full share
};

BoundaryReport boundary_stats(const ExperimentConfig& config, double h);

// ---------------------------------------------------------------------------

/// (1/n_u) sum_i sum_{j=1}^{n_L} (z_j^(L)(x_i) - z_j^(L)(x_i + eta_i))^2
double ssl_regularizer(const NetworkParams& params, std::span<const Vector> unlabeled,
                       std::span<const Vector> perturbations);

}  // namespace relugrad
