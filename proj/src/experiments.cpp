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
#include "relugrad/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <fmt/core.h>

#include "relugrad/error.hpp"

namespace relugrad {

void ExperimentConfig::validate() const {
  if (network) {
    network->validate();
  } else if (width_exponents.empty()) {
    arch.validate();
  } else {
    require(arch.input_dim >= 1 && arch.output_count >= 1, ErrorKind::InvalidArgument,
            "input dimension and output count must be >= 1");
  }
  dist.validate();
  tol.validate();
  require(replicates >= 1, ErrorKind::InvalidArgument, "replicates must be >= 1");
  require(paths_per_replicate >= 1, ErrorKind::InvalidArgument, "paths per replicate must be >= 1");
  for (std::size_t i = 0; i < width_exponents.size(); ++i) {
    require(std::isfinite(width_exponents[i]) && width_exponents[i] > 0.0,
            ErrorKind::InvalidArgument, "width exponents must be positive");
    for (std::size_t k = 0; k < i; ++k) {
      require(width_exponents[i] != width_exponents[k], ErrorKind::InvalidArgument,
              "width exponents must be distinct");
    }
  }
  const ArchSpec& a = network ? network->arch : arch;
  require(output.output < a.output_count && (!output.minus || *output.minus < a.output_count),
          ErrorKind::InvalidArgument, "output selector out of range");
  for (const auto& [x1, x2] : fixed_endpoints) {
    require(x1.size() == static_cast<Eigen::Index>(a.input_dim) &&
                x2.size() == static_cast<Eigen::Index>(a.input_dim),
            ErrorKind::ShapeMismatch, "fixed endpoints do not match the input dimension");
  }
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RELUGRAD_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min(resolve_workers(workers), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            next.store(n);
            return;
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

Vector sample_point(Rng& rng, std::size_t dim, EndpointSampler sampler) {
  static const ParamDistribution gauss = ParamDistribution::truncated_gaussian(1.0, 1.0);
  Vector x(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = sampler == EndpointSampler::Uniform ? rng.uniform(-1.0, 1.0) : gauss.sample(rng);
  }
  return x;
}

ArchSpec arch_of(const ExperimentConfig& config) {
  return config.network ? config.network->arch : config.arch;
}

std::vector<std::size_t> widths_of(const ArchSpec& a) { return a.hidden_widths; }

}  // namespace

ReplicateDraw draw_replicate(const ExperimentConfig& config, std::size_t b,
                             std::size_t path_count) {
  const std::uint64_t seed = config.replicate_seed(b);
  ReplicateDraw draw;
  draw.params = config.network ? config.network
                               : std::make_shared<const NetworkParams>(
                                     generate_params(config.arch, config.dist, seed));
  const std::size_t p = draw.params->arch.input_dim;
  if (!config.fixed_endpoints.empty()) {
    for (std::size_t m = 0; m < path_count; ++m) {
      draw.endpoints.push_back(config.fixed_endpoints[m % config.fixed_endpoints.size()]);
    }
    return draw;
  }
  Rng rng(derive_seed(seed, 1));
  for (std::size_t m = 0; m < path_count; ++m) {
    Vector x1 = sample_point(rng, p, config.endpoints);
    Vector x2 = sample_point(rng, p, config.endpoints);
    draw.endpoints.emplace_back(std::move(x1), std::move(x2));
  }
  return draw;
}

std::vector<std::size_t> widths_for_base(std::span<const double> exponents, double base) {
  require(base >= 1.0, ErrorKind::InvalidArgument, "width base must be >= 1");
  std::vector<std::size_t> widths;
  for (double alpha : exponents) {
    const double w = std::round(std::pow(base, alpha));
    require(w >= 1.0, ErrorKind::InvalidArgument,
            fmt::format("width round({}^{}) is below 1", base, alpha));
    widths.push_back(static_cast<std::size_t>(w));
  }
  return widths;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::InvalidArgument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------

LayerStats run_layer_stats(const ExperimentConfig& config) {
  config.validate();
  const ArchSpec arch = arch_of(config);
  const std::size_t L = arch.depth();

  struct Result {
    std::vector<std::vector<double>> values;  // [layer]
    std::size_t multi = 0;
  };
  std::vector<Result> results(config.replicates);

  TraceOptions opts;
  opts.tol = config.tol;
  opts.output = config.output;
  opts.jump_vectors = config.metric == JumpMetric::VectorNorm;
  opts.keep_patterns = false;

  parallel_for(config.replicates, config.workers, [&](std::size_t i) {
    const ReplicateDraw draw = draw_replicate(config, i + 1, 1);
    const auto& [x1, x2] = draw.endpoints.front();
    const PathTrace trace = trace_path(*draw.params, x1, x2, opts);
    Result r;
    r.values.resize(L);
    for (const auto& e : trace.events) {
      if (e.multi_flip) {
        ++r.multi;
        continue;
      }
      const double v = opts.jump_vectors ? e.jump_vector.norm() : std::abs(e.normalized_scalar);
      r.values[e.node().layer].push_back(v);
    }
    results[i] = std::move(r);
  });

  LayerStats stats;
  stats.metric = config.metric;
  stats.replicates = config.replicates;
  stats.normalized.resize(L);
  std::vector<std::size_t> counts(L, 0);
  double sum = 0.0;
  for (const auto& r : results) {
    std::vector<std::size_t> rc(L);
    for (std::size_t l = 0; l < L; ++l) {
      rc[l] = r.values[l].size();
      counts[l] += rc[l];
      for (double v : r.values[l]) {
        stats.normalized[l].push_back(v);
        sum += v;
      }
    }
    stats.multi_flip_events += r.multi;
    stats.replicate_counts.push_back(std::move(rc));
  }
  std::size_t total = 0;
  for (auto c : counts) total += c;
  stats.single_flip_events = total;
  require(total > 0, ErrorKind::Numeric, "no single-flip events were traced");

  const double mean = sum / static_cast<double>(total);
  double ss = 0.0;
  for (const auto& layer : stats.normalized) {
    for (double v : layer) ss += (v - mean) * (v - mean);
  }
  stats.pooled_sd = total > 1 ? std::sqrt(ss / static_cast<double>(total - 1)) : 0.0;
  require(stats.pooled_sd > 0.0, ErrorKind::Numeric, "pooled jump magnitudes have zero spread");

  const double width_total = static_cast<double>(arch.hidden_node_count());
  const auto B = static_cast<double>(config.replicates);
  for (std::size_t l = 0; l < L; ++l) {
    LayerStatsRow row;
    row.layer = l + 1;
    row.width = arch.width(l);
    row.count = counts[l];
    row.share = 100.0 * static_cast<double>(counts[l]) / static_cast<double>(total);
    row.expected_share = 100.0 * static_cast<double>(arch.width(l)) / width_total;

    // Ratio-estimator standard error over replicates.
    if (config.replicates > 1) {
      const double ratio = static_cast<double>(counts[l]) / static_cast<double>(total);
      const double mean_total = static_cast<double>(total) / B;
      double acc = 0.0;
      for (const auto& rc : stats.replicate_counts) {
        std::size_t t_b = 0;
        for (auto c : rc) t_b += c;
        const double resid = static_cast<double>(rc[l]) - ratio * static_cast<double>(t_b);
        acc += resid * resid;
      }
      row.share_se = 100.0 * std::sqrt(acc / (B * (B - 1.0))) / mean_total;
    }

    double abs_sum = 0.0;
    for (double& v : stats.normalized[l]) {
      v /= stats.pooled_sd;
      abs_sum += std::abs(v);
    }
    row.mean_abs = counts[l] ? abs_sum / static_cast<double>(counts[l]) : 0.0;
    stats.layers.push_back(row);
  }
  return stats;
}

// ---------------------------------------------------------------------------

std::optional<double> ratio_statistic(const NetworkParams& params,
                                      std::span<const ActivationPattern> regions,
                                      const Readout& readout, std::size_t narrowest) {
  double num = 0.0;
  double den = 0.0;
  bool any_den = false;
  for (const auto& region : regions) {
    const auto norms = flip_gradient_norms(params, region, readout);
    for (std::size_t l = 0; l < norms.size(); ++l) {
      const double m = norms[l].size() ? norms[l].maxCoeff() : 0.0;
      if (l == narrowest) {
        den = std::max(den, m);
        any_den = any_den || norms[l].size() > 0;
      } else {
        num = std::max(num, m);
      }
    }
  }
  if (!any_den || den == 0.0) return std::nullopt;
  return num / den;
}

RatioReport theorem1_ratio(const ExperimentConfig& config, std::span<const double> bases) {
  config.validate();
  const bool generated = !config.width_exponents.empty();
  require(!generated || !bases.empty(), ErrorKind::InvalidArgument,
          "width exponents need at least one base n");
  require(!generated || !config.network, ErrorKind::InvalidArgument,
          "width exponents cannot be combined with an imported network");

  std::vector<double> row_bases;
  if (generated) {
    row_bases.assign(bases.begin(), bases.end());
  } else {
    row_bases.push_back(std::numeric_limits<double>::quiet_NaN());
  }

  RatioReport report;
  report.paths_per_replicate = config.paths_per_replicate;
  for (double base : row_bases) {
    ExperimentConfig cfg = config;
    if (generated) {
      cfg.arch.hidden_widths = widths_for_base(config.width_exponents, base);
      cfg.arch.validate();
    }
    const ArchSpec arch = arch_of(cfg);
    const std::size_t narrowest = arch.narrowest_layer();

    struct Result {
      std::optional<double> ratio;
      std::size_t regions = 0;
      bool subsampled = false;
    };
    std::vector<Result> results(cfg.replicates);

    TraceOptions opts;
    opts.tol = cfg.tol;
    opts.output = cfg.output;
    opts.jump_vectors = false;

    parallel_for(cfg.replicates, cfg.workers, [&](std::size_t i) {
      const std::size_t b = i + 1;
      const ReplicateDraw draw = draw_replicate(cfg, b, cfg.paths_per_replicate);
      const NetworkParams& params = *draw.params;
      const Readout readout = make_readout(params, cfg.output);

      std::vector<ActivationPattern> regions;
      std::unordered_set<std::string> seen;
      for (const auto& [x1, x2] : draw.endpoints) {
        const PathTrace trace = trace_path(params, x1, x2, opts);
        for (const auto& pattern : trace.region_patterns) {
          if (seen.insert(pattern.key()).second) regions.push_back(pattern);
        }
      }

      Result r;
      r.regions = regions.size();
      const std::size_t nodes = arch.hidden_node_count();
      if (regions.size() * nodes <= RatioReport::kSubsampleThreshold) {
        r.ratio = ratio_statistic(params, regions, readout, narrowest);
      } else {
        r.subsampled = true;
        Rng rng(derive_seed(cfg.replicate_seed(b), 2));
        std::unordered_map<std::size_t, std::vector<Vector>> cache;
        ActivationPattern shape(arch);
        double num = 0.0;
        double den = 0.0;
        bool any_den = false;
        for (std::size_t s = 0; s < RatioReport::kSubsampleSize; ++s) {
          const std::size_t region = rng.below(regions.size());
          const NodeId node = shape.node_at(rng.below(nodes));
          auto it = cache.find(region);
          if (it == cache.end()) {
            it = cache.emplace(region, flip_gradient_norms(params, regions[region], readout)).first;
          }
          const double v = it->second[node.layer][static_cast<Eigen::Index>(node.index)];
          if (node.layer == narrowest) {
            den = std::max(den, v);
            any_den = true;
          } else {
            num = std::max(num, v);
          }
        }
        if (any_den && den > 0.0) r.ratio = num / den;
      }
      results[i] = r;
    });

    RatioRow row;
    row.base = base;
    row.widths = widths_of(arch);
    row.narrowest_layer = narrowest + 1;
    double region_sum = 0.0;
    for (const auto& r : results) {
      region_sum += static_cast<double>(r.regions);
      row.subsampled_replicates += r.subsampled ? 1 : 0;
      if (r.ratio) {
        row.ratios.push_back(*r.ratio);
      } else {
        ++row.undefined_replicates;
      }
    }
    require(!row.ratios.empty(), ErrorKind::Numeric,
            "no replicate produced a nonzero narrowest-layer flip (empty denominator)");
    row.mean_regions = region_sum / static_cast<double>(results.size());
    row.median = quantile(row.ratios, 0.5);
    row.q90 = quantile(row.ratios, 0.9);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------

DegeneracyReport prop1_degeneracy(const ExperimentConfig& config) {
  config.validate();
  struct Result {
    std::size_t events = 0, multi = 0, events_fine = 0, multi_fine = 0;
  };
  std::vector<Result> results(config.replicates);

  TraceOptions coarse;
  coarse.tol = config.tol;
  coarse.output = config.output;
  coarse.jump_vectors = false;
  coarse.keep_patterns = false;
  TraceOptions fine = coarse;
  fine.tol.t_merge = config.tol.t_merge / 10.0;

  parallel_for(config.replicates, config.workers, [&](std::size_t i) {
    const ReplicateDraw draw = draw_replicate(config, i + 1, config.paths_per_replicate);
    Result r;
    for (const auto& [x1, x2] : draw.endpoints) {
      const PathTrace a = trace_path(*draw.params, x1, x2, coarse);
      r.events += a.events.size();
      r.multi += a.multi_flip_count();
      const PathTrace b = trace_path(*draw.params, x1, x2, fine);
      r.events_fine += b.events.size();
      r.multi_fine += b.multi_flip_count();
    }
    results[i] = r;
  });

  DegeneracyReport rep;
  rep.traces = config.replicates * config.paths_per_replicate;
  rep.t_merge = config.tol.t_merge;
  rep.t_merge_fine = fine.tol.t_merge;
  for (const auto& r : results) {
    rep.events += r.events;
    rep.multi_flip += r.multi;
    rep.events_fine += r.events_fine;
    rep.multi_flip_fine += r.multi_fine;
  }
  auto frac = [](std::size_t a, std::size_t b) {
    return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  rep.fraction = frac(rep.multi_flip, rep.events);
  rep.fraction_fine = frac(rep.multi_flip_fine, rep.events_fine);
  return rep;
}

// ---------------------------------------------------------------------------

double arrangement_bound(std::size_t hyperplanes, std::size_t dim) {
  double total = 0.0;
  double binom = 1.0;  // C(n, s)
  for (std::size_t s = 0; s <= dim && s <= hyperplanes; ++s) {
    total += binom;
    binom = binom * static_cast<double>(hyperplanes - s) / static_cast<double>(s + 1);
  }
  return total;
}

Slice2d default_slice(std::size_t input_dim) {
  Slice2d s;
  s.origin = Vector::Zero(static_cast<Eigen::Index>(input_dim));
  s.dir_u = Vector::Zero(static_cast<Eigen::Index>(input_dim));
  s.dir_v = Vector::Zero(static_cast<Eigen::Index>(input_dim));
  s.dir_u[0] = 1.0;
  if (input_dim > 1) s.dir_v[1] = 1.0;
  return s;
}

std::size_t count_grid_patterns(const NetworkParams& params, const Slice2d& slice,
                                std::size_t resolution) {
  require(resolution >= 2, ErrorKind::InvalidArgument, "grid resolution must be >= 2");
  const auto p = static_cast<Eigen::Index>(params.arch.input_dim);
  require(slice.origin.size() == p && slice.dir_u.size() == p && slice.dir_v.size() == p,
          ErrorKind::ShapeMismatch, "slice vectors do not match the input dimension");

  std::unordered_set<std::string> seen;
  const double step = 2.0 / static_cast<double>(resolution - 1);
  Vector x(p);
  for (std::size_t i = 0; i < resolution; ++i) {
    const double u = -1.0 + step * static_cast<double>(i);
    for (std::size_t k = 0; k < resolution; ++k) {
      const double v = -1.0 + step * static_cast<double>(k);
      x = slice.origin + u * slice.dir_u + v * slice.dir_v;
      seen.insert(activation_pattern(forward(params, x)).key());
    }
  }
  return seen.size();
}

RegionCountReport region_count(const ExperimentConfig& config, RegionMode mode,
                               std::size_t resolution, const std::optional<Slice2d>& slice) {
  config.validate();
  require(mode == RegionMode::Line || resolution >= 2, ErrorKind::InvalidArgument,
          "grid resolution must be >= 2");
  const ArchSpec arch = arch_of(config);
  const Slice2d plane = slice ? *slice : default_slice(arch.input_dim);

  RegionCountReport rep;
  rep.mode = mode;
  rep.resolution = resolution;
  rep.slice_dim = mode == RegionMode::Line ? 1 : (arch.input_dim > 1 ? 2 : 1);

  std::vector<std::vector<std::size_t>> results(config.replicates);
  TraceOptions opts;
  opts.tol = config.tol;
  opts.jump_vectors = false;
  opts.keep_patterns = false;
  parallel_for(config.replicates, config.workers, [&](std::size_t i) {
    if (mode == RegionMode::Line) {
      const ReplicateDraw draw = draw_replicate(config, i + 1, config.paths_per_replicate);
      for (const auto& [x1, x2] : draw.endpoints) {
        results[i].push_back(trace_path(*draw.params, x1, x2, opts).segment_count());
      }
    } else {
      const ReplicateDraw draw = draw_replicate(config, i + 1, 0);
      results[i].push_back(count_grid_patterns(*draw.params, plane, resolution));
    }
  });
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (auto c : results[i]) {
      rep.counts.push_back(c);
      rep.count_replicate.push_back(i + 1);
    }
  }
  if (arch.depth() == 1) {
    rep.bound = arrangement_bound(arch.width(0), rep.slice_dim);
    for (auto c : rep.counts) rep.bound_satisfied = rep.bound_satisfied && c <= *rep.bound;
  }
  return rep;
}

// ---------------------------------------------------------------------------

BoundaryReport boundary_stats(const ExperimentConfig& config, double h) {
  config.validate();
  require(h > 0.0, ErrorKind::InvalidArgument, "window half-width h must be positive");
  const ArchSpec arch = arch_of(config);
  const std::size_t L = arch.depth();

  struct Result {
    LayerCounts window, full;
    std::size_t crossings = 0, intervals = 0;
  };
  std::vector<Result> results(config.replicates);
  TraceOptions opts;
  opts.tol = config.tol;
  opts.output = config.output;
  opts.jump_vectors = false;
  opts.keep_patterns = false;

  parallel_for(config.replicates, config.workers, [&](std::size_t i) {
    const ReplicateDraw draw = draw_replicate(config, i + 1, config.paths_per_replicate);
    Result r;
    r.window.per_layer.assign(L, 0);
    r.full.per_layer.assign(L, 0);
    for (const auto& [x1, x2] : draw.endpoints) {
      const PathTrace trace = trace_path(*draw.params, x1, x2, opts);
      const LayerCounts full = layer_event_counts(trace, L);
      for (std::size_t l = 0; l < L; ++l) r.full.per_layer[l] += full.per_layer[l];
      r.full.multi_flip += full.multi_flip;
      for (const auto& zc : zero_crossings(trace)) {
        if (zc.is_interval()) {
          ++r.intervals;
          continue;
        }
        ++r.crossings;
        const LayerCounts w = nodes_near(trace, L, zc.begin, h);
        for (std::size_t l = 0; l < L; ++l) r.window.per_layer[l] += w.per_layer[l];
        r.window.multi_flip += w.multi_flip;
      }
    }
    results[i] = std::move(r);
  });

  BoundaryReport rep;
  rep.h = h;
  rep.narrowest_layer = arch.narrowest_layer() + 1;
  rep.traces = config.replicates * config.paths_per_replicate;
  LayerCounts window, full;
  window.per_layer.assign(L, 0);
  full.per_layer.assign(L, 0);
  const std::size_t star = arch.narrowest_layer();
  for (const auto& r : results) {
    for (std::size_t l = 0; l < L; ++l) {
      window.per_layer[l] += r.window.per_layer[l];
      full.per_layer[l] += r.full.per_layer[l];
    }
    rep.crossings += r.crossings;
    rep.interval_crossings += r.intervals;
    if (r.crossings > 0) {
      ++rep.replicates_with_crossing;
      const auto ws = r.window.percentages();
      const auto fs = r.full.percentages();
      if (r.window.total() > 0 && ws[star] > fs[star]) ++rep.replicates_concentrated;
    }
  }
  rep.window_counts = window.per_layer;
  rep.full_counts = full.per_layer;
  rep.window_share = window.percentages();
  rep.full_share = full.percentages();
  return rep;
}

// ---------------------------------------------------------------------------

double ssl_regularizer(const NetworkParams& params, std::span<const Vector> unlabeled,
                       std::span<const Vector> perturbations) {
  require(!unlabeled.empty(), ErrorKind::InvalidArgument, "need at least one unlabeled point");
  require(unlabeled.size() == perturbations.size(), ErrorKind::ShapeMismatch,
          fmt::format("{} unlabeled points but {} perturbations", unlabeled.size(),
                      perturbations.size()));
  const std::size_t top = params.arch.depth() - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    require(perturbations[i].size() == unlabeled[i].size(), ErrorKind::ShapeMismatch,
            "perturbation dimension differs from its point");
    const Vector z0 = forward(params, unlabeled[i]).preactivations[top];
    const Vector z1 =
        forward(params, Vector(unlabeled[i] + perturbations[i])).preactivations[top];
    total += (z0 - z1).squaredNorm();
  }
  return total / static_cast<double>(unlabeled.size());
}

}  // namespace relugrad
