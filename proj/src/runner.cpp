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
#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <fmt/core.h>

#include "relugrad/approximator.hpp"
#include "relugrad/error.hpp"
#include "relugrad/experiments.hpp"
#include "relugrad/params_io.hpp"
#include "relugrad/rng.hpp"
#include "relugrad/tracer.hpp"

#ifndef RELUGRAD_VERSION
#define RELUGRAD_VERSION "0.0.0"
#endif

namespace relugrad {

using nlohmann::json;

const char* library_version() { return RELUGRAD_VERSION; }

namespace {

const std::vector<std::string> kCommands = {"gen",      "trace",   "table1",  "theorem1", "prop1",
                                            "regions",  "boundary", "sslreg", "approx"};

json network_keys() {
  return {{"input_dim", 784},           {"widths", {1200, 600, 300, 50}},
          {"outputs", 1},               {"dist", "truncated-gaussian"},
          {"tau", 1.0},                 {"variance", 1.0},
          {"seed", 7}};
}

json sweep_keys() {
  return {{"replicates", 100}, {"paths", 20}, {"endpoints", "uniform"}, {"workers", 0}};
}

json tolerance_keys() {
  return {{"t_merge", 1e-12}, {"slope_floor", 1e-14}, {"step_nudge", 1e-10}, {"max_events", 1000000}};
}

json trace_keys() {
  json j = tolerance_keys();
  j["metric"] = "vector-norm";
  j["output"] = 0;
  j["minus"] = nullptr;
  return j;
}

json command_defaults(const std::string& command) {
  json d = network_keys();
  auto merge = [&d](const json& extra) {
    for (const auto& [k, v] : extra.items()) d[k] = v;
  };
  if (command == "gen") return d;
  d["weights"] = nullptr;
  if (command == "trace") {
    merge(trace_keys());
    merge({{"x1", nullptr}, {"x2", nullptr}, {"endpoints", "uniform"}});
  } else if (command == "table1") {
    merge(sweep_keys());
    merge(trace_keys());
    merge({{"x1", nullptr}, {"x2", nullptr}, {"last_widths", json::array()}});
    d.erase("paths");
  } else if (command == "theorem1") {
    merge(sweep_keys());
    merge(trace_keys());
    merge({{"x1", nullptr}, {"x2", nullptr}, {"input_dim", 4}, {"replicates", 30},
           {"exponents", {2.0, 1.0}}, {"bases", {4.0, 6.0, 8.0, 12.0}}});
    d["widths"] = json::array();
    d.erase("metric");
  } else if (command == "prop1") {
    merge(sweep_keys());
    merge(trace_keys());
    merge({{"x1", nullptr}, {"x2", nullptr}, {"input_dim", 64}, {"widths", {120, 60, 30, 8}},
           {"replicates", 20}, {"paths", 5}});
    d.erase("metric");
  } else if (command == "regions") {
    merge(sweep_keys());
    merge(tolerance_keys());
    merge({{"input_dim", 2}, {"widths", {16}}, {"replicates", 50}, {"mode", "grid2d"},
           {"resolution", 512}, {"slice", nullptr}});
  } else if (command == "boundary") {
    merge(sweep_keys());
    merge(trace_keys());
    merge({{"x1", nullptr}, {"x2", nullptr}, {"input_dim", 64}, {"widths", {120, 60, 30, 8}},
           {"outputs", 10}, {"output", 9}, {"minus", 4}, {"replicates", 50}, {"h", 0.05}});
    d.erase("metric");
  } else if (command == "sslreg") {
    merge({{"input_dim", 64}, {"widths", {120, 60, 30, 8}}, {"unlabeled", 100}, {"eta", 0.01},
           {"points", nullptr}, {"perturbations", nullptr}});
  } else if (command == "approx") {
    merge({{"input_dim", 4}, {"widths", {32, 16}}, {"output", 0}, {"minus", nullptr},
           {"kind", "piecewise-constant"}, {"task", "regression"}, {"train_points", 2000},
           {"eval_points", 1000}, {"analytic", false}, {"step", 1.0},
           {"max_iterations", 20000}, {"gradient_tolerance", 1e-6}, {"workers", 0}});
  } else {
    fail(ErrorKind::InvalidArgument, fmt::format("unknown command '{}'", command));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Typed access with key-specific messages.

[[noreturn]] void bad_key(const std::string& key, const char* want) {
  fail(ErrorKind::InvalidArgument, fmt::format("config key '{}' must be {}", key, want));
}

std::size_t get_size(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    bad_key(key, "a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t get_u64(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
    bad_key(key, "a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_number()) bad_key(key, "a number");
  return v.get<double>();
}

bool get_bool(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_boolean()) bad_key(key, "true or false");
  return v.get<bool>();
}

std::string get_string(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_string()) bad_key(key, "a string");
  return v.get<std::string>();
}

std::vector<double> get_doubles(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_array()) bad_key(key, "an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) bad_key(key, "an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::size_t> get_sizes(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_array()) bad_key(key, "an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || (!e.is_number_unsigned() && e.get<long long>() < 0)) {
      bad_key(key, "an array of non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vector get_vector(const json& c, const std::string& key) { return to_vector(get_doubles(c, key)); }

std::vector<Vector> get_points(const json& c, const std::string& key) {
  const json& v = c.at(key);
  if (!v.is_array()) bad_key(key, "an array of points");
  std::vector<Vector> out;
  for (const auto& row : v) {
    json wrap = {{key, row}};
    out.push_back(get_vector(wrap, key));
  }
  return out;
}

bool has(const json& c, const std::string& key) { return c.contains(key) && !c.at(key).is_null(); }

// ---------------------------------------------------------------------------

struct Prepared {
  ExperimentConfig exp;
  std::shared_ptr<const NetworkParams> network;  // single network for gen/trace/sslreg/approx
};

ParamDistribution parse_dist(const json& c) {
  const std::string kind = get_string(c, "dist");
  const double tau = get_double(c, "tau");
  if (kind == "truncated-gaussian") return ParamDistribution::truncated_gaussian(get_double(c, "variance"), tau);
  if (kind == "uniform") return ParamDistribution::uniform(tau);
  fail(ErrorKind::InvalidArgument,
       fmt::format("config key 'dist' must be truncated-gaussian or uniform, got '{}'", kind));
}

Prepared prepare(const std::string& command, const json& c) {
  Prepared p;
  ExperimentConfig& e = p.exp;
  e.arch.input_dim = get_size(c, "input_dim");
  e.arch.hidden_widths = get_sizes(c, "widths");
  e.arch.output_count = get_size(c, "outputs");
  e.dist = parse_dist(c);
  e.seed = get_u64(c, "seed");
  e.dist.validate();

  if (c.contains("replicates")) e.replicates = get_size(c, "replicates");
  if (c.contains("paths")) e.paths_per_replicate = get_size(c, "paths");
  if (c.contains("workers")) e.workers = get_size(c, "workers");
  if (c.contains("endpoints")) {
    const std::string s = get_string(c, "endpoints");
    if (s == "uniform") {
      e.endpoints = EndpointSampler::Uniform;
    } else if (s == "truncated-gaussian") {
      e.endpoints = EndpointSampler::TruncatedGaussian;
    } else {
      fail(ErrorKind::InvalidArgument, "config key 'endpoints' must be uniform or truncated-gaussian");
    }
  }
  if (c.contains("metric")) {
    const std::string s = get_string(c, "metric");
    if (s == "vector-norm") {
      e.metric = JumpMetric::VectorNorm;
    } else if (s == "abs-scalar") {
      e.metric = JumpMetric::AbsScalar;
    } else {
      fail(ErrorKind::InvalidArgument, "config key 'metric' must be vector-norm or abs-scalar");
    }
  }
  if (c.contains("t_merge")) {
    e.tol.t_merge = get_double(c, "t_merge");
    e.tol.slope_floor = get_double(c, "slope_floor");
    e.tol.step_nudge = get_double(c, "step_nudge");
    e.tol.max_events = get_size(c, "max_events");
  }
  if (c.contains("output")) e.output.output = get_size(c, "output");
  if (has(c, "minus")) e.output.minus = get_size(c, "minus");
  if (command == "theorem1") {
    e.width_exponents = get_doubles(c, "exponents");
  }

  if (has(c, "weights")) {
    e.network = std::make_shared<const NetworkParams>(load_params(get_string(c, "weights")));
    e.arch = e.network->arch;
  }
  if (has(c, "x1") || has(c, "x2")) {
    require(has(c, "x1") && has(c, "x2"), ErrorKind::InvalidArgument,
            "config keys 'x1' and 'x2' must be given together");
    e.fixed_endpoints.emplace_back(get_vector(c, "x1"), get_vector(c, "x2"));
  }

  if (command == "theorem1" && !e.width_exponents.empty()) {
    require(!e.network, ErrorKind::InvalidArgument,
            "'exponents' cannot be combined with 'weights'; set \"exponents\": [] to use the file");
    for (double b : get_doubles(c, "bases")) {
      require(std::isfinite(b) && b >= 1.0, ErrorKind::InvalidArgument, "bases must be >= 1");
      ArchSpec a = e.arch;
      a.hidden_widths = widths_for_base(e.width_exponents, b);
      a.validate();
    }
    require(!get_doubles(c, "bases").empty(), ErrorKind::InvalidArgument, "'bases' must not be empty");
  }
  e.validate();

  if (command == "gen" || command == "trace" || command == "sslreg" || command == "approx") {
    p.network = e.network ? e.network
                          : std::make_shared<const NetworkParams>(generate_params(e.arch, e.dist, e.seed));
  }
  if (command == "table1") {
    for (auto w : get_sizes(c, "last_widths")) {
      require(w >= 1, ErrorKind::InvalidArgument, "'last_widths' entries must be >= 1");
      require(!e.network, ErrorKind::InvalidArgument, "'last_widths' cannot be combined with 'weights'");
    }
  } else if (command == "regions") {
    const std::string mode = get_string(c, "mode");
    require(mode == "line" || mode == "grid2d", ErrorKind::InvalidArgument,
            "config key 'mode' must be line or grid2d");
    require(get_size(c, "resolution") >= 2, ErrorKind::InvalidArgument, "resolution must be >= 2");
    if (has(c, "slice")) {
      const json& s = c.at("slice");
      require(s.is_object() && s.contains("origin") && s.contains("u") && s.contains("v"),
              ErrorKind::InvalidArgument, "config key 'slice' needs origin, u and v");
      for (const char* k : {"origin", "u", "v"}) {
        require(get_vector(s, k).size() == static_cast<Eigen::Index>(e.arch.input_dim),
                ErrorKind::ShapeMismatch, fmt::format("slice.{} does not match the input dimension", k));
      }
    }
  } else if (command == "boundary") {
    require(get_double(c, "h") > 0.0, ErrorKind::InvalidArgument, "h must be positive");
  } else if (command == "sslreg") {
    if (has(c, "points") || has(c, "perturbations")) {
      require(has(c, "points") && has(c, "perturbations"), ErrorKind::InvalidArgument,
              "'points' and 'perturbations' must be given together");
      get_points(c, "points");
      get_points(c, "perturbations");
    } else {
      require(get_size(c, "unlabeled") >= 1, ErrorKind::InvalidArgument, "'unlabeled' must be >= 1");
      require(get_double(c, "eta") >= 0.0, ErrorKind::InvalidArgument, "'eta' must be >= 0");
    }
  } else if (command == "approx") {
    const ApproxKind kind = parse_approx_kind(get_string(c, "kind"));
    const ApproxTask task = parse_approx_task(get_string(c, "task"));
    require(get_size(c, "train_points") >= 1 && get_size(c, "eval_points") >= 1,
            ErrorKind::InvalidArgument, "'train_points' and 'eval_points' must be >= 1");
    require(get_double(c, "step") > 0.0 && get_double(c, "gradient_tolerance") > 0.0,
            ErrorKind::InvalidArgument, "'step' and 'gradient_tolerance' must be positive");
    get_size(c, "max_iterations");
    if (get_bool(c, "analytic")) {
      require(kind == ApproxKind::NodewiseLinear && task == ApproxTask::Regression,
              ErrorKind::InvalidArgument, "analytic mode needs kind nodewise-linear and task regression");
    }
    if (task == ApproxTask::Classification) {
      require(e.arch.output_count >= 2, ErrorKind::InvalidArgument,
              "classification needs a network with >= 2 outputs");
    }
    const std::size_t cols =
        design_width(kind, e.arch.hidden_widths.back(), e.arch.input_dim);
    require(cols <= kMaxDesignColumns, ErrorKind::CapExceeded,
            fmt::format("design would have {} columns (limit {})", cols, kMaxDesignColumns));
  }
  return p;
}

// ---------------------------------------------------------------------------

std::string fmt_d(double v) { return format_double(v); }

std::string join_sizes(const std::vector<std::size_t>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector uniform_point(Rng& rng, std::size_t dim, double lo, double hi) {
  Vector x(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(lo, hi);
  return x;
}

Matrix uniform_points(Rng& rng, std::size_t n, std::size_t dim) {
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

void run_gen(const Prepared& p, CommandResult& r) {
  r.artifacts.emplace_back("network.json", params_to_json(*p.network));
  r.summary["results"] = {{"parameter_count", p.network->arch.parameter_count()}};
}

void run_trace(const Prepared& p, CommandResult& r) {
  ExperimentConfig cfg = p.exp;
  cfg.network = p.network;
  // Replicate 0 keeps the master seed itself for the endpoint stream.
  const ReplicateDraw draw = draw_replicate(cfg, 0, 1);
  const auto& [x1, x2] = draw.endpoints.front();
  TraceOptions opts;
  opts.tol = cfg.tol;
  opts.output = cfg.output;
  opts.keep_patterns = false;
  const PathTrace trace = trace_path(*p.network, x1, x2, opts);
  r.artifacts.emplace_back("trace.csv", trace_csv_header() + trace_csv_rows(trace, 1));
  r.summary["results"] = {{"events", trace.events.size()},
                          {"segments", trace.segment_count()},
                          {"multi_flip_events", trace.multi_flip_count()},
                          {"uncertified_segments", trace.uncertified_segments},
                          {"flat_node_segments", trace.flat_node_segments},
                          {"path_length", trace.path_length()},
                          {"x1", vec_json(x1)},
                          {"x2", vec_json(x2)}};
}

void run_table1(const Prepared& p, const json& c, CommandResult& r) {
  std::vector<std::size_t> lasts = get_sizes(c, "last_widths");
  const bool sweep = !lasts.empty();
  if (!sweep) lasts.push_back(p.exp.arch.hidden_widths.back());

  std::string csv = "last_width,layer,width,count,share,share_se,expected_share,mean_abs\n";
  json runs = json::array();
  for (auto last : lasts) {
    ExperimentConfig cfg = p.exp;
    if (sweep) cfg.arch.hidden_widths.back() = last;
    const LayerStats s = run_layer_stats(cfg);
    json shares = json::array(), means = json::array();
    for (const auto& row : s.layers) {
      csv += fmt::format("{},{},{},{},{},{},{},{}\n", last, row.layer, row.width, row.count,
                         fmt_d(row.share), fmt_d(row.share_se), fmt_d(row.expected_share),
                         fmt_d(row.mean_abs));
      shares.push_back(row.share);
      means.push_back(row.mean_abs);
    }
    runs.push_back({{"last_width", last},
                    {"pooled_sd", s.pooled_sd},
                    {"single_flip_events", s.single_flip_events},
                    {"multi_flip_events", s.multi_flip_events},
                    {"shares", shares},
                    {"mean_abs", means}});
  }
  r.artifacts.emplace_back("table1.csv", std::move(csv));
  r.summary["results"] = {
      {"runs", runs},
      {"metric", p.exp.metric == JumpMetric::VectorNorm ? "vector-norm" : "abs-scalar"},
      {"note",
       "jump magnitudes are pooled over all layers and replicates and divided by their pooled "
       "sample standard deviation before the per-layer means are taken; multi-flip events are "
       "excluded from the shares"}};
}

void run_theorem1(const Prepared& p, const json& c, CommandResult& r) {
  const std::vector<double> bases = get_doubles(c, "bases");
  const RatioReport rep = theorem1_ratio(p.exp, bases);
  std::string csv =
      "base,widths,narrowest_layer,defined_replicates,undefined_replicates,median,q90,mean_regions,"
      "subsampled_replicates\n";
  std::string ratios = "base,replicate_index,ratio\n";
  json rows = json::array();
  for (const auto& row : rep.rows) {
    const std::string base = std::isnan(row.base) ? "" : fmt_d(row.base);
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", base, join_sizes(row.widths, ';'),
                       row.narrowest_layer, row.ratios.size(), row.undefined_replicates,
                       fmt_d(row.median), fmt_d(row.q90), fmt_d(row.mean_regions),
                       row.subsampled_replicates);
    for (std::size_t i = 0; i < row.ratios.size(); ++i) {
      ratios += fmt::format("{},{},{}\n", base, i + 1, fmt_d(row.ratios[i]));
    }
    rows.push_back({{"base", std::isnan(row.base) ? json(nullptr) : json(row.base)},
                    {"widths", row.widths},
                    {"median", row.median},
                    {"q90", row.q90}});
  }
  r.artifacts.emplace_back("theorem1.csv", std::move(csv));
  r.artifacts.emplace_back("theorem1_ratios.csv", std::move(ratios));
  r.summary["results"] = {
      {"rows", rows},
      {"paths_per_replicate", rep.paths_per_replicate},
      {"subsample_threshold", RatioReport::kSubsampleThreshold},
      {"subsample_size", RatioReport::kSubsampleSize},
      {"note",
       "the supremum over all linear regions is replaced by the regions visited along the "
       "sampled paths, so each ratio is a sampled lower bound of both maxima; above the "
       "subsample threshold (node, region) pairs are drawn uniformly with replacement"}};
}

void run_prop1(const Prepared& p, CommandResult& r) {
  const DegeneracyReport d = prop1_degeneracy(p.exp);
  std::string csv = "t_merge,events,multi_flip,fraction\n";
  csv += fmt::format("{},{},{},{}\n", fmt_d(d.t_merge), d.events, d.multi_flip, fmt_d(d.fraction));
  csv += fmt::format("{},{},{},{}\n", fmt_d(d.t_merge_fine), d.events_fine, d.multi_flip_fine,
                     fmt_d(d.fraction_fine));
  r.artifacts.emplace_back("prop1.csv", std::move(csv));
  r.summary["results"] = {{"traces", d.traces},       {"events", d.events},
                          {"multi_flip", d.multi_flip}, {"fraction", d.fraction},
                          {"events_fine", d.events_fine}, {"multi_flip_fine", d.multi_flip_fine},
                          {"fraction_fine", d.fraction_fine}};
}

void run_regions(const Prepared& p, const json& c, CommandResult& r) {
  const RegionMode mode = get_string(c, "mode") == "line" ? RegionMode::Line : RegionMode::Grid2d;
  std::optional<Slice2d> slice;
  if (has(c, "slice")) {
    const json& s = c.at("slice");
    slice = Slice2d{get_vector(s, "origin"), get_vector(s, "u"), get_vector(s, "v")};
  }
  const RegionCountReport rep = region_count(p.exp, mode, get_size(c, "resolution"), slice);
  std::string csv = "replicate_id,index,count\n";
  std::size_t index = 0, prev = 0;
  for (std::size_t i = 0; i < rep.counts.size(); ++i) {
    index = rep.count_replicate[i] == prev ? index + 1 : 1;
    prev = rep.count_replicate[i];
    csv += fmt::format("{},{},{}\n", rep.count_replicate[i], index, rep.counts[i]);
  }
  r.artifacts.emplace_back("regions.csv", std::move(csv));
  const auto [lo, hi] = std::minmax_element(rep.counts.begin(), rep.counts.end());
  double mean = 0.0;
  for (auto v : rep.counts) mean += static_cast<double>(v);
  mean /= static_cast<double>(rep.counts.size());
  r.summary["results"] = {{"mode", mode == RegionMode::Line ? "line" : "grid2d"},
                          {"slice_dim", rep.slice_dim},
                          {"min", *lo},
                          {"max", *hi},
                          {"mean", mean},
                          {"bound", rep.bound ? json(*rep.bound) : json(nullptr)},
                          {"bound_satisfied", rep.bound ? json(rep.bound_satisfied) : json(nullptr)}};
}

void run_boundary(const Prepared& p, const json& c, CommandResult& r) {
  const BoundaryReport b = boundary_stats(p.exp, get_double(c, "h"));
  const ArchSpec& arch = p.exp.network ? p.exp.network->arch : p.exp.arch;
  std::string csv = "layer,width,window_count,window_share,full_count,full_share\n";
  for (std::size_t l = 0; l < b.window_counts.size(); ++l) {
    csv += fmt::format("{},{},{},{},{},{}\n", l + 1, arch.width(l), b.window_counts[l],
                       fmt_d(b.window_share[l]), b.full_counts[l], fmt_d(b.full_share[l]));
  }
  r.artifacts.emplace_back("boundary.csv", std::move(csv));
  r.summary["results"] = {{"h", b.h},
                          {"narrowest_layer", b.narrowest_layer},
                          {"traces", b.traces},
                          {"crossings", b.crossings},
                          {"interval_crossings", b.interval_crossings},
                          {"replicates_with_crossing", b.replicates_with_crossing},
                          {"replicates_concentrated", b.replicates_concentrated}};
}

void run_sslreg(const Prepared& p, const json& c, CommandResult& r) {
  std::vector<Vector> points, etas;
  if (has(c, "points")) {
    points = get_points(c, "points");
    etas = get_points(c, "perturbations");
  } else {
    Rng rng(derive_seed(p.exp.seed, 3));
    const double eta = get_double(c, "eta");
    const std::size_t dim = p.network->arch.input_dim;
    for (std::size_t i = 0; i < get_size(c, "unlabeled"); ++i) {
      points.push_back(uniform_point(rng, dim, -1.0, 1.0));
      etas.push_back(uniform_point(rng, dim, -eta, eta));
    }
  }
  const double value = ssl_regularizer(*p.network, points, etas);
  std::string csv = "index,contribution\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double term = ssl_regularizer(*p.network, std::span(&points[i], 1), std::span(&etas[i], 1));
    csv += fmt::format("{},{}\n", i + 1, fmt_d(term));
  }
  r.artifacts.emplace_back("sslreg.csv", std::move(csv));
  r.summary["results"] = {
      {"value", value},
      {"unlabeled", points.size()},
      {"note", "the inner sum runs over every top-layer node j = 1..n_L"}};
}

void run_approx(const Prepared& p, const json& c, CommandResult& r) {
  const NetworkParams& net = *p.network;
  const ApproxKind kind = parse_approx_kind(get_string(c, "kind"));
  const ApproxTask task = parse_approx_task(get_string(c, "task"));
  Rng rng(derive_seed(p.exp.seed, 4));
  const Matrix train = uniform_points(rng, get_size(c, "train_points"), net.arch.input_dim);
  const Matrix eval = uniform_points(rng, get_size(c, "eval_points"), net.arch.input_dim);

  const IndicatorFeatures features = extract_features(net, train, p.exp.workers);
  Vector targets(train.rows());
  const Readout readout = make_readout(net, p.exp.output);
  for (Eigen::Index i = 0; i < train.rows(); ++i) {
    const Vector x = train.row(i).transpose();
    if (task == ApproxTask::Regression) {
      targets[i] = evaluate(net, x, readout);
    } else {
      Eigen::Index k = 0;
      forward(net, x).output.maxCoeff(&k);
      targets[i] = static_cast<double>(k + 1);
    }
  }
  FitSettings settings;
  settings.step = get_double(c, "step");
  settings.max_iterations = get_size(c, "max_iterations");
  settings.gradient_tolerance = get_double(c, "gradient_tolerance");
  const ApproxModel model = get_bool(c, "analytic")
                                ? fit_analytic(net, features, targets, p.exp.output)
                                : fit(features, targets, kind, task, settings);
  const FidelityReport train_rep = compare_report(net, model, train, p.exp.output);
  const FidelityReport eval_rep = compare_report(net, model, eval, p.exp.output);
  r.artifacts.emplace_back("model.json", model_to_json(model));
  r.artifacts.emplace_back("fidelity.csv", fidelity_csv(eval_rep));
  r.summary["results"] = {{"kind", to_string(kind)},
                          {"task", to_string(task)},
                          {"design_width", model.coefficients.cols()},
                          {"training_loss", model.training_loss},
                          {"iterations", model.iterations},
                          {"converged", model.converged},
                          {"train_agreement", train_rep.agreement},
                          {"eval_agreement", eval_rep.agreement},
                          {"eval_mse", task == ApproxTask::Regression ? json(eval_rep.mse) : json(nullptr)}};
}

}  // namespace

std::vector<std::string> command_names() { return kCommands; }

json resolve_config(const std::string& command, const json& config) {
  require(std::find(kCommands.begin(), kCommands.end(), command) != kCommands.end(),
          ErrorKind::InvalidArgument, fmt::format("unknown command '{}'", command));
  require(config.is_null() || config.is_object(), ErrorKind::InvalidArgument,
          "config must be a JSON object");
  json resolved = command_defaults(command);
  if (config.is_object()) {
    for (const auto& [k, v] : config.items()) {
      require(resolved.contains(k), ErrorKind::InvalidArgument,
              fmt::format("unknown config key '{}' for command '{}'", k, command));
      resolved[k] = v;
    }
    if (command == "theorem1" && config.contains("widths") && !config.contains("exponents")) {
      resolved["exponents"] = json::array();
    }
  }
  if (has(resolved, "weights")) {
    const NetworkParams net = load_params(get_string(resolved, "weights"));
    resolved["input_dim"] = net.arch.input_dim;
    resolved["widths"] = net.arch.hidden_widths;
    resolved["outputs"] = net.arch.output_count;
    if (command == "theorem1" && !(config.is_object() && config.contains("exponents"))) {
      resolved["exponents"] = json::array();
    }
  }
  if (command == "theorem1" && resolved["exponents"].empty() && resolved["widths"].empty() &&
      resolved["weights"].is_null()) {
    fail(ErrorKind::InvalidArgument, "theorem1 needs 'exponents', 'widths' or 'weights'");
  }
  prepare(command, resolved);
  return resolved;
}

CommandResult run_command(const std::string& command, const json& config) {
  const auto start = std::chrono::steady_clock::now();
  const json c = resolve_config(command, config);
  const Prepared p = prepare(command, c);

  CommandResult r;
  r.summary = {{"command", command},
               {"version", library_version()},
               {"config", c},
               {"seed", p.exp.seed},
               {"replicate_seed_rule", "seed xor b for replicate b = 1..B"}};
  if (c.contains("t_merge")) {
    r.summary["tolerances"] = {{"t_merge", p.exp.tol.t_merge},
                               {"slope_floor", p.exp.tol.slope_floor},
                               {"step_nudge", p.exp.tol.step_nudge},
                               {"max_events", p.exp.tol.max_events}};
  }
  if (c.contains("workers")) r.summary["workers"] = resolve_workers(p.exp.workers);

  if (command == "gen") run_gen(p, r);
  else if (command == "trace") run_trace(p, r);
  else if (command == "table1") run_table1(p, c, r);
  else if (command == "theorem1") run_theorem1(p, c, r);
  else if (command == "prop1") run_prop1(p, r);
  else if (command == "regions") run_regions(p, c, r);
  else if (command == "boundary") run_boundary(p, c, r);
  else if (command == "sslreg") run_sslreg(p, c, r);
  else if (command == "approx") run_approx(p, c, r);

  r.summary["runtime_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace relugrad
