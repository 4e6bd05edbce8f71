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

// Exact tracing of g(t) = f(x1 + t (x2 - x1)), t in [0, 1].
//
// Inside one linear region every preactivation is affine in t. The sweep
// keeps (intercept, slope) for every node under the current pattern, jumps
// to the smallest root in the crossing direction, flips the node(s) and
// rebuilds the coefficients of the layers above. Nothing is sampled on a
// grid, so arbitrarily close kinks are still separated.

#include <cstddef>
#include <string>
#include <vector>

#include "relugrad/network.hpp"

namespace relugrad {

struct TraceTolerances {
  double t_merge = 1e-12;      // roots closer than this form one event
  double slope_floor = 1e-14;  // |dz/dt| below this never crosses
  double step_nudge = 1e-10;   // offset at which the post-event pattern is checked
  std::size_t max_events = 1'000'000;

  void validate() const;
};

enum class FlipDirection { OffToOn, OnToOff };

struct NodeFlip {
  NodeId node;
  FlipDirection direction = FlipDirection::OffToOn;
};

struct KinkEvent {
  double t = 0.0;
  std::vector<NodeFlip> flips;  // flips.front() is the node that triggered the event
  double jump_scalar = 0.0;     // g'(t+) - g'(t-)
  Vector jump_vector;           // grad on the right minus grad on the left
  double normalized_scalar = 0.0;
  bool multi_flip = false;

  NodeId node() const { return flips.front().node; }
};

struct SegmentAffine {
  double intercept = 0.0;  // g(t) = intercept + slope * t on the segment
  double slope = 0.0;
};

struct TraceOptions {
  TraceTolerances tol;
  OutputSelector output;
  bool jump_vectors = true;    // needed for the vector-norm jump metric
  bool keep_patterns = true;   // store the pattern of every segment
};

struct PathTrace {
  Vector x1;
  Vector x2;
  std::vector<KinkEvent> events;
  std::vector<double> breakpoints;                // 0, t_1, ..., t_M, 1
  std::vector<ActivationPattern> region_patterns;  // one per segment when kept
  std::vector<SegmentAffine> segment_affine;       // one per segment
  std::size_t flat_node_segments = 0;   // (node, segment) pairs with z identically 0
  std::size_t uncertified_segments = 0; // midpoint pattern disagreed with the sweep

  std::size_t segment_count() const noexcept { return segment_affine.size(); }
  double path_length() const { return (x2 - x1).norm(); }
  std::size_t multi_flip_count() const noexcept;

  /// Piecewise-affine reconstruction of g.
  double g(double t) const;
};

PathTrace trace_path(const NetworkParams& params, const Vector& x1, const Vector& x2,
                     const TraceOptions& options = {});

double eval_path(const NetworkParams& params, const Vector& x1, const Vector& x2, double t,
                 const OutputSelector& selector = {});

/// A root of g; `begin == end` for an isolated root, otherwise g vanishes on
/// the whole interval.
struct ZeroCrossing {
  double begin = 0.0;
  double end = 0.0;

  bool is_interval() const noexcept { return end > begin; }
};

std::vector<ZeroCrossing> zero_crossings(const PathTrace& trace);

struct LayerCounts {
  std::vector<std::size_t> per_layer;  // single-flip events by layer of the flipped node
  std::size_t multi_flip = 0;          // excluded from per_layer

  std::size_t total() const noexcept;
  std::vector<double> percentages() const;  // zeros when total() == 0
};

/// Single-flip events over the whole trace, by layer.
LayerCounts layer_event_counts(const PathTrace& trace, std::size_t layers);

/// Events with t in the open window (t0 - h, t0 + h), by layer.
LayerCounts nodes_near(const PathTrace& trace, std::size_t layers, double t0, double h);

/// CSV rows (no header) for one trace, columns as in trace_csv_header().
std::string trace_csv_rows(const PathTrace& trace, std::size_t replicate_id);
std::string trace_csv_header();

}  // namespace relugrad
