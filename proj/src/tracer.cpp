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
#include "relugrad/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "relugrad/error.hpp"
#include "relugrad/params_io.hpp"

namespace relugrad {

void TraceTolerances::validate() const {
  require(t_merge > 0.0 && t_merge < 1.0, ErrorKind::InvalidArgument, "t_merge must lie in (0, 1)");
  require(slope_floor > 0.0, ErrorKind::InvalidArgument, "slope_floor must be positive");
  require(step_nudge > 0.0, ErrorKind::InvalidArgument, "step_nudge must be positive");
  require(max_events >= 1, ErrorKind::InvalidArgument, "max_events must be >= 1");
}

std::size_t PathTrace::multi_flip_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : events) n += e.multi_flip ? 1 : 0;
  return n;
}

double PathTrace::g(double t) const {
  const auto it = std::upper_bound(breakpoints.begin() + 1, breakpoints.end() - 1, t);
  const auto seg = static_cast<std::size_t>(it - breakpoints.begin()) - 1;
  return segment_affine[seg].intercept + segment_affine[seg].slope * t;
}

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

// Affine preactivations z(t) = c + s t of every node under the current
// pattern, rebuilt layer by layer as bits change.
class Sweep {
 public:
  Sweep(const NetworkParams& params, const Readout& readout, const Vector& x1, const Vector& dir,
        const TraceTolerances& tol)
      : params_(params), readout_(readout), tol_(tol), pattern_(params.arch) {
    const std::size_t L = params.arch.depth();
    coef_.resize(L);
    input_.resize(L);
    Matrix base(x1.size(), 2);
    base.col(0) = x1;
    base.col(1) = dir;
    input_[0] = std::move(base);
    for (std::size_t l = 0; l < L; ++l) {
      compute_layer(l);
      decide_initial_bits(l);
      if (l + 1 < L) input_[l + 1] = masked(l);
    }
  }

  const ActivationPattern& pattern() const { return pattern_; }
  ActivationPattern& pattern() { return pattern_; }

  double intercept(std::size_t l, Eigen::Index j) const { return coef_[l](j, 0); }
  double slope(std::size_t l, Eigen::Index j) const { return coef_[l](j, 1); }

  /// Root of node (l, j) in its crossing direction, or +inf.
  double root(std::size_t l, Eigen::Index j, bool on) const {
    const double c = intercept(l, j);
    const double s = slope(l, j);
    if (on ? s < -tol_.slope_floor : s > tol_.slope_floor) return -c / s;
    return kNever;
  }

  bool flat(std::size_t l, Eigen::Index j) const {
    return std::abs(slope(l, j)) <= tol_.slope_floor && std::abs(intercept(l, j)) <= tol_.slope_floor;
  }

  /// Recompute coefficients of every layer above `layer`.
  void rebuild_above(std::size_t layer) {
    for (std::size_t l = layer + 1; l < params_.arch.depth(); ++l) {
      input_[l] = masked(l - 1);
      compute_layer(l);
    }
  }

  SegmentAffine readout_affine() const {
    const std::size_t top = params_.arch.depth() - 1;
    const auto bits = pattern_.layer(top);
    SegmentAffine a{readout_.bias, 0.0};
    for (Eigen::Index j = 0; j < coef_[top].rows(); ++j) {
      if (!bits[static_cast<std::size_t>(j)]) continue;
      a.intercept += readout_.weights[j] * intercept(top, j);
      a.slope += readout_.weights[j] * slope(top, j);
    }
    return a;
  }

  /// True when every node's sign at `t` agrees with its bit.
  bool certify(double t) const {
    for (std::size_t l = 0; l < params_.arch.depth(); ++l) {
      const auto bits = pattern_.layer(l);
      for (Eigen::Index j = 0; j < coef_[l].rows(); ++j) {
        const bool on = intercept(l, j) + slope(l, j) * t >= 0.0;
        if (on != static_cast<bool>(bits[static_cast<std::size_t>(j)])) return false;
      }
    }
    return true;
  }

 private:
  void compute_layer(std::size_t l) {
    coef_[l].noalias() = params_.weights[l] * input_[l];
    coef_[l].col(0) += params_.biases[l];
  }

  Eigen::MatrixXd masked(std::size_t l) const {
    Eigen::MatrixXd m = coef_[l];
    const auto bits = pattern_.layer(l);
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      if (!bits[static_cast<std::size_t>(j)]) m.row(j).setZero();
    }
    return m;
  }

  // Pattern on (0, eps): a root within t_merge of the start is resolved by
  // the direction of travel.
  void decide_initial_bits(std::size_t l) {
    auto bits = pattern_.layer(l);
    for (Eigen::Index j = 0; j < coef_[l].rows(); ++j) {
      const double c = intercept(l, j);
      const double s = slope(l, j);
      bool on = c >= 0.0;
      if (std::abs(s) > tol_.slope_floor && -c / s >= 0.0 && -c / s <= tol_.t_merge) on = s > 0.0;
      if (c == 0.0 && s != 0.0) on = s > 0.0;
      bits[static_cast<std::size_t>(j)] = on ? 1 : 0;
    }
  }

  const NetworkParams& params_;
  const Readout& readout_;
  TraceTolerances tol_;
  ActivationPattern pattern_;
  std::vector<Eigen::MatrixXd> coef_;   // n_l x 2: intercept, slope
  std::vector<Eigen::MatrixXd> input_;  // fan_in x 2: masked lower layer (or x1, dir)
};

struct Candidate {
  double t;
  NodeId node;
};

}  // namespace

PathTrace trace_path(const NetworkParams& params, const Vector& x1, const Vector& x2,
                     const TraceOptions& options) {
  const auto& tol = options.tol;
  tol.validate();
  const auto p = static_cast<Eigen::Index>(params.arch.input_dim);
  require(x1.size() == p && x2.size() == p, ErrorKind::ShapeMismatch,
          fmt::format("endpoints must have dimension {}", p));
  const Vector dir = x2 - x1;
  const double length = dir.norm();
  require(length > 1e-12, ErrorKind::InvalidArgument, "endpoints coincide");

  const Readout readout = make_readout(params, options.output);
  const std::size_t L = params.arch.depth();

  PathTrace trace;
  trace.x1 = x1;
  trace.x2 = x2;
  trace.breakpoints.push_back(0.0);

  Sweep sweep(params, readout, x1, dir, tol);
  Vector grad_left;
  if (options.jump_vectors) grad_left = gradient_of_region(params, sweep.pattern(), readout);

  std::vector<Candidate> candidates;
  std::vector<std::uint8_t> flipped_now(sweep.pattern().node_count(), 0);
  double t_cur = 0.0;

  auto close_segment = [&](double t_end) {
    if (!sweep.certify(0.5 * (t_cur + t_end))) ++trace.uncertified_segments;
    trace.segment_affine.push_back(sweep.readout_affine());
    if (options.keep_patterns) trace.region_patterns.push_back(sweep.pattern());
    trace.breakpoints.push_back(t_end);
  };

  for (;;) {
    candidates.clear();
    double t_next = kNever;
    for (std::size_t l = 0; l < L; ++l) {
      const auto bits = sweep.pattern().layer(l);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(bits.size()); ++j) {
        if (sweep.flat(l, j)) ++trace.flat_node_segments;
        double r = sweep.root(l, j, bits[static_cast<std::size_t>(j)] != 0);
        if (r == kNever || r >= 1.0) continue;
        r = std::max(r, t_cur);
        candidates.push_back({r, {l, static_cast<std::size_t>(j)}});
        t_next = std::min(t_next, r);
      }
    }
    if (t_next == kNever) {
      close_segment(1.0);
      break;
    }
    close_segment(t_next);
    require(trace.events.size() < tol.max_events, ErrorKind::CapExceeded,
            fmt::format("trace exceeded the event budget of {}", tol.max_events));

    KinkEvent event;
    event.t = t_next;
    const SegmentAffine left_affine = trace.segment_affine.back();

    // Simultaneous roots, earliest first so flips.front() triggered the event.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return a.t < b.t || (a.t == b.t && a.node < b.node);
    });
    std::size_t lowest = L;
    std::fill(flipped_now.begin(), flipped_now.end(), 0);
    auto flip = [&](NodeId node) {
      const bool was_on = sweep.pattern().active(node);
      sweep.pattern().set(node, !was_on);
      flipped_now[sweep.pattern().flat_index(node)] = 1;
      event.flips.push_back(
          {node, was_on ? FlipDirection::OnToOff : FlipDirection::OffToOn});
    };
    for (const auto& c : candidates) {
      if (c.t > t_next + tol.t_merge) break;
      flip(c.node);
      lowest = std::min(lowest, c.node.layer);
    }
    sweep.rebuild_above(lowest);

    // Nodes above the flipped ones whose rebuilt preactivation already
    // disagrees with their bit just after the event cross at the same t.
    const double t_check = t_next + tol.step_nudge;
    for (std::size_t l = lowest + 1; l < L; ++l) {
      bool changed = false;
      const auto bits = sweep.pattern().layer(l);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(bits.size()); ++j) {
        const NodeId node{l, static_cast<std::size_t>(j)};
        if (flipped_now[sweep.pattern().flat_index(node)]) continue;
        if (sweep.flat(l, j)) continue;
        const bool on = sweep.intercept(l, j) + sweep.slope(l, j) * t_check >= 0.0;
        if (on != static_cast<bool>(bits[static_cast<std::size_t>(j)])) {
          flip(node);
          changed = true;
        }
      }
      if (changed) sweep.rebuild_above(l);
    }

    event.multi_flip = event.flips.size() > 1;
    if (options.jump_vectors) {
      Vector grad_right = gradient_of_region(params, sweep.pattern(), readout);
      event.jump_vector = grad_right - grad_left;
      event.jump_scalar = event.jump_vector.dot(dir);
      grad_left = std::move(grad_right);
    } else {
      event.jump_scalar = sweep.readout_affine().slope - left_affine.slope;
    }
    event.normalized_scalar = event.jump_scalar / length;
    trace.events.push_back(std::move(event));
    t_cur = t_next;
  }
  return trace;
}

double eval_path(const NetworkParams& params, const Vector& x1, const Vector& x2, double t,
                 const OutputSelector& selector) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::InvalidArgument, "t must lie in [0, 1]");
  const auto p = static_cast<Eigen::Index>(params.arch.input_dim);
  require(x1.size() == p && x2.size() == p, ErrorKind::ShapeMismatch,
          fmt::format("endpoints must have dimension {}", p));
  const Vector x = x1 + t * (x2 - x1);
  return evaluate(params, x, make_readout(params, selector));
}

std::vector<ZeroCrossing> zero_crossings(const PathTrace& trace) {
  std::vector<ZeroCrossing> out;
  double scale = 1.0;
  for (std::size_t k = 0; k < trace.segment_count(); ++k) {
    scale = std::max(scale, 1.0 + std::abs(trace.segment_affine[k].intercept +
                                           trace.segment_affine[k].slope * trace.breakpoints[k]));
  }
  const double zero_tol = 1e-14 * scale;

  auto add_point = [&out](double t) {
    if (!out.empty() && t <= out.back().end + 1e-12) return;
    out.push_back({t, t});
  };
  for (std::size_t k = 0; k < trace.segment_count(); ++k) {
    const auto [c, s] = trace.segment_affine[k];
    const double a = trace.breakpoints[k];
    const double b = trace.breakpoints[k + 1];
    const double ga = c + s * a;
    const double gb = c + s * b;
    if (std::abs(ga) <= zero_tol && std::abs(gb) <= zero_tol) {
      if (!out.empty() && out.back().end >= a - 1e-12) {
        out.back().end = b;
      } else {
        out.push_back({a, b});
      }
      continue;
    }
    if (ga == 0.0) {
      add_point(a);
    } else if (gb == 0.0) {
      add_point(b);
    } else if ((ga < 0.0) != (gb < 0.0)) {
      add_point(std::clamp(-c / s, a, b));
    }
  }
  return out;
}

std::size_t LayerCounts::total() const noexcept {
  std::size_t n = 0;
  for (auto c : per_layer) n += c;
  return n;
}

std::vector<double> LayerCounts::percentages() const {
  std::vector<double> out(per_layer.size(), 0.0);
  const auto n = total();
  if (n == 0) return out;
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    out[l] = 100.0 * static_cast<double>(per_layer[l]) / static_cast<double>(n);
  }
  return out;
}

namespace {

LayerCounts count_events(const PathTrace& trace, std::size_t layers, double lo, double hi) {
  LayerCounts counts;
  counts.per_layer.assign(layers, 0);
  for (const auto& e : trace.events) {
    if (!(e.t > lo && e.t < hi)) continue;
    if (e.multi_flip) {
      ++counts.multi_flip;
    } else {
      ++counts.per_layer.at(e.node().layer);
    }
  }
  return counts;
}

}  // namespace

LayerCounts layer_event_counts(const PathTrace& trace, std::size_t layers) {
  return count_events(trace, layers, -kNever, kNever);
}

LayerCounts nodes_near(const PathTrace& trace, std::size_t layers, double t0, double h) {
  require(h > 0.0, ErrorKind::InvalidArgument, "window half-width h must be positive");
  return count_events(trace, layers, t0 - h, t0 + h);
}

std::string trace_csv_header() {
  return "replicate_id,event_index,t,layer,node,direction,jump_scalar,jump_vector_norm,"
         "normalized_scalar,multi_flip\n";
}

std::string trace_csv_rows(const PathTrace& trace, std::size_t replicate_id) {
  std::string out;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& e = trace.events[i];
    const auto& f = e.flips.front();
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", replicate_id, i + 1, format_double(e.t),
                       f.node.layer + 1, f.node.index + 1,
                       f.direction == FlipDirection::OffToOn ? "off->on" : "on->off",
                       format_double(e.jump_scalar),
                       e.jump_vector.size() ? format_double(e.jump_vector.norm()) : std::string(),
                       format_double(e.normalized_scalar), e.multi_flip ? 1 : 0);
  }
  return out;
}

}  // namespace relugrad
