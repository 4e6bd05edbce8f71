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
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "nets.hpp"
#include "relugrad/error.hpp"
#include "relugrad/rng.hpp"
#include "relugrad/tracer.hpp"

using namespace relugrad;
using namespace relugrad::testing;

namespace {

Vector random_point(Rng& rng, std::size_t p) {
  Vector x(static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  return x;
}

struct Case {
  NetworkParams params;
  Vector x1, x2;
};

std::vector<Case> random_cases(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Case> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = arch(2 + i % 5, {12 + i % 7, 8, 5});
    out.push_back({random_net(a, seed * 1000 + i), random_point(rng, a.input_dim), random_point(rng, a.input_dim)});
  }
  return out;
}

}  // namespace

TEST_SUITE("path_tracer") {

TEST_CASE("two-kink net: events, attribution and jumps") {
  const auto p = two_kink_net();
  const auto tr = trace_path(p, vec({-1.0}), vec({1.0}));
  REQUIRE(tr.events.size() == 2);
  CHECK(tr.events[0].t == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(tr.events[0].node() == NodeId{0, 0});
  CHECK(tr.events[0].flips[0].direction == FlipDirection::OffToOn);
  CHECK(tr.events[0].jump_scalar == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tr.events[1].t == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(tr.events[1].node() == NodeId{0, 1});
  CHECK(tr.events[1].flips[0].direction == FlipDirection::OnToOff);
  CHECK(tr.events[1].jump_scalar == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tr.events[1].normalized_scalar == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tr.segment_count() == 3);
  CHECK(tr.multi_flip_count() == 0);
}

TEST_CASE("absolute-value net: one multi-flip event") {
  const auto tr = trace_path(abs_net(), vec({-1.0}), vec({1.0}));
  REQUIRE(tr.events.size() == 1);
  CHECK(tr.events[0].t == doctest::Approx(0.5));
  CHECK(tr.events[0].multi_flip);
  CHECK(tr.events[0].flips.size() == 2);
  std::set<std::size_t> nodes;
  for (const auto& f : tr.events[0].flips) nodes.insert(f.node.index);
  CHECK(nodes == std::set<std::size_t>{0, 1});
  CHECK(tr.events[0].jump_scalar == doctest::Approx(4.0));
}

TEST_CASE("segment reconstruction matches forward evaluation") {
  for (const auto& c : random_cases(10, 3)) {
    const auto tr = trace_path(c.params, c.x1, c.x2);
    for (int k = 0; k <= 100; ++k) {
      const double t = k / 100.0;
      CHECK(std::abs(tr.g(t) - eval_path(c.params, c.x1, c.x2, t)) <= 1e-8);
    }
  }
}

TEST_CASE("eval_path endpoints and midpoint") {
  const auto c = random_cases(1, 4).front();
  CHECK(eval_path(c.params, c.x1, c.x2, 0.0) == forward(c.params, c.x1).output[0]);
  CHECK(eval_path(c.params, c.x1, c.x2, 1.0) == forward(c.params, c.x2).output[0]);
  CHECK(eval_path(abs_net(), vec({-1.0}), vec({1.0}), 0.5) == 0.0);
  CHECK_THROWS_AS(eval_path(abs_net(), vec({-1.0}), vec({1.0, 2.0}), 0.5), Error);
}

TEST_CASE("structural invariants of random traces") {
  for (const auto& c : random_cases(20, 5)) {
    const auto tr = trace_path(c.params, c.x1, c.x2);
    CHECK(tr.segment_count() == tr.events.size() + 1);
    CHECK(tr.region_patterns.size() == tr.segment_count());
    CHECK(tr.uncertified_segments == 0);
    CHECK(tr.breakpoints.front() == 0.0);
    CHECK(tr.breakpoints.back() == 1.0);
    for (std::size_t m = 0; m < tr.events.size(); ++m) {
      const auto& e = tr.events[m];
      CHECK(e.t > 0.0);
      CHECK(e.t < 1.0);
      if (m) CHECK(e.t > tr.events[m - 1].t);
      CHECK(e.normalized_scalar == doctest::Approx(e.jump_scalar / tr.path_length()).epsilon(1e-14));
      // Continuity across the event.
      const auto& l = tr.segment_affine[m];
      const auto& r = tr.segment_affine[m + 1];
      const double gl = l.intercept + l.slope * e.t;
      const double gr = r.intercept + r.slope * e.t;
      CHECK(std::abs(gl - gr) <= 1e-9 * (1.0 + std::abs(gl)));
      // Pattern constant on each segment: certified at the midpoint.
      const double mid = 0.5 * (tr.breakpoints[m] + tr.breakpoints[m + 1]);
      const Vector x = c.x1 + mid * (c.x2 - c.x1);
      CHECK(activation_pattern(forward(c.params, x)) == tr.region_patterns[m]);
    }
  }
}

TEST_CASE("completeness against a dense grid") {
  for (const auto& c : random_cases(5, 6)) {
    const auto tr = trace_path(c.params, c.x1, c.x2);
    std::size_t changes = 0;
    ActivationPattern prev;
    std::set<std::string> distinct;
    for (int k = 0; k < 10'000; ++k) {
      const double t = k / 9999.0;
      const auto r = activation_pattern(forward(c.params, Vector(c.x1 + t * (c.x2 - c.x1))));
      if (k && !(r == prev)) ++changes;
      distinct.insert(r.key());
      prev = r;
    }
    CHECK(tr.events.size() + 1 >= distinct.size());
    CHECK(tr.events.size() >= changes);
  }
}

TEST_CASE("jump attribution equals the node-flip formula") {
  std::size_t checked = 0;
  for (const auto& c : random_cases(20, 7)) {
    const auto tr = trace_path(c.params, c.x1, c.x2);
    for (std::size_t m = 0; m < tr.events.size(); ++m) {
      const auto& e = tr.events[m];
      if (e.multi_flip) continue;
      const Vector formula = -flip_gradient_diff(c.params, tr.region_patterns[m], e.node());
      CHECK((e.jump_vector - formula).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(e.jump_scalar == doctest::Approx(e.jump_vector.dot(c.x2 - c.x1)).epsilon(1e-10));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("scale equivariance") {
  for (const auto& c : random_cases(5, 8)) {
    const Vector mid = 0.5 * (c.x1 + c.x2);
    const Vector y1 = mid + 2.0 * (c.x1 - mid);
    const Vector y2 = mid + 2.0 * (c.x2 - mid);
    const auto a = trace_path(c.params, c.x1, c.x2);
    const auto b = trace_path(c.params, y1, y2);
    // The wider segment contains the narrow one at t in [1/4, 3/4].
    std::vector<const KinkEvent*> inner;
    for (const auto& e : b.events) {
      if (e.t > 0.25 && e.t < 0.75) inner.push_back(&e);
    }
    REQUIRE(inner.size() == a.events.size());
    for (std::size_t m = 0; m < a.events.size(); ++m) {
      CHECK(inner[m]->node() == a.events[m].node());
      CHECK(inner[m]->jump_scalar == doctest::Approx(2.0 * a.events[m].jump_scalar).epsilon(1e-9));
      CHECK(inner[m]->normalized_scalar == doctest::Approx(a.events[m].normalized_scalar).epsilon(1e-9));
      CHECK((inner[m]->jump_vector - a.events[m].jump_vector).norm() <= 1e-9);
    }
  }
}

TEST_CASE("no spurious multi-flip events at random parameters") {
  std::size_t events = 0, multi = 0;
  for (const auto& c : random_cases(20, 9)) {
    const auto tr = trace_path(c.params, c.x1, c.x2);
    events += tr.events.size();
    multi += tr.multi_flip_count();
  }
  CHECK(events > 100);
  CHECK(multi == 0);
}

TEST_CASE("a node with identically zero preactivation never fires") {
  auto p = random_net(arch(2, {4, 3}), 10);
  p.weights[0].row(2).setZero();
  p.biases[0][2] = 0.0;
  const auto tr = trace_path(p, vec({-1.0, -0.5}), vec({0.8, 0.9}));
  for (const auto& e : tr.events) {
    for (const auto& f : e.flips) CHECK_FALSE(f.node == NodeId{0, 2});
  }
  CHECK(tr.flat_node_segments >= tr.segment_count());
}

TEST_CASE("constant network has no events") {
  NetworkParams c = NetworkParams::zeros(arch(2, {3}));
  c.biases[0] << 0.5, -0.5, 0.25;
  const auto tr = trace_path(c, vec({-1.0, 0.0}), vec({1.0, 1.0}));
  CHECK(tr.events.empty());
  CHECK(tr.segment_count() == 1);
}

TEST_CASE("trace errors") {
  const auto a = abs_net();
  CHECK_THROWS_AS(trace_path(a, vec({0.3}), vec({0.3})), Error);
  CHECK_THROWS_AS(trace_path(a, vec({0.3}), vec({0.3, 1.0})), Error);
  const auto p = hinge_net({-0.9, -0.5, 0.0, 0.5, 0.9});
  TraceOptions o;
  o.tol.max_events = 3;
  try {
    trace_path(p, vec({-1.0}), vec({1.0}), o);
    FAIL("expected the event budget to trip");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CapExceeded);
  }
  o.tol.max_events = 1000;
  o.tol.t_merge = 0.0;
  CHECK_THROWS_AS(trace_path(p, vec({-1.0}), vec({1.0}), o), Error);
}

TEST_CASE("scalar-only traces skip jump vectors") {
  const auto c = random_cases(1, 11).front();
  TraceOptions o;
  o.jump_vectors = false;
  const auto a = trace_path(c.params, c.x1, c.x2, o);
  const auto b = trace_path(c.params, c.x1, c.x2);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t m = 0; m < a.events.size(); ++m) {
    CHECK(a.events[m].jump_vector.size() == 0);
    CHECK(a.events[m].jump_scalar == doctest::Approx(b.events[m].jump_scalar).epsilon(1e-9));
  }
}

TEST_CASE("zero crossings") {
  const auto z = zero_crossings(trace_path(abs_net(), vec({-1.0}), vec({1.0})));
  REQUIRE(z.size() == 1);
  CHECK(z[0].begin == 0.5);
  CHECK_FALSE(z[0].is_interval());

  NetworkParams pos = abs_net();
  pos.output_bias << 0.1;
  CHECK(zero_crossings(trace_path(pos, vec({-1.0}), vec({1.0}))).empty());

  // g = ReLU(x) is identically zero for x in [-1, 0].
  NetworkParams relu = NetworkParams::zeros(arch(1, {1}));
  relu.weights[0](0, 0) = 1.0;
  relu.output_weights << 1.0;
  const auto flat = zero_crossings(trace_path(relu, vec({-1.0}), vec({1.0})));
  REQUIRE(flat.size() == 1);
  CHECK(flat[0].is_interval());
  CHECK(flat[0].begin == 0.0);
  CHECK(flat[0].end == doctest::Approx(0.5));

  for (const auto& c : random_cases(20, 12)) {
    const auto tr = trace_path(c.params, c.x1, c.x2);
    double gmax = 0.0;
    for (int k = 0; k <= 100; ++k) gmax = std::max(gmax, std::abs(tr.g(k / 100.0)));
    for (const auto& zc : zero_crossings(tr)) {
      CHECK(std::abs(eval_path(c.params, c.x1, c.x2, zc.begin)) <= 1e-9 * (1.0 + gmax));
    }
  }
}

TEST_CASE("nodes_near windows") {
  const auto c = random_cases(1, 13).front();
  const auto tr = trace_path(c.params, c.x1, c.x2);
  const auto full = layer_event_counts(tr, 3);
  const auto all = nodes_near(tr, 3, 0.5, 0.5);
  CHECK(all.per_layer == full.per_layer);
  const auto none = nodes_near(tr, 3, 0.5, 1e-15);
  CHECK(none.total() == 0);
  const auto pct = full.percentages();
  double s = 0.0;
  for (double v : pct) s += v;
  CHECK(s == doctest::Approx(100.0).epsilon(1e-12));
  CHECK_THROWS_AS(nodes_near(tr, 3, 0.5, 0.0), Error);
}

TEST_CASE("CSV export") {
  const auto tr = trace_path(two_kink_net(), vec({-1.0}), vec({1.0}));
  const std::string csv = trace_csv_header() + trace_csv_rows(tr, 4);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] ==
        "replicate_id,event_index,t,layer,node,direction,jump_scalar,jump_vector_norm,normalized_scalar,multi_flip");
  CHECK(lines[1].rfind("4,1,0.5,1,1,off->on,", 0) == 0);
  CHECK(lines[2].rfind("4,2,0.59999999999999998,1,2,on->off,", 0) == 0);
}

}  // TEST_SUITE
