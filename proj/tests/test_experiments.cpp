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
#include <numeric>

#include "nets.hpp"
#include "relugrad/error.hpp"
#include "relugrad/experiments.hpp"

using namespace relugrad;
using namespace relugrad::testing;

namespace {

ExperimentConfig small_config(std::vector<std::size_t> widths, std::size_t p = 3, std::size_t B = 20) {
  ExperimentConfig c;
  c.arch = arch(p, std::move(widths));
  c.dist = ParamDistribution::truncated_gaussian(1.0, 1.0);
  c.replicates = B;
  c.paths_per_replicate = 3;
  c.workers = 1;
  return c;
}

ExperimentConfig fixed_network_config(const NetworkParams& net, Vector x1, Vector x2) {
  ExperimentConfig c;
  c.network = std::make_shared<const NetworkParams>(net);
  c.fixed_endpoints.emplace_back(std::move(x1), std::move(x2));
  c.replicates = 1;
  c.paths_per_replicate = 1;
  c.workers = 1;
  return c;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config validation") {
  auto c = small_config({4, 2});
  c.replicates = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config({4, 2});
  c.width_exponents = {2.0, 2.0};
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config({4, 2});
  c.output.output = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(small_config({4, 2}).replicate_seed(3) == (7u ^ 3u));
}

TEST_CASE("width generator and quantiles") {
  const std::vector<double> alpha{2.0, 1.0};
  CHECK(widths_for_base(alpha, 4.0) == std::vector<std::size_t>{16, 4});
  CHECK(widths_for_base(alpha, 12.0) == std::vector<std::size_t>{144, 12});
  CHECK_THROWS_AS(widths_for_base(std::vector<double>{-1.0}, 4.0), Error);
  // Frozen from numpy's default (linear) quantile.
  CHECK(quantile({3.0, 1.0, 4.0, 1.5, 9.0}, 0.9) == doctest::Approx(7.0));
  CHECK(quantile({3.0, 1.0, 4.0, 1.5}, 0.5) == doctest::Approx(2.25));
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
}

TEST_CASE("single hidden layer takes every event") {
  const auto s = run_layer_stats(small_config({6}));
  REQUIRE(s.layers.size() == 1);
  CHECK(s.layers[0].share == 100.0);
}

TEST_CASE("layer counts equal a direct recount of the traces") {
  auto c = small_config({4, 2}, 2);
  const auto s = run_layer_stats(c);
  std::vector<std::size_t> recount(2, 0);
  std::size_t multi = 0;
  for (std::size_t b = 1; b <= c.replicates; ++b) {
    const auto d = draw_replicate(c, b, 1);
    const auto tr = trace_path(*d.params, d.endpoints[0].first, d.endpoints[0].second);
    for (const auto& e : tr.events) {
      if (e.multi_flip) ++multi;
      else ++recount[e.node().layer];
    }
  }
  CHECK(s.layers[0].count == recount[0]);
  CHECK(s.layers[1].count == recount[1]);
  CHECK(s.multi_flip_events == multi);
  CHECK(s.single_flip_events == recount[0] + recount[1]);
}

TEST_CASE("shares sum to 100 and pooled values have unit spread") {
  for (auto metric : {JumpMetric::VectorNorm, JumpMetric::AbsScalar}) {
    auto c = small_config({12, 8, 4}, 4, 15);
    c.metric = metric;
    const auto s = run_layer_stats(c);
    double total = 0.0;
    std::vector<double> pooled;
    for (const auto& row : s.layers) total += row.share;
    for (const auto& v : s.normalized) pooled.insert(pooled.end(), v.begin(), v.end());
    CHECK(total == doctest::Approx(100.0).epsilon(1e-12));
    const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / double(pooled.size());
    double ss = 0.0;
    for (double v : pooled) ss += (v - mean) * (v - mean);
    CHECK(std::sqrt(ss / double(pooled.size() - 1)) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("reports do not depend on the worker count") {
  auto c = small_config({10, 6, 3}, 3, 12);
  const auto a = run_layer_stats(c);
  c.workers = 3;
  const auto b = run_layer_stats(c);
  CHECK(a.replicate_counts == b.replicate_counts);
  CHECK(a.normalized == b.normalized);
  CHECK(a.pooled_sd == b.pooled_sd);

  auto t = small_config({}, 3, 6);
  t.width_exponents = {2.0, 1.0};
  const std::vector<double> bases{3.0, 4.0};
  const auto r1 = theorem1_ratio(t, bases);
  t.workers = 4;
  const auto r2 = theorem1_ratio(t, bases);
  for (std::size_t i = 0; i < 2; ++i) CHECK(r1.rows[i].ratios == r2.rows[i].ratios);
}

TEST_CASE("degenerate configuration is an error") {
  auto c = fixed_network_config(NetworkParams::zeros(arch(2, {3})), vec({0, 0}), vec({1, 1}));
  CHECK_THROWS_AS(run_layer_stats(c), Error);
}

TEST_CASE("ratio statistic by hand on one region") {
  const auto p = random_net(arch(2, {4, 2}), 31);
  ActivationPattern r = activation_pattern(forward(p, vec({0.2, -0.3})));
  const Readout ro = make_readout(p);
  const std::vector<ActivationPattern> regions{r};
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < r.node_count(); ++k) {
    const NodeId n = r.node_at(k);
    const double v = flip_gradient_diff(p, r, n).norm();
    if (n.layer == 1) den = std::max(den, v);
    else num = std::max(num, v);
  }
  const auto got = ratio_statistic(p, regions, ro, 1);
  REQUIRE(got.has_value());
  CHECK(*got == doctest::Approx(num / den).epsilon(1e-12));

  auto dead = p;
  dead.output_weights.setZero();
  CHECK_FALSE(ratio_statistic(dead, regions, make_readout(dead), 1).has_value());
}

TEST_CASE("ratio sweep: one explicit architecture gives one row") {
  auto c = small_config({6, 6}, 3, 8);
  const auto rep = theorem1_ratio(c, {});
  REQUIRE(rep.rows.size() == 1);
  CHECK(std::isnan(rep.rows[0].base));
  CHECK(rep.rows[0].ratios.size() + rep.rows[0].undefined_replicates == 8);
  for (double v : rep.rows[0].ratios) CHECK(v >= 0.0);
  CHECK(rep.rows[0].median <= rep.rows[0].q90);
}

TEST_CASE("ratio sweep: subsampling engages above the pair threshold") {
  auto c = small_config({}, 2, 2);
  c.width_exponents = {2.0, 1.0};
  c.paths_per_replicate = 20;
  const std::vector<double> bases{12.0};
  const auto rep = theorem1_ratio(c, bases);
  CHECK(rep.rows[0].subsampled_replicates == 2);
  CHECK(rep.rows[0].mean_regions * 156.0 > double(RatioReport::kSubsampleThreshold));
}

TEST_CASE("degeneracy report") {
  auto c = small_config({10, 6}, 3, 10);
  const auto d = prop1_degeneracy(c);
  CHECK(d.events > 0);
  CHECK(d.multi_flip == 0);
  CHECK(d.fraction == 0.0);
  CHECK(d.t_merge_fine == doctest::Approx(1e-13));

  const auto a = prop1_degeneracy(fixed_network_config(abs_net(), vec({-1.0}), vec({1.0})));
  CHECK(a.events == 1);
  CHECK(a.fraction == 1.0);
  CHECK(a.fraction_fine <= a.fraction);
}

TEST_CASE("arrangement bound") {
  CHECK(arrangement_bound(16, 2) == 137.0);
  CHECK(arrangement_bound(5, 1) == 6.0);
  CHECK(arrangement_bound(2, 5) == 4.0);
}

TEST_CASE("region counts: hinges, bound and constant nets") {
  for (std::size_t k = 1; k <= 6; ++k) {
    std::vector<double> kinks;
    for (std::size_t j = 0; j < k; ++j) kinks.push_back(-0.8 + 1.6 * double(j) / double(k));
    const auto rep = region_count(fixed_network_config(hinge_net(kinks), vec({-1.0}), vec({1.0})),
                                  RegionMode::Line, 2);
    REQUIRE(rep.counts.size() == 1);
    CHECK(rep.counts[0] == k + 1);
    CHECK(rep.bound_satisfied);
  }

  auto c = small_config({16}, 2, 5);
  const auto g = region_count(c, RegionMode::Grid2d, 128);
  REQUIRE(g.bound.has_value());
  CHECK(*g.bound == 137.0);
  CHECK(g.bound_satisfied);
  for (auto v : g.counts) CHECK(v <= 137u);

  const auto flat = NetworkParams::zeros(arch(2, {5, 3}));
  auto fc = fixed_network_config(flat, vec({-1, -1}), vec({1, 1}));
  CHECK(region_count(fc, RegionMode::Line, 2).counts[0] == 1);
  CHECK(region_count(fc, RegionMode::Grid2d, 16).counts[0] == 1);
  CHECK_THROWS_AS(region_count(fc, RegionMode::Grid2d, 1), Error);
}

TEST_CASE("boundary statistics") {
  NetworkParams pos = random_net(arch(3, {6, 4}), 41);
  pos.output_weights.setZero();
  pos.output_bias << 5.0;
  ExperimentConfig c;
  c.network = std::make_shared<const NetworkParams>(pos);
  c.replicates = 3;
  c.paths_per_replicate = 4;
  c.workers = 1;
  const auto empty = boundary_stats(c, 0.05);
  CHECK(empty.crossings == 0);
  CHECK(empty.replicates_with_crossing == 0);

  auto m = small_config({12, 8, 3}, 4, 10);
  m.arch.output_count = 3;
  m.output = OutputSelector{2, 1};
  m.paths_per_replicate = 10;
  const auto b = boundary_stats(m, 0.05);
  REQUIRE(b.crossings > 0);
  CHECK(std::accumulate(b.window_share.begin(), b.window_share.end(), 0.0) == doctest::Approx(100.0));
  CHECK(std::accumulate(b.full_share.begin(), b.full_share.end(), 0.0) == doctest::Approx(100.0));
  CHECK(b.narrowest_layer == 3);
  CHECK_THROWS_AS(boundary_stats(m, 0.0), Error);
}

TEST_CASE("top-layer perturbation regularizer") {
  NetworkParams p = NetworkParams::zeros(arch(1, {2}));
  p.weights[0] << 1.0, -1.0;
  p.biases[0] << 0.0, 0.2;
  const std::vector<Vector> x{vec({1.0})};
  const std::vector<Vector> eta{vec({0.1})};
  CHECK(ssl_regularizer(p, x, eta) == doctest::Approx(0.02).epsilon(1e-12));

  const auto r = random_net(arch(3, {5, 4}), 3);
  const std::vector<Vector> xs{vec({0.1, 0.2, 0.3}), vec({-0.5, 0.0, 0.9})};
  const std::vector<Vector> zeros{Vector::Zero(3), Vector::Zero(3)};
  CHECK(ssl_regularizer(r, xs, zeros) == 0.0);
  const auto c = NetworkParams::zeros(arch(3, {5, 4}));
  const std::vector<Vector> etas{vec({0.3, 0.3, 0.3}), vec({-0.1, 0.2, 0.0})};
  CHECK(ssl_regularizer(c, xs, etas) == 0.0);
  CHECK_THROWS_AS(ssl_regularizer(r, xs, eta), Error);
  CHECK_THROWS_AS(ssl_regularizer(r, std::vector<Vector>{}, std::vector<Vector>{}), Error);
}

}  // TEST_SUITE
