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

#include "nets.hpp"
#include "relugrad/approximator.hpp"
#include "relugrad/error.hpp"
#include "relugrad/rng.hpp"

using namespace relugrad;
using namespace relugrad::testing;

namespace {

Matrix random_points(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

Vector network_outputs(const NetworkParams& p, const Matrix& x) {
  Vector y(x.rows());
  const Readout r = make_readout(p);
  for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = evaluate(p, Vector(x.row(i).transpose()), r);
  return y;
}

double mse(const Matrix& pred, const Vector& y) { return (pred.col(0) - y).squaredNorm() / double(y.size()); }

}  // namespace

TEST_SUITE("approximator") {

TEST_CASE("indicator features") {
  NetworkParams c = NetworkParams::zeros(arch(2, {3, 4}));
  c.biases[1].setConstant(0.5);
  const auto f = extract_features(c, random_points(5, 2, 1));
  CHECK(f.phi.isOnes());

  Matrix pts(2, 1);
  pts << -1.0, 1.0;
  const auto a = extract_features(abs_net(), pts);
  CHECK(a.phi(0, 0) == 0.0);
  CHECK(a.phi(0, 1) == 1.0);
  CHECK(a.phi(1, 0) == 1.0);
  CHECK(a.phi(1, 1) == 0.0);

  const auto p = random_net(arch(3, {8, 6}), 2);
  const Matrix x = random_points(200, 3, 3);
  const auto g = extract_features(p, x, 3);
  for (Eigen::Index j = 0; j < 6; ++j) {
    int on = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      on += forward(p, Vector(x.row(i).transpose())).preactivations[1][j] >= 0.0 ? 1 : 0;
    }
    CHECK(g.phi.col(j).mean() == doctest::Approx(on / 200.0).epsilon(1e-15));
  }
  CHECK(extract_features(p, x, 1).phi == g.phi);
  CHECK_THROWS_AS(extract_features(p, random_points(3, 2, 4)), Error);
}

TEST_CASE("realizable piecewise-constant targets are recovered") {
  const auto p = random_net(arch(3, {8, 6}), 5);
  const auto f = extract_features(p, random_points(300, 3, 6));
  const Vector theta = (Vector(7) << 0.3, 1.0, -2.0, 0.5, 0.0, 0.7, -1.1).finished();
  const Vector y = design_matrix(ApproxKind::PiecewiseConstant, f) * theta;
  const auto m = fit(f, y, ApproxKind::PiecewiseConstant, ApproxTask::Regression);
  CHECK((evaluate(m, f).col(0) - y).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("an all-ones indicator reduces to the mean predictor") {
  NetworkParams c = NetworkParams::zeros(arch(2, {3, 1}));
  c.biases[1] << 1.0;
  const auto f = extract_features(c, random_points(50, 2, 7));
  const Vector y = random_points(50, 1, 8).col(0);
  const auto m = fit(f, y, ApproxKind::PiecewiseConstant, ApproxTask::Regression);
  const Matrix pred = evaluate(m, f);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) CHECK(pred(i, 0) == doctest::Approx(y.mean()).epsilon(1e-12));
}

TEST_CASE("nested least squares") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = random_net(arch(3, {10, 6}), 50 + s);
    const Matrix x = random_points(400, 3, 60 + s);
    const auto f = extract_features(p, x);
    const Vector y = network_outputs(p, x);
    const auto pc = fit(f, y, ApproxKind::PiecewiseConstant, ApproxTask::Regression);
    const auto nl = fit(f, y, ApproxKind::NodewiseLinear, ApproxTask::Regression);
    const double const_only = (y.array() - y.mean()).square().mean();
    CHECK(pc.training_loss <= const_only + 1e-12);
    CHECK(nl.training_loss <= pc.training_loss + 1e-10);
    CHECK(mse(evaluate(pc, f), y) == doctest::Approx(pc.training_loss).epsilon(1e-9));

    // Residual orthogonal to every design column.
    for (auto kind : {ApproxKind::PiecewiseConstant, ApproxKind::NodewiseLinear}) {
      const auto m = kind == ApproxKind::PiecewiseConstant ? pc : nl;
      const Matrix A = design_matrix(kind, f);
      const Vector resid = A * m.coefficients.row(0).transpose() - y;
      const Vector proj = A.transpose() * resid;
      CHECK(proj.cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, A.norm() * y.norm()));
    }
  }
}

TEST_CASE("design layout and cap") {
  IndicatorFeatures f;
  f.phi = (Matrix(2, 2) << 1, 0, 1, 1).finished();
  f.points = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  const Matrix A = design_matrix(ApproxKind::NodewiseLinear, f);
  CHECK(A.cols() == 9);
  CHECK(A.row(0) == (Eigen::RowVectorXd(9) << 1, 1, 0, 1, 2, 3, 0, 0, 0).finished());
  CHECK(A.row(1) == (Eigen::RowVectorXd(9) << 1, 1, 1, 4, 5, 6, 4, 5, 6).finished());
  CHECK(design_width(ApproxKind::NodewiseLinear, 1000, 100) == 101'001);
  IndicatorFeatures big;
  big.phi = Matrix::Zero(1, 1000);
  big.points = Matrix::Zero(1, 100);
  CHECK_THROWS_AS(design_matrix(ApproxKind::NodewiseLinear, big), Error);
}

TEST_CASE("fit input errors") {
  const auto p = random_net(arch(2, {4}), 1);
  const auto f = extract_features(p, random_points(10, 2, 2));
  CHECK_THROWS_AS(fit(f, Vector::Zero(9), ApproxKind::PiecewiseConstant, ApproxTask::Regression), Error);
  Vector bad = Vector::Zero(10);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(fit(f, bad, ApproxKind::PiecewiseConstant, ApproxTask::Regression), Error);
  Vector labels = Vector::Ones(10);
  labels[0] = 0.0;
  CHECK_THROWS_AS(fit(f, labels, ApproxKind::PiecewiseConstant, ApproxTask::Classification), Error);
  IndicatorFeatures none;
  none.phi = Matrix::Zero(0, 4);
  none.points = Matrix::Zero(0, 2);
  CHECK_THROWS_AS(fit(none, Vector(), ApproxKind::PiecewiseConstant, ApproxTask::Regression), Error);
}

TEST_CASE("softmax classification") {
  const auto p = random_net(arch(3, {8, 5}, 3), 9);
  const Matrix x = random_points(300, 3, 10);
  const auto f = extract_features(p, x);
  Vector labels(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index k = 0;
    forward(p, Vector(x.row(i).transpose())).output.maxCoeff(&k);
    labels[i] = double(k + 1);
  }
  FitSettings s;
  s.max_iterations = 3000;
  const auto m = fit(f, labels, ApproxKind::PiecewiseConstant, ApproxTask::Classification, s);
  CHECK(m.classes <= 3);
  for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1]);
  CHECK(m.training_loss < std::log(double(m.classes)));

  const Matrix prob = evaluate(m, f);
  for (Eigen::Index i = 0; i < prob.rows(); ++i) CHECK(std::abs(prob.row(i).sum() - 1.0) <= 1e-12);

  const auto again = fit(f, labels, ApproxKind::PiecewiseConstant, ApproxTask::Classification, s);
  CHECK(again.coefficients == m.coefficients);

  // Agreement equals the trace of an independently built confusion matrix.
  const auto rep = compare_report(p, m, x);
  Matrix confusion = Matrix::Zero(3, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index guess = 0;
    prob.row(i).maxCoeff(&guess);
    confusion(static_cast<Eigen::Index>(labels[i]) - 1, guess) += 1.0;
  }
  CHECK(rep.agreement == doctest::Approx(confusion.trace() / double(x.rows())));
  CHECK(rep.agreement >= 0.0);
  CHECK(rep.agreement <= 1.0);
  std::size_t counted = 0;
  for (const auto& c : rep.classes) counted += c.count;
  CHECK(counted == 300);
}

TEST_CASE("softmax properties") {
  ApproxModel zero;
  zero.task = ApproxTask::Classification;
  zero.top_width = 4;
  zero.classes = 5;
  zero.coefficients = Matrix::Zero(5, 5);
  IndicatorFeatures f;
  f.phi = (Matrix(2, 4) << 1, 0, 1, 1, 0, 0, 0, 1).finished();
  f.points = Matrix::Zero(2, 2);
  const Matrix u = evaluate(zero, f);
  CHECK((u.array() - 0.2).abs().maxCoeff() <= 1e-15);

  Rng rng(3);
  Matrix scores(50, 4);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index k = 0; k < 4; ++k) scores(i, k) = rng.uniform(-30.0, 30.0);
  }
  Matrix shifted = scores;
  shifted.row(7).array() += 123.0;
  const Matrix a = softmax_rows(scores);
  const Matrix b = softmax_rows(shifted);
  CHECK((a.row(7) - b.row(7)).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index ka = 0, kb = 0;
    a.row(i).maxCoeff(&ka);
    scores.row(i).maxCoeff(&kb);
    CHECK(ka == kb);
  }
}

TEST_CASE("fidelity of a realizable surrogate") {
  // Single hidden layer: the network itself is nodewise-linear in x.
  const auto p = random_net(arch(2, {6}), 12);
  const Matrix x = random_points(500, 2, 13);
  const auto f = extract_features(p, x);
  const auto m = fit(f, network_outputs(p, x), ApproxKind::NodewiseLinear, ApproxTask::Regression);
  CHECK(m.training_loss <= 1e-20);
  const auto rep = compare_report(p, m, random_points(200, 2, 14));
  CHECK(rep.agreement == 1.0);
  CHECK(rep.mse <= 1e-20);

  const auto an = fit_analytic(p, f, network_outputs(p, x));
  CHECK(an.training_loss <= 1e-20);
}

TEST_CASE("model file round trip") {
  const auto p = random_net(arch(3, {5, 4}), 15);
  const Matrix x = random_points(60, 3, 16);
  const auto f = extract_features(p, x);
  const auto m = fit(f, network_outputs(p, x), ApproxKind::NodewiseLinear, ApproxTask::Regression);
  const auto back = model_from_json(model_to_json(m));
  CHECK(back.kind == m.kind);
  CHECK(back.task == m.task);
  CHECK(back.top_width == 4);
  CHECK(back.input_dim == 3);
  CHECK(back.coefficients == m.coefficients);
  CHECK_THROWS_AS(model_from_json("{\"kind\":\"nope\"}"), Error);
  CHECK_THROWS_AS(model_from_json("[1,"), Error);
}

}  // TEST_SUITE
