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
#include "relugrad/approximator.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <fmt/core.h>
#include <json.hpp>

#include "relugrad/error.hpp"
#include "relugrad/experiments.hpp"
#include "relugrad/params_io.hpp"

namespace relugrad {

using nlohmann::json;

std::string to_string(ApproxKind kind) {
  return kind == ApproxKind::PiecewiseConstant ? "piecewise-constant" : "nodewise-linear";
}

std::string to_string(ApproxTask task) {
  return task == ApproxTask::Regression ? "regression" : "classification";
}

ApproxKind parse_approx_kind(std::string_view text) {
  if (text == "piecewise-constant") return ApproxKind::PiecewiseConstant;
  if (text == "nodewise-linear") return ApproxKind::NodewiseLinear;
  fail(ErrorKind::InvalidArgument, fmt::format("unknown surrogate kind '{}'", text));
}

ApproxTask parse_approx_task(std::string_view text) {
  if (text == "regression") return ApproxTask::Regression;
  if (text == "classification") return ApproxTask::Classification;
  fail(ErrorKind::InvalidArgument, fmt::format("unknown task '{}'", text));
}

IndicatorFeatures extract_features(const NetworkParams& params, const Matrix& points,
                                   std::size_t workers) {
  params.validate();
  const auto p = static_cast<Eigen::Index>(params.arch.input_dim);
  require(points.cols() == p, ErrorKind::ShapeMismatch,
          fmt::format("points have dimension {}, network expects {}", points.cols(), p));
  const std::size_t top = params.arch.depth() - 1;
  const auto nL = static_cast<Eigen::Index>(params.arch.width(top));

  IndicatorFeatures f;
  f.points = points;
  f.phi = Matrix::Zero(points.rows(), nL);
  parallel_for(static_cast<std::size_t>(points.rows()), workers, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector x = points.row(row).transpose();
    const Vector z = forward(params, x).preactivations[top];
    for (Eigen::Index j = 0; j < nL; ++j) f.phi(row, j) = z[j] >= 0.0 ? 1.0 : 0.0;
  });
  return f;
}

std::size_t design_width(ApproxKind kind, std::size_t top_width, std::size_t input_dim) {
  return kind == ApproxKind::PiecewiseConstant ? 1 + top_width
                                               : 1 + top_width * (input_dim + 1);
}

Matrix design_matrix(ApproxKind kind, const IndicatorFeatures& features) {
  const Eigen::Index N = features.phi.rows();
  const Eigen::Index nL = features.phi.cols();
  const Eigen::Index p = features.points.cols();
  require(features.points.rows() == N, ErrorKind::ShapeMismatch,
          "feature and point row counts differ");
  const std::size_t width = design_width(kind, static_cast<std::size_t>(nL), static_cast<std::size_t>(p));
  require(width <= kMaxDesignColumns, ErrorKind::CapExceeded,
          fmt::format("design would have {} columns (limit {})", width, kMaxDesignColumns));

  Matrix A(N, static_cast<Eigen::Index>(width));
  A.col(0).setOnes();
  A.middleCols(1, nL) = features.phi;
  if (kind == ApproxKind::NodewiseLinear) {
    for (Eigen::Index j = 0; j < nL; ++j) {
      A.middleCols(1 + nL + j * p, p) =
          features.points.array().colwise() * features.phi.col(j).array();
    }
  }
  return A;
}

namespace {

Vector least_squares(const Matrix& A, const Vector& y) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  return cod.solve(y);
}

double mean_cross_entropy(const Matrix& scores, const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    const double lse = m + std::log((scores.row(i).array() - m).exp().sum());
    total += lse - scores(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]));
  }
  return total / static_cast<double>(scores.rows());
}

void check_data(const IndicatorFeatures& features, const Vector& targets) {
  require(features.phi.rows() > 0, ErrorKind::InvalidArgument, "no data points");
  require(targets.size() == features.phi.rows(), ErrorKind::ShapeMismatch,
          fmt::format("{} targets for {} points", targets.size(), features.phi.rows()));
  require(targets.allFinite(), ErrorKind::InvalidArgument, "targets must be finite");
}

}  // namespace

ApproxModel fit(const IndicatorFeatures& features, const Vector& targets, ApproxKind kind,
                ApproxTask task, const FitSettings& settings) {
  check_data(features, targets);
  const Matrix A = design_matrix(kind, features);
  const auto N = static_cast<double>(A.rows());

  ApproxModel model;
  model.kind = kind;
  model.task = task;
  model.top_width = static_cast<std::size_t>(features.phi.cols());
  model.input_dim = static_cast<std::size_t>(features.points.cols());

  if (task == ApproxTask::Regression) {
    const Vector coef = least_squares(A, targets);
    model.coefficients = coef.transpose();
    model.training_loss = (A * coef - targets).squaredNorm() / N;
    model.loss_history.push_back(model.training_loss);
    return model;
  }

  require(settings.step > 0.0 && settings.gradient_tolerance > 0.0, ErrorKind::InvalidArgument,
          "step and gradient tolerance must be positive");
  std::vector<std::size_t> labels;
  std::size_t K = 0;
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double v = targets[i];
    require(v >= 1.0 && std::floor(v) == v, ErrorKind::InvalidArgument,
            "classification labels must be integers 1..K");
    labels.push_back(static_cast<std::size_t>(v) - 1);
    K = std::max(K, labels.back() + 1);
  }
  Matrix Y = Matrix::Zero(A.rows(), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
  }

  model.classes = K;
  Matrix theta = Matrix::Zero(static_cast<Eigen::Index>(K), A.cols());
  double loss = mean_cross_entropy(A * theta.transpose(), labels);
  model.loss_history.push_back(loss);
  double step = settings.step;
  model.converged = false;
  std::size_t it = 0;
  for (; it < settings.max_iterations; ++it) {
    const Matrix P = softmax_rows(A * theta.transpose());
    const Matrix grad = (P - Y).transpose() * A / N;
    if (grad.norm() <= settings.gradient_tolerance) {
      model.converged = true;
      break;
    }
    for (;;) {
      const Matrix trial = theta - step * grad;
      const double trial_loss = mean_cross_entropy(A * trial.transpose(), labels);
      if (trial_loss <= loss) {
        theta = trial;
        loss = trial_loss;
        break;
      }
      step *= 0.5;
      if (step < 1e-300) break;
    }
    model.loss_history.push_back(loss);
    if (step < 1e-300) break;
  }
  model.iterations = it;
  model.coefficients = theta;
  model.training_loss = loss;
  return model;
}

ApproxModel fit_analytic(const NetworkParams& params, const IndicatorFeatures& features,
                         const Vector& targets, const OutputSelector& selector) {
  check_data(features, targets);
  const std::size_t top = params.arch.depth() - 1;
  const auto nL = static_cast<Eigen::Index>(params.arch.width(top));
  const auto p = static_cast<Eigen::Index>(params.arch.input_dim);
  require(features.phi.cols() == nL && features.points.cols() == p, ErrorKind::ShapeMismatch,
          "features do not match the network");
  const Readout readout = make_readout(params, selector);
  const Eigen::Index N = features.phi.rows();

  Matrix grads = Matrix::Zero(nL, p);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = features.points.row(i).transpose();
    const ActivationPattern pattern = activation_pattern(forward(params, x));
    for (Eigen::Index j = 0; j < nL; ++j) {
      const NodeId node{top, static_cast<std::size_t>(j)};
      ActivationPattern on = pattern;
      on.set(node, true);
      grads.row(j) += flip_gradient_diff(params, on, node, readout).transpose();
    }
  }
  grads /= static_cast<double>(N);

  Vector residual = targets;
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < nL; ++j) {
      if (features.phi(i, j) != 0.0) residual[i] -= features.points.row(i).dot(grads.row(j));
    }
  }
  const Matrix A = design_matrix(ApproxKind::PiecewiseConstant, features);
  const Vector base = least_squares(A, residual);

  ApproxModel model;
  model.kind = ApproxKind::NodewiseLinear;
  model.task = ApproxTask::Regression;
  model.top_width = static_cast<std::size_t>(nL);
  model.input_dim = static_cast<std::size_t>(p);
  model.coefficients.resize(1, static_cast<Eigen::Index>(design_width(model.kind, model.top_width, model.input_dim)));
  model.coefficients.leftCols(1 + nL) = base.transpose();
  for (Eigen::Index j = 0; j < nL; ++j) {
    model.coefficients.block(0, 1 + nL + j * p, 1, p) = grads.row(j);
  }
  const Matrix full = design_matrix(model.kind, features);
  model.training_loss =
      (full * model.coefficients.transpose() - targets).squaredNorm() / static_cast<double>(N);
  model.loss_history.push_back(model.training_loss);
  return model;
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (scores.row(i).array() - m).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

Matrix evaluate(const ApproxModel& model, const IndicatorFeatures& features) {
  require(static_cast<std::size_t>(features.phi.cols()) == model.top_width &&
              (model.kind == ApproxKind::PiecewiseConstant ||
               static_cast<std::size_t>(features.points.cols()) == model.input_dim),
          ErrorKind::ShapeMismatch, "features do not match the model");
  const Matrix A = design_matrix(model.kind, features);
  require(A.cols() == model.coefficients.cols(), ErrorKind::ShapeMismatch,
          "model coefficients do not match the design width");
  const Matrix scores = A * model.coefficients.transpose();
  return model.task == ApproxTask::Regression ? scores : softmax_rows(scores);
}

namespace {

std::size_t argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  row.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

}  // namespace

FidelityReport compare_report(const NetworkParams& params, const ApproxModel& model,
                              const Matrix& points, const OutputSelector& selector) {
  const IndicatorFeatures features = extract_features(params, points);
  const Matrix pred = evaluate(model, features);

  FidelityReport rep;
  rep.task = model.task;
  rep.points = static_cast<std::size_t>(points.rows());
  std::size_t agree = 0;
  if (model.task == ApproxTask::Regression) {
    const Readout readout = make_readout(params, selector);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const double f = evaluate(params, Vector(points.row(i).transpose()), readout);
      const double s = pred(i, 0);
      sq += (f - s) * (f - s);
      agree += (f >= 0.0) == (s >= 0.0) ? 1 : 0;
    }
    rep.mse = rep.points ? sq / static_cast<double>(rep.points) : 0.0;
  } else {
    rep.classes.resize(params.arch.output_count);
    for (std::size_t k = 0; k < rep.classes.size(); ++k) rep.classes[k].label = k + 1;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const Vector out = forward(params, Vector(points.row(i).transpose())).output;
      const std::size_t truth = argmax(out.transpose());
      const std::size_t guess = argmax(pred.row(i));
      ++rep.classes[truth].count;
      if (truth == guess) {
        ++rep.classes[truth].agree;
        ++agree;
      }
    }
    for (auto& c : rep.classes) {
      c.rate = c.count ? static_cast<double>(c.agree) / static_cast<double>(c.count) : 0.0;
    }
  }
  rep.agreement = rep.points ? static_cast<double>(agree) / static_cast<double>(rep.points) : 0.0;
  return rep;
}

std::string fidelity_csv(const FidelityReport& report) {
  std::string out = "scope,label,count,agree,rate,mse\n";
  for (const auto& c : report.classes) {
    out += fmt::format("class,{},{},{},{},\n", c.label, c.count, c.agree, format_double(c.rate));
  }
  const auto agree = static_cast<std::size_t>(std::llround(report.agreement * static_cast<double>(report.points)));
  out += fmt::format("overall,,{},{},{},{}\n", report.points, agree, format_double(report.agreement),
                     report.task == ApproxTask::Regression ? format_double(report.mse) : "");
  return out;
}

std::string model_to_json(const ApproxModel& model) {
  json coef = json::array();
  for (Eigen::Index r = 0; r < model.coefficients.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < model.coefficients.cols(); ++c) row.push_back(model.coefficients(r, c));
    coef.push_back(std::move(row));
  }
  json doc = {{"kind", to_string(model.kind)},
              {"task", to_string(model.task)},
              {"n_L", model.top_width},
              {"input_dim", model.input_dim},
              {"classes", model.classes},
              {"coefficients", std::move(coef)}};
  return doc.dump() + "\n";
}

ApproxModel model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::MalformedFile, std::string("model file is not valid JSON: ") + e.what());
  }
  ApproxModel model;
  try {
    model.kind = parse_approx_kind(doc.at("kind").get<std::string>());
    model.task = parse_approx_task(doc.at("task").get<std::string>());
    model.top_width = doc.at("n_L").get<std::size_t>();
    model.input_dim = doc.at("input_dim").get<std::size_t>();
    model.classes = doc.value("classes", std::size_t{1});
    const json& coef = doc.at("coefficients");
    const std::size_t width = design_width(model.kind, model.top_width, model.input_dim);
    require(coef.is_array() && coef.size() == model.classes, ErrorKind::ShapeMismatch,
            "coefficient rows do not match the class count");
    model.coefficients.resize(static_cast<Eigen::Index>(model.classes), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < coef.size(); ++r) {
      require(coef[r].size() == width, ErrorKind::ShapeMismatch,
              fmt::format("coefficient row {} has {} entries, expected {}", r + 1, coef[r].size(), width));
      for (std::size_t c = 0; c < width; ++c) {
        model.coefficients(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = coef[r][c].get<double>();
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedFile, std::string("malformed model file: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) fail(ErrorKind::MalformedFile, e.what());
    throw;
  }
  return model;
}

}  // namespace relugrad
