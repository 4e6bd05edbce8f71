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

// Surrogates built on the top-layer activation indicators
// Phi[i][j] = I(z_j^(L)(x_i) >= 0).
//
//   piecewise-constant:  s(x) = theta_0 + sum_j theta_j Phi_j(x)
//   nodewise-linear:     s(x) = beta_0 + sum_j (alpha_j + x^T grad_j) Phi_j(x)
//
// Regression fits one score by minimum-norm least squares; classification
// fits one score per class by full-batch gradient descent on the softmax
// cross-entropy.
//
// Design columns: [1, Phi_1..Phi_nL] then, for nodewise-linear,
// Phi_1*x_1..Phi_1*x_p, Phi_2*x_1, ... (node-major).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "relugrad/network.hpp"

namespace relugrad {

enum class ApproxKind { PiecewiseConstant, NodewiseLinear };
enum class ApproxTask { Regression, Classification };

std::string to_string(ApproxKind kind);
std::string to_string(ApproxTask task);
ApproxKind parse_approx_kind(std::string_view text);
ApproxTask parse_approx_task(std::string_view text);

struct IndicatorFeatures {
  Matrix phi;     // N x n_L, entries 0 or 1
  Matrix points;  // N x p
};

/// Points are the rows of `points`.
IndicatorFeatures extract_features(const NetworkParams& params, const Matrix& points,
                                   std::size_t workers = 1);

inline constexpr std::size_t kMaxDesignColumns = 100'000;

std::size_t design_width(ApproxKind kind, std::size_t top_width, std::size_t input_dim);
Matrix design_matrix(ApproxKind kind, const IndicatorFeatures& features);

struct FitSettings {
  double step = 1.0;
  std::size_t max_iterations = 20'000;
  double gradient_tolerance = 1e-6;
};

struct ApproxModel {
  ApproxKind kind = ApproxKind::PiecewiseConstant;
  ApproxTask task = ApproxTask::Regression;
  std::size_t top_width = 0;  // n_L
  std::size_t input_dim = 0;
  std::size_t classes = 1;    // 1 for regression
  Matrix coefficients;        // classes x design_width

  // Fit diagnostics; not serialized.
  double training_loss = 0.0;  // MSE or mean cross-entropy
  std::size_t iterations = 0;
  bool converged = true;
  std::vector<double> loss_history;
};

/// Regression targets are real; classification targets are labels 1..K
/// stored as doubles (K is the largest label).
ApproxModel fit(const IndicatorFeatures& features, const Vector& targets, ApproxKind kind,
                ApproxTask task, const FitSettings& settings = {});

/// Nodewise-linear regression with grad_j taken from the network: the mean
/// over the sample of flip_gradient_diff at top node j with its bit forced
/// on. beta_0 and alpha_j are then fitted by least squares.
ApproxModel fit_analytic(const NetworkParams& params, const IndicatorFeatures& features,
                         const Vector& targets, const OutputSelector& selector = {});

/// Regression: N x 1 predictions. Classification: N x K probabilities.
Matrix evaluate(const ApproxModel& model, const IndicatorFeatures& features);

/// Row-wise softmax, shifted by the row maximum.
Matrix softmax_rows(const Matrix& scores);

struct ClassAgreement {
  std::size_t label = 0;  // 1-based class decided by the network
  std::size_t count = 0;
  std::size_t agree = 0;
  double rate = 0.0;
};

struct FidelityReport {
  ApproxTask task = ApproxTask::Regression;
  std::size_t points = 0;
  double mse = 0.0;        // regression only
  double agreement = 0.0;  // overall fraction of matching decisions
  std::vector<ClassAgreement> classes;
};

/// Regression compares sign(f) with sign(s) and reports the MSE between
/// them; classification compares argmax_k f_k with argmax_k of the model.
FidelityReport compare_report(const NetworkParams& params, const ApproxModel& model,
                              const Matrix& points, const OutputSelector& selector = {});

std::string fidelity_csv(const FidelityReport& report);

std::string model_to_json(const ApproxModel& model);
ApproxModel model_from_json(std::string_view text);

}  // namespace relugrad
