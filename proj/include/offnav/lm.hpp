/*
 * Copyright 2026 The Offnav Authors
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

#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace offnav {

struct LmOptions {
  int max_iterations = 100;
  double damping_init = 1e-4;
  double damping_scale = 3.0;   // accepted /= scale, rejected *= scale
  double step_tolerance = 1e-10;
  double max_damping = 1e14;
};

struct LmIteration {
  int iter = 0;
  double cost = 0.0;
  double damping = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct LmSummary {
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<LmIteration> trace;
};

struct SingularNormalEquationsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) over a manifold state.
///
/// residual(state) -> Eigen::VectorXd
/// jacobian(state) -> Eigen::SparseMatrix<double> (rows = residuals,
///                    cols = tangent dimensions)
/// retract(state, delta) -> State, applying a tangent step
///
/// The cost is the plain sum of squared residuals. Only step acceptance is
/// stateful, so identical inputs produce an identical iterate sequence.
template <typename State, typename ResidualFn, typename JacobianFn,
          typename RetractFn>
LmSummary lm_minimize(State& state, ResidualFn&& residual,
                      JacobianFn&& jacobian, RetractFn&& retract,
                      const LmOptions& opts) {
  LmSummary summary;
  Eigen::VectorXd r = residual(state);
  double cost = r.squaredNorm();
  double damping = opts.damping_init;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Eigen::SparseMatrix<double> jac = jacobian(state);
    const Eigen::SparseMatrix<double> hessian =
        Eigen::SparseMatrix<double>(jac.transpose()) * jac;
    const Eigen::VectorXd gradient = jac.transpose() * r;
    Eigen::VectorXd diag = hessian.diagonal();
    for (int i = 0; i < diag.size(); ++i) diag[i] = std::max(diag[i], 1e-12);

    bool accepted = false;
    while (!accepted && damping <= opts.max_damping) {
      Eigen::SparseMatrix<double> damped = hessian;
      for (int i = 0; i < diag.size(); ++i) {
        damped.coeffRef(i, i) = hessian.coeff(i, i) + damping * diag[i];
      }
      if (!analyzed) {
        solver.analyzePattern(damped);
        analyzed = true;
      }
      solver.factorize(damped);
      if (solver.info() != Eigen::Success) {
        throw SingularNormalEquationsError(
            "lm_minimize: factorization of the normal equations failed");
      }
      const Eigen::VectorXd delta = solver.solve(-gradient);
      const double step_norm = delta.norm();
      State trial = retract(state, delta);
      const Eigen::VectorXd r_trial = residual(trial);
      const double cost_trial = r_trial.squaredNorm();

      LmIteration it;
      it.iter = iter;
      it.damping = damping;
      it.step_norm = step_norm;
      if (cost_trial < cost) {
        state = std::move(trial);
        r = r_trial;
        cost = cost_trial;
        damping = std::max(damping / opts.damping_scale, 1e-12);
        accepted = true;
        it.accepted = true;
        it.cost = cost;
        summary.trace.push_back(it);
        if (step_norm < opts.step_tolerance) {
          summary.final_cost = cost;
          summary.iterations = iter + 1;
          summary.converged = true;
          return summary;
        }
      } else {
        damping *= opts.damping_scale;
        it.accepted = false;
        it.cost = cost_trial;
        summary.trace.push_back(it);
      }
    }
    if (!accepted) break;  // damping exhausted, best-so-far returned
  }
  summary.final_cost = cost;
  summary.iterations = summary.trace.empty() ? 0 : summary.trace.back().iter + 1;
  summary.converged = false;
  return summary;
}

}  // namespace offnav
