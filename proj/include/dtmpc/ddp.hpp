/*
 Copyright 2026 The dtmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef DTMPC_DDP_HPP
#define DTMPC_DDP_HPP

#include <vector>

#include "dtmpc/oc_problem.hpp"

namespace dtmpc {

struct SolveOptions {
  int budget = 10;            // max solver iterations
  double tol = 1e-3;          // cost-improvement convergence threshold
  DerivMode mode = DerivMode::GaussNewton;
  double reg_init = 1e-6;     // Levenberg-Marquardt seed
  double reg_min = 1e-9;
  double reg_max = 1e10;
  int line_search_steps = 11;  // step sizes 1, 1/2, ..., 2^-10
};

/// Costate sequence lambda_N = phi_x, lambda_k = l_x + f_x^T lambda_{k+1}.
std::vector<VectorXd> extract_multipliers(const OCProblem& p,
                                          const Trajectory& traj,
                                          const VectorXd& th);

/// All derivatives needed by the backward pass (and, optionally, by the
/// sensitivity recursions: param blocks f_theta, l_xtheta, l_utheta,
/// phi_xtheta, xi_theta). FullNewton adds the lambda-contracted dynamics
/// curvature to the Lagrangian Hessian blocks; GaussNewton drops it.
DerivativeBundle compute_derivatives(const OCProblem& p, const Trajectory& traj,
                                     const std::vector<VectorXd>& lambdas,
                                     DerivMode mode, bool with_param_blocks);

struct BackwardPassResult {
  std::vector<VectorXd> k;    // feedforward
  std::vector<MatrixXd> K;    // feedback
  std::vector<VectorXd> Vx;
  std::vector<MatrixXd> Vxx;
  double expected_improvement = 0.0;
};

/// Riccati sweep with Levenberg-Marquardt regularization on Q_uu. When the
/// reference controls and bounds are supplied, control components sitting at
/// a bound with Q_u pushing further outside are pinned: their feedforward
/// and feedback rows are zeroed and only the free subsystem is solved.
/// Throws NotPositiveDefinite if the free Q_uu + reg I block fails an LLT
/// factorization.
BackwardPassResult backward_pass(const DerivativeBundle& d, double reg,
                                 const std::vector<VectorXd>* ref_us = nullptr,
                                 const ControlBounds* bounds = nullptr);

/// Rolls the policy u = u_bar + step * k + K (x - x_bar) through the
/// dynamics, clamping to the control bounds when present. Throws
/// NonFiniteState on numerical blow-up.
Trajectory forward_pass(const OCProblem& p, const Trajectory& ref,
                        const BackwardPassResult& bp, double step_size,
                        const VectorXd& th);

/// Max-norm stationarity residual || (l_u + f_u^T lambda_{k+1})_free ||_inf
/// over free (not actively clamped) control components.
double kkt_residual(const OCProblem& p, const Trajectory& traj,
                    const std::vector<VectorXd>& lambdas, const VectorXd& th);

/// Indices of actively clamped control components per timestep: u_i at a
/// bound with the unconstrained gradient pushing further outside.
std::vector<std::vector<int>> active_set(const OCProblem& p,
                                         const Trajectory& traj,
                                         const std::vector<VectorXd>& lambdas,
                                         const VectorXd& th);

Solution solve(const OCProblem& p, const Trajectory& init,
               const SolveOptions& opts);
Solution solve(const OCProblem& p, const SolveOptions& opts);

}  // namespace dtmpc

#endif  // DTMPC_DDP_HPP
