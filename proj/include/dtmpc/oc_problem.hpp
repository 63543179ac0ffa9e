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

#ifndef DTMPC_OC_PROBLEM_HPP
#define DTMPC_OC_PROBLEM_HPP

#include <functional>
#include <optional>

#include "dtmpc/dynamics.hpp"
#include "dtmpc/types.hpp"

namespace dtmpc {

/// Parameterized finite-horizon optimal control problem. Every callback
/// receives the parameter vector explicitly so that finite-difference
/// probes over theta need no rebuilding.
struct OCProblem {
  int n_x = 0;
  int n_u = 0;
  int n_theta = 0;
  int horizon = 0;
  VectorXd theta;
  std::optional<ControlBounds> bounds;

  std::function<VectorXd(const VectorXd& x, const VectorXd& u,
                         const VectorXd& th)>
      dynamics;
  std::function<void(const VectorXd& x, const VectorXd& u, const VectorXd& th,
                     MatrixXd& fx, MatrixXd& fu)>
      dynamics_jacobians;
  // f_theta, n_x x n_theta; empty means zero
  std::function<MatrixXd(const VectorXd& x, const VectorXd& u,
                         const VectorXd& th)>
      dynamics_param_jacobian;
  // lambda-contracted second derivatives; empty means FD over the Jacobians
  std::function<void(const VectorXd& x, const VectorXd& u, const VectorXd& th,
                     const VectorXd& lam, MatrixXd& hxx, MatrixXd& hux,
                     MatrixXd& huu)>
      dynamics_hessian;

  std::function<double(int k, const VectorXd& x, const VectorXd& u,
                       const VectorXd& th)>
      running_cost;
  std::function<void(int k, const VectorXd& x, const VectorXd& u,
                     const VectorXd& th, VectorXd& lx, VectorXd& lu,
                     MatrixXd& lxx, MatrixXd& lux, MatrixXd& luu)>
      running_cost_derivs;
  // l_xtheta (n_x x n_theta), l_utheta (n_u x n_theta); empty means zero
  std::function<void(int k, const VectorXd& x, const VectorXd& u,
                     const VectorXd& th, MatrixXd& lxt, MatrixXd& lut)>
      running_cost_param_derivs;

  std::function<double(const VectorXd& x, const VectorXd& th)> terminal_cost;
  std::function<void(const VectorXd& x, const VectorXd& th, VectorXd& phix,
                     MatrixXd& phixx)>
      terminal_cost_derivs;
  std::function<MatrixXd(const VectorXd& x, const VectorXd& th)>
      terminal_cost_param_derivs;  // phi_xtheta, empty means zero

  std::function<VectorXd(const VectorXd& th)> init;  // xi(theta)
  std::function<MatrixXd(const VectorXd& th)> init_jacobian;  // empty = zero

  double total_cost(const Trajectory& traj, const VectorXd& th) const;
  double total_cost(const Trajectory& traj) const { return total_cost(traj, theta); }

  /// Rolls the control sequence through the dynamics from xi(th).
  Trajectory rollout(const std::vector<VectorXd>& us, const VectorXd& th) const;
  Trajectory rollout(const std::vector<VectorXd>& us) const {
    return rollout(us, theta);
  }

  /// Zero-control initial trajectory.
  Trajectory zero_init() const;
};

/// Attaches a theta-independent dynamics model.
void attach_dynamics(OCProblem& p, const DynamicsModel& model);

enum class DerivMode { GaussNewton, FullNewton };

/// Per-timestep first/second derivatives of dynamics and Lagrangian.
struct DerivativeBundle {
  int n_x = 0, n_u = 0, n_theta = 0, horizon = 0;
  DerivMode mode = DerivMode::GaussNewton;
  std::vector<MatrixXd> fx, fu, ftheta;
  std::vector<VectorXd> lx, lu;
  std::vector<MatrixXd> lxx, lux, luu;  // Lagrangian Hessian blocks
  std::vector<MatrixXd> lxt, lut;       // L_xtheta, L_utheta
  VectorXd phix;
  MatrixXd phixx;
  MatrixXd phixt;
  MatrixXd xi_theta;
  bool has_param_blocks = false;
};

struct Solution {
  Trajectory traj;
  std::vector<VectorXd> lambdas;  // N + 1 multipliers
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool budget_exhausted = false;
  double kkt_residual = 0.0;
  double final_reg = 0.0;
};

}  // namespace dtmpc

#endif  // DTMPC_OC_PROBLEM_HPP
