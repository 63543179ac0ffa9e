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

#ifndef DTMPC_TUBE_MPC_HPP
#define DTMPC_TUBE_MPC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dtmpc/barrier.hpp"
#include "dtmpc/doc.hpp"

namespace dtmpc {

/// Tunable controller weights with a flat parameter-vector view used by the
/// online adaptation. Layout: [q_diag, r_diag, q_b, gamma, alpha].
struct ControllerParams {
  VectorXd q_diag;   // running state (or task-space) weights
  VectorXd r_diag;   // control weights
  VectorXd qf_diag;  // terminal weights; empty means tied to q_diag
  double q_b = 1.0;
  double gamma = 0.0;
  double alpha = 0.0;
  std::vector<bool> frozen;  // per theta entry; empty = all adaptable

  int n_theta() const {
    return static_cast<int>(q_diag.size() + r_diag.size()) + 3;
  }
  int qb_index() const {
    return static_cast<int>(q_diag.size() + r_diag.size());
  }
  int gamma_index() const { return qb_index() + 1; }
  int alpha_index() const { return qb_index() + 2; }

  VectorXd to_theta() const;
  void from_theta(const VectorXd& th);
  /// Clamps into the feasible box: q >= 0, r >= 1e-4, q_b in [0, 1],
  /// gamma in [-1, 1], alpha >= 0.
  void project();
};

/// One gradient step with Nesterov momentum, skipping frozen entries:
/// v <- mu v + g; theta <- theta - eta (g + mu v).
void nesterov_update(VectorXd& theta, VectorXd& velocity, const VectorXd& grad,
                     double eta, double mu, const std::vector<bool>& frozen);

/// Everything that defines one benchmark scenario.
struct SystemSetup {
  std::string name;
  DynamicsModel model;
  SafetyFunction safety;
  BarrierKind barrier_kind = BarrierKind::Inverse;
  ControlBounds bounds;
  VectorXd target;      // plant-state target, or end-effector target
  bool ee_cost = false; // nominal cost in end-effector space (robot arm)
  int horizon = 50;
  int task_horizon = 300;
  double success_radius = 0.25;
  DisturbanceConfig noise;
  ControllerParams nominal, ancillary;
  bool adapt_nominal = false;
  bool loss_position_only = false;
  int position_dim = 2;  // leading components compared in position-only loss
  std::function<VectorXd(std::uint64_t trial)> initial_state;
  std::function<double(const VectorXd& x)> goal_distance;
  std::function<bool(const VectorXd& x)> extra_failure;  // optional
  VectorXd default_control;  // warm-start control (hover for the quadrotor)
};

SystemSetup make_dubins_setup();
SystemSetup make_quadrotor_setup(std::uint64_t obstacle_seed);
SystemSetup make_robot_arm_setup();
SystemSetup make_system_setup(const std::string& name,
                              std::uint64_t obstacle_seed);

/// Safety-embedded tracking problems over the stacked state (x, b).
OCProblem build_nominal_problem(const SystemSetup& setup,
                                const ControllerParams& params,
                                const VectorXd& x_plant);
OCProblem build_ancillary_problem(const SystemSetup& setup,
                                  const ControllerParams& params,
                                  const VectorXd& x_plant,
                                  const Trajectory& nominal_ref);

/// Deviation loss between the realized ancillary plan and the nominal plan:
/// sum_k ||x*_k - xbar_k||^2 (plant block, optionally positions only)
/// plus sum_k (b*_k)^2.
LossSpec make_deviation_loss(const Trajectory& nominal_ref, int n_plant,
                             bool position_only, int position_dim);

/// Loss gradients with respect to the nominal plan (reference pullback):
/// combines the direct -2 (x* - xbar) term with the tracking-cost cross
/// terms -2 Q delta x, -2 R delta u from the ancillary sensitivities.
void nominal_pullback_grads(const Trajectory& anc_traj,
                            const Trajectory& nominal_ref,
                            const Hypergradient& anc_sensitivity,
                            const ControllerParams& anc, int n_plant,
                            bool position_only, int position_dim,
                            std::vector<VectorXd>& lx,
                            std::vector<VectorXd>& lu);

struct MpcOptions {
  bool adapt = true;            // adaptive (DT) vs fixed-parameter (NT)
  int solver_budget = 10;       // per-step iteration budget
  int adapt_solver_budget = 9;  // solver share when one slot funds gradients
  double solver_tol = 1e-3;
  double eta = 1e-2;
  double momentum = 0.9;
  GradientRoute route = GradientRoute::DocFull;
  bool log_steps = false;
};

enum class Outcome { Success, Violation, Timeout, Diverged };
std::string to_string(Outcome o);

struct StepRecord {
  int t = 0;
  VectorXd x_true, x_nominal, u_applied;
  double loss_value = 0.0;
  double grad_norm = 0.0;
  double min_h = 0.0;
  double barrier_state = 0.0;
  double goal_distance = 0.0;
  bool nominal_converged = false;
  bool ancillary_converged = false;
};

struct TrialResult {
  Outcome outcome = Outcome::Timeout;
  int steps = 0;  // steps executed before termination
  double final_goal_distance = 0.0;
  double min_h_seen = 0.0;
  VectorXd final_theta_ancillary, final_theta_nominal;
  std::vector<StepRecord> log;  // filled when MpcOptions::log_steps
};

TrialResult run_trial(const SystemSetup& setup, const MpcOptions& opts,
                      std::uint64_t trial);

}  // namespace dtmpc

#endif  // DTMPC_TUBE_MPC_HPP
