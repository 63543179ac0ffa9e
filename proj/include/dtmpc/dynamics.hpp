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

#ifndef DTMPC_DYNAMICS_HPP
#define DTMPC_DYNAMICS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dtmpc/types.hpp"

namespace dtmpc {

/// Discrete-time dynamics model with analytic linearization.
///
/// `step` must be deterministic. `param_jacobian` (f_theta) and
/// `hessian_contraction` (lambda-weighted second derivatives) are optional;
/// when `hessian_contraction` is empty, callers fall back to central
/// differences of the analytic Jacobians (see hessian_contraction_fd).
struct DynamicsModel {
  int n_x = 0;
  int n_u = 0;
  double dt = 0.0;

  std::function<VectorXd(const VectorXd& x, const VectorXd& u)> step;
  std::function<void(const VectorXd& x, const VectorXd& u, MatrixXd& fx,
                     MatrixXd& fu)>
      jacobians;
  std::function<MatrixXd(const VectorXd& x, const VectorXd& u,
                         const VectorXd& theta)>
      param_jacobian;  // n_x x n_theta, may be empty
  std::function<void(const VectorXd& x, const VectorXd& u, const VectorXd& lam,
                     MatrixXd& hxx, MatrixXd& hux, MatrixXd& huu)>
      hessian_contraction;  // may be empty
};

/// lambda-contracted second derivatives of `step` by central differencing the
/// analytic Jacobians. Exact (zero) for models with constant Jacobians.
void hessian_contraction_fd(const DynamicsModel& model, const VectorXd& x,
                            const VectorXd& u, const VectorXd& lam,
                            MatrixXd& hxx, MatrixXd& hux, MatrixXd& huu);

/// Evaluates the model's contraction if provided, otherwise the FD fallback.
void contract_dynamics_hessian(const DynamicsModel& model, const VectorXd& x,
                               const VectorXd& u, const VectorXd& lam,
                               MatrixXd& hxx, MatrixXd& hux, MatrixXd& huu);

// --- Benchmark systems ----------------------------------------------------

VectorXd step_dubins(const VectorXd& x, const VectorXd& u, double dt);
VectorXd step_quadrotor(const VectorXd& x, const VectorXd& u, double dt);
VectorXd step_robot_arm(const VectorXd& x, const VectorXd& u, double dt);

DynamicsModel make_dubins(double dt = 0.01);
DynamicsModel make_quadrotor(double dt = 0.02);
DynamicsModel make_robot_arm(double dt = 0.02);

ControlBounds dubins_bounds();     // |v| <= 10, |omega| <= pi
ControlBounds quadrotor_bounds();  // thrust [0, 50], moments [-10, 10]
ControlBounds robot_arm_bounds();  // |torque| <= 10

// --- Robot arm kinematics -------------------------------------------------

// Three-link arm, link lengths 1, 1.5, 1. Angle layout per link i:
// (yaw_i, pitch_i), frames chained as R_i = R_{i-1} Rz(yaw_i) Ry(pitch_i)
// with every link along +x at the zero pose, so the zero-pose end effector
// sits at (3.5, 0, 0).
struct ArmPose {
  Eigen::Vector3d end_effector;
  std::vector<Eigen::Vector3d> link_points;  // sampled along each link
  std::vector<Eigen::Vector3d> joint_positions;  // base + 3 joints
};

ArmPose arm_forward_kinematics(const VectorXd& angles,
                               int samples_per_link = 4);

/// Analytic position Jacobian (3 x 6) of the end effector.
MatrixXd arm_ee_jacobian(const VectorXd& angles);

/// Analytic position Jacobian of the point at arc fraction s in [0, 1]
/// along link `link` (0-based).
MatrixXd arm_point_jacobian(const VectorXd& angles, int link, double s);

// --- Obstacles and safety functions ---------------------------------------

struct Obstacle {
  VectorXd center;
  double radius = 0.0;
};

/// min over obstacles of ||p - c||^2 - r^2; positive iff safe.
double obstacle_h(const VectorXd& position,
                  const std::vector<Obstacle>& obstacles);

/// One scalar safety constraint h_i(x) > 0 with analytic gradient.
struct Constraint {
  std::function<double(const VectorXd& x)> h;
  std::function<VectorXd(const VectorXd& x)> grad_h;
};

struct SafetyFunction {
  std::vector<Constraint> constraints;

  // Optional batch evaluators; when set they must agree with `constraints`
  // and are preferred on hot paths (they let the arm share one forward
  // kinematics pass across all of its point constraints).
  std::function<void(const VectorXd& x, std::vector<double>& h)> batch_h;
  std::function<void(const VectorXd& x, std::vector<double>& h,
                     std::vector<VectorXd>& grads)>
      batch_h_grads;

  std::size_t size() const { return constraints.size(); }
  void eval(const VectorXd& x, std::vector<double>& h) const;
  void eval_with_grads(const VectorXd& x, std::vector<double>& h,
                       std::vector<VectorXd>& grads) const;
  double min_h(const VectorXd& x) const;
};

/// Constraints of the form ||x_pos - c||^2 - r^2 over a slice of the state.
SafetyFunction make_obstacle_safety(const std::vector<Obstacle>& obstacles,
                                    int position_offset, int position_dim,
                                    int n_x);

/// Adds box bounds lo <= x_i <= hi on the given state indices as
/// (x_i - lo)(hi - x_i) style linear pairs: (x_i - lo) > 0 and (hi - x_i) > 0.
void add_state_bound_constraints(SafetyFunction& sf, int n_x,
                                 const std::vector<int>& indices, double lo,
                                 double hi);

/// Obstacle + floor constraints evaluated at sampled robot-arm link points.
SafetyFunction make_arm_safety(const std::vector<Obstacle>& obstacles,
                               int samples_per_link = 4);

/// Quadrotor benchmark field: 30 random spheres in [0,10]^3 with radii in
/// [0.5, 1.5] plus a fixed radius-1.5 sphere at (5,5,5). Spheres swallowing
/// the start or target point are resampled.
std::vector<Obstacle> quadrotor_obstacle_field(std::uint64_t seed,
                                               const Eigen::Vector3d& start,
                                               const Eigen::Vector3d& target,
                                               double margin = 0.25);

// --- Disturbances ---------------------------------------------------------

/// Componentwise uniform ranges with counter-based sampling: the draw for
/// (seed, trial, t, i) is a pure function of the key, so parallel trials
/// never share generator state.
struct DisturbanceConfig {
  std::vector<std::pair<double, double>> ranges;  // [lo_i, hi_i] per state
  std::uint64_t seed = 0;

  VectorXd sample(std::uint64_t trial, std::uint64_t t) const;
  double max_magnitude() const;
};

/// Deterministic uniform double in [0, 1) keyed by the arguments.
double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c);

}  // namespace dtmpc

#endif  // DTMPC_DYNAMICS_HPP
