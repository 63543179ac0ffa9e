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

#ifndef DTMPC_BARRIER_HPP
#define DTMPC_BARRIER_HPP

#include <string>

#include "dtmpc/dynamics.hpp"
#include "dtmpc/types.hpp"

namespace dtmpc {

enum class BarrierKind { Inverse, Log, RelaxedInverse };

BarrierKind barrier_kind_from_string(const std::string& s);
std::string to_string(BarrierKind kind);

struct BarrierConfig {
  BarrierKind kind = BarrierKind::Inverse;
  double alpha = 0.0;  // relaxation threshold (RelaxedInverse only)
  double gamma = 0.0;  // barrier-state pole in [-1, 1]
  double q_b = 1.0;    // barrier penalty weight
};

/// B(zeta). Inverse and Log throw DomainError for zeta <= 0; RelaxedInverse
/// with alpha > 0 extends quadratically below alpha (C^1 at the seam) and is
/// defined for all zeta. alpha == 0 degenerates to Inverse.
double barrier_value(const BarrierConfig& cfg, double zeta);

/// dB/dzeta.
double barrier_slope(const BarrierConfig& cfg, double zeta);

/// dB/dalpha; zero unless RelaxedInverse with zeta < alpha.
double barrier_alpha_partial(const BarrierConfig& cfg, double zeta);

/// W(x) = sum_i B(h_i(x)) — the aggregated barrier over all constraints.
double barrier_sum(const BarrierConfig& cfg, const SafetyFunction& safety,
                   const VectorXd& x);

/// W(x) together with grad W(x) = sum_i B'(h_i(x)) grad h_i(x).
double barrier_sum_with_grad(const BarrierConfig& cfg,
                             const SafetyFunction& safety, const VectorXd& x,
                             VectorXd& grad);

/// dW/dalpha(x) (RelaxedInverse only, else zero).
double barrier_sum_alpha_partial(const BarrierConfig& cfg,
                                 const SafetyFunction& safety,
                                 const VectorXd& x);

/// Barrier-state update b' = W(f(x, u)) - gamma (W(x) - b).
double dbas_step(const BarrierConfig& cfg, const SafetyFunction& safety,
                 const DynamicsModel& model, const VectorXd& x,
                 const VectorXd& u, double b);

/// Equilibrium initialization b_0 = W(x_0).
double init_barrier_state(const BarrierConfig& cfg,
                          const SafetyFunction& safety, const VectorXd& x0);

/// Maps barrier parameters into slots of a problem parameter vector;
/// -1 leaves the entry out of theta (value taken from BarrierConfig).
struct BarrierThetaMap {
  int gamma_index = -1;
  int alpha_index = -1;
};

/// Safety-embedded dynamics over the stacked state (x, b) with analytic
/// chain-rule Jacobians. gamma/alpha are frozen at the config values;
/// param_jacobian exposes their columns per `map` (plus the base model's own
/// f_theta columns when present). Second derivatives fall back to FD.
DynamicsModel augment(const DynamicsModel& base, const SafetyFunction& safety,
                      const BarrierConfig& cfg, const BarrierThetaMap& map = {});

/// Theta-aware embedded dynamics callbacks: gamma/alpha are read from the
/// theta vector at the mapped slots on every call, so finite-difference
/// probes over theta see the true dependence.
struct AugmentedDynamics {
  int n_x = 0;  // base n_x + 1
  int n_u = 0;
  std::function<VectorXd(const VectorXd& x, const VectorXd& u,
                         const VectorXd& th)>
      step;
  std::function<void(const VectorXd& x, const VectorXd& u, const VectorXd& th,
                     MatrixXd& fx, MatrixXd& fu)>
      jacobians;
  std::function<MatrixXd(const VectorXd& x, const VectorXd& u,
                         const VectorXd& th)>
      param_jacobian;
};

AugmentedDynamics augment_parameterized(const DynamicsModel& base,
                                        const SafetyFunction& safety,
                                        const BarrierConfig& cfg,
                                        const BarrierThetaMap& map,
                                        int n_theta);

}  // namespace dtmpc

#endif  // DTMPC_BARRIER_HPP
