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

#ifndef DTMPC_DOC_HPP
#define DTMPC_DOC_HPP

#include <string>
#include <vector>

#include "dtmpc/ddp.hpp"

namespace dtmpc {

/// Outer loss over a trajectory with analytic per-step gradients.
/// grads must fill lx (N + 1 entries, last one terminal) and lu (N entries).
struct LossSpec {
  std::function<double(const Trajectory&)> value;
  std::function<void(const Trajectory&, std::vector<VectorXd>& lx,
                     std::vector<VectorXd>& lu)>
      grads;
};

enum class GradientRoute { DocFull, DocGaussNewton, Pdp, FiniteDifference };
GradientRoute route_from_string(const std::string& s);
std::string to_string(GradientRoute route);

struct DocBackwardOutput {
  std::vector<VectorXd> Vx_tilde;  // N + 1, loss-driven costates
  std::vector<VectorXd> k_tilde;   // N
  std::vector<MatrixXd> K;         // N
  std::vector<MatrixXd> Vxx;       // N + 1, loss-independent
};

/// Loss-driven Riccati sweep sharing the solver's Q_uu/Q_ux factorizations.
/// Components listed in active_sets are eliminated from the recursion (their
/// gain rows are zero), mirroring the solver's box-constraint handling.
DocBackwardOutput doc_backward(
    const DerivativeBundle& d, const std::vector<VectorXd>& loss_lx,
    const std::vector<VectorXd>& loss_lu, double reg = 0.0,
    const std::vector<std::vector<int>>& active_sets = {});

struct Hypergradient {
  VectorXd grad_theta;
  GradientRoute route = GradientRoute::DocGaussNewton;
  bool stationary = true;      // kkt residual below the trust threshold
  double kkt_residual = 0.0;
  // Primal sensitivities delta x_k / delta u_k (filled when store_deltas).
  std::vector<VectorXd> delta_x, delta_u;
};

/// Forward accumulation of the parameter gradient from a doc_backward sweep.
/// Components listed in active_sets have their delta u pinned to zero.
Hypergradient doc_forward(const DerivativeBundle& d,
                          const DocBackwardOutput& bw,
                          const std::vector<std::vector<int>>& active_sets,
                          bool store_deltas);

/// Full trajectory Jacobian d tau / d theta via the value-function
/// sensitivity recursion.
struct PdpJacobian {
  std::vector<MatrixXd> dx;  // N + 1, each n_x x n_theta
  std::vector<MatrixXd> du;  // N, each n_u x n_theta
};

PdpJacobian pdp_jacobian(const OCProblem& p, const Solution& sol,
                         DerivMode mode, double reg = 0.0);

struct HypergradOptions {
  double stationarity_tol = 1e-2;  // trust gate on the solver KKT residual
  double reg = 0.0;
  double fd_step = 1e-5;
  int fd_budget = 200;
  double fd_tol = 1e-10;
  bool store_deltas = false;
};

/// Gradient of loss(tau*(theta)) by the requested route. Routes DocFull,
/// DocGaussNewton and Pdp differentiate at the supplied solution; the
/// FiniteDifference route re-solves tightly around theta.
Hypergradient hypergradient(const OCProblem& p, const Solution& sol,
                            const LossSpec& loss, GradientRoute route,
                            const HypergradOptions& opts = {});

/// Central-difference gradient with per-component steps
/// h_i = fd_step * (1 + |theta_i|); inner solves use fd_tol / fd_budget and
/// throw InnerSolveFailed when not converged.
Hypergradient fd_hypergradient(const OCProblem& p, const LossSpec& loss,
                               const Trajectory& init,
                               const HypergradOptions& opts = {});

struct JacobianErrorRow {
  int budget = 0;
  double iterate_error = 0.0;   // || tau_hat - tau* ||_F
  double err_doc_full = 0.0;    // vs FD ground-truth Jacobian
  double err_gauss_newton = 0.0;
  double fd_floor = 0.0;        // FD self-consistency at h vs 2h
};

/// Jacobian accuracy vs solver budget: for each budget, differentiate at the
/// budget-limited iterate and compare against a tight-solve FD Jacobian.
std::vector<JacobianErrorRow> jacobian_error_experiment(
    const OCProblem& p, const Trajectory& init, const std::vector<int>& budgets,
    double fd_step = 1e-5);

}  // namespace dtmpc

#endif  // DTMPC_DOC_HPP
