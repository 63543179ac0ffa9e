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

#include "dtmpc/doc.hpp"

#include <algorithm>
#include <cmath>

namespace dtmpc {

GradientRoute route_from_string(const std::string& s) {
  if (s == "doc_full") return GradientRoute::DocFull;
  if (s == "doc_gauss_newton") return GradientRoute::DocGaussNewton;
  if (s == "pdp") return GradientRoute::Pdp;
  if (s == "fd") return GradientRoute::FiniteDifference;
  throw ConfigError("unknown gradient route: " + s);
}

std::string to_string(GradientRoute route) {
  switch (route) {
    case GradientRoute::DocFull:
      return "doc_full";
    case GradientRoute::DocGaussNewton:
      return "doc_gauss_newton";
    case GradientRoute::Pdp:
      return "pdp";
    case GradientRoute::FiniteDifference:
      return "fd";
  }
  return "doc_gauss_newton";
}

namespace {

Eigen::LLT<MatrixXd> factor_quu(const MatrixXd& Quu, double reg) {
  MatrixXd Quu_reg = Quu;
  Quu_reg.diagonal().array() += reg;
  Eigen::LLT<MatrixXd> llt(Quu_reg);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("Q_uu factorization failed in sensitivity pass");
  }
  return llt;
}

// Solves Quu X = -Rhs on the free control subsystem and zeroes the rows of
// actively clamped components, matching the solver's box handling.
MatrixXd pinned_gain(const MatrixXd& Quu, const MatrixXd& rhs, double reg,
                     const std::vector<int>& active) {
  const int nu = static_cast<int>(Quu.rows());
  if (active.empty()) {
    return -factor_quu(Quu, reg).solve(rhs);
  }
  std::vector<int> free_idx;
  free_idx.reserve(nu);
  for (int i = 0; i < nu; ++i) {
    if (std::find(active.begin(), active.end(), i) == active.end()) {
      free_idx.push_back(i);
    }
  }
  MatrixXd out = MatrixXd::Zero(nu, rhs.cols());
  if (free_idx.empty()) return out;
  const int nf = static_cast<int>(free_idx.size());
  MatrixXd Quu_f(nf, nf), rhs_f(nf, rhs.cols());
  for (int a = 0; a < nf; ++a) {
    rhs_f.row(a) = rhs.row(free_idx[a]);
    for (int b = 0; b < nf; ++b) Quu_f(a, b) = Quu(free_idx[a], free_idx[b]);
  }
  const MatrixXd sol = -factor_quu(Quu_f, reg).solve(rhs_f);
  for (int a = 0; a < nf; ++a) out.row(free_idx[a]) = sol.row(a);
  return out;
}

const std::vector<int>& active_at(const std::vector<std::vector<int>>& sets,
                                  int k) {
  static const std::vector<int> none;
  return k < static_cast<int>(sets.size()) ? sets[k] : none;
}

}  // namespace

DocBackwardOutput doc_backward(const DerivativeBundle& d,
                               const std::vector<VectorXd>& loss_lx,
                               const std::vector<VectorXd>& loss_lu,
                               double reg,
                               const std::vector<std::vector<int>>& active_sets) {
  const int N = d.horizon;
  if (static_cast<int>(loss_lx.size()) != N + 1 ||
      static_cast<int>(loss_lu.size()) != N) {
    throw HorizonMismatch("loss gradient lengths do not match the horizon");
  }
  DocBackwardOutput out;
  out.Vx_tilde.resize(N + 1);
  out.k_tilde.resize(N);
  out.K.resize(N);
  out.Vxx.resize(N + 1);
  out.Vx_tilde[N] = loss_lx[N];
  out.Vxx[N] = d.phixx;
  for (int k = N - 1; k >= 0; --k) {
    const MatrixXd& fx = d.fx[k];
    const MatrixXd& fu = d.fu[k];
    const MatrixXd Qxx = d.lxx[k] + fx.transpose() * out.Vxx[k + 1] * fx;
    const MatrixXd Qux = d.lux[k] + fu.transpose() * out.Vxx[k + 1] * fx;
    const MatrixXd Quu = d.luu[k] + fu.transpose() * out.Vxx[k + 1] * fu;
    const VectorXd Qu_t = loss_lu[k] + fu.transpose() * out.Vx_tilde[k + 1];
    const VectorXd Qx_t = loss_lx[k] + fx.transpose() * out.Vx_tilde[k + 1];
    const auto& act = active_at(active_sets, k);
    out.k_tilde[k] = pinned_gain(Quu, MatrixXd(Qu_t), reg, act);
    out.K[k] = pinned_gain(Quu, Qux, reg, act);
    out.Vx_tilde[k] = Qx_t + Qux.transpose() * out.k_tilde[k];
    MatrixXd Vxx = Qxx + Qux.transpose() * out.K[k];
    out.Vxx[k] = 0.5 * (Vxx + Vxx.transpose());
  }
  return out;
}

Hypergradient doc_forward(const DerivativeBundle& d,
                          const DocBackwardOutput& bw,
                          const std::vector<std::vector<int>>& active_sets,
                          bool store_deltas) {
  const int N = d.horizon;
  if (!d.has_param_blocks) {
    throw std::logic_error("doc_forward requires parameter derivative blocks");
  }
  Hypergradient hg;
  hg.grad_theta = VectorXd::Zero(d.n_theta);
  if (store_deltas) {
    hg.delta_x.resize(N + 1);
    hg.delta_u.resize(N);
  }
  VectorXd dx = VectorXd::Zero(d.n_x);
  VectorXd dlam = bw.Vx_tilde[0];
  hg.grad_theta += d.xi_theta.transpose() * dlam;
  if (store_deltas) hg.delta_x[0] = dx;
  for (int k = 0; k < N; ++k) {
    VectorXd du = bw.k_tilde[k] + bw.K[k] * dx;
    if (k < static_cast<int>(active_sets.size())) {
      for (int i : active_sets[k]) du(i) = 0.0;
    }
    const VectorXd dx_next = d.fx[k] * dx + d.fu[k] * du;
    const VectorXd dlam_next = bw.Vx_tilde[k + 1] + bw.Vxx[k + 1] * dx_next;
    hg.grad_theta += d.lxt[k].transpose() * dx + d.lut[k].transpose() * du +
                     d.ftheta[k].transpose() * dlam_next;
    if (store_deltas) {
      hg.delta_u[k] = du;
      hg.delta_x[k + 1] = dx_next;
    }
    dx = dx_next;
  }
  hg.grad_theta += d.phixt.transpose() * dx;
  if (store_deltas) hg.delta_x[N] = dx;
  return hg;
}

PdpJacobian pdp_jacobian(const OCProblem& p, const Solution& sol,
                         DerivMode mode, double reg) {
  const int N = p.horizon;
  const DerivativeBundle d =
      compute_derivatives(p, sol.traj, sol.lambdas, mode, true);
  const auto active = active_set(p, sol.traj, sol.lambdas, p.theta);

  // Backward: V_xx as in the solver sweep plus the parameter block V_xtheta.
  std::vector<MatrixXd> Vxx(N + 1), Vxt(N + 1);
  std::vector<MatrixXd> Kff(N), Kfb(N);  // -Quu^-1 Qutheta, -Quu^-1 Qux
  Vxx[N] = d.phixx;
  Vxt[N] = d.phixt;
  double reg_try = reg;
  for (int attempt = 0;; ++attempt) {
    try {
      for (int k = N - 1; k >= 0; --k) {
        const MatrixXd& fx = d.fx[k];
        const MatrixXd& fu = d.fu[k];
        const MatrixXd Qxx = d.lxx[k] + fx.transpose() * Vxx[k + 1] * fx;
        const MatrixXd Qux = d.lux[k] + fu.transpose() * Vxx[k + 1] * fx;
        const MatrixXd Quu = d.luu[k] + fu.transpose() * Vxx[k + 1] * fu;
        const MatrixXd Qut =
            d.lut[k] +
            fu.transpose() * (Vxt[k + 1] + Vxx[k + 1] * d.ftheta[k]);
        const MatrixXd Qxt =
            d.lxt[k] +
            fx.transpose() * (Vxt[k + 1] + Vxx[k + 1] * d.ftheta[k]);
        const auto& act = active_at(active, k);
        Kff[k] = pinned_gain(Quu, Qut, reg_try, act);
        Kfb[k] = pinned_gain(Quu, Qux, reg_try, act);
        Vxt[k] = Qxt + Qux.transpose() * Kff[k];
        MatrixXd V = Qxx + Qux.transpose() * Kfb[k];
        Vxx[k] = 0.5 * (V + V.transpose());
      }
      break;
    } catch (const NotPositiveDefinite&) {
      if (attempt >= 12) throw;
      reg_try = std::max(reg_try * 10.0, 1e-8);
    }
  }

  PdpJacobian J;
  J.dx.resize(N + 1);
  J.du.resize(N);
  J.dx[0] = d.xi_theta;
  for (int k = 0; k < N; ++k) {
    MatrixXd du = Kff[k] + Kfb[k] * J.dx[k];
    for (int i : active[k]) du.row(i).setZero();
    J.du[k] = du;
    J.dx[k + 1] = d.fx[k] * J.dx[k] + d.fu[k] * du + d.ftheta[k];
  }
  return J;
}

Hypergradient fd_hypergradient(const OCProblem& p, const LossSpec& loss,
                               const Trajectory& init,
                               const HypergradOptions& opts) {
  SolveOptions so;
  so.budget = opts.fd_budget;
  so.tol = opts.fd_tol;
  so.mode = DerivMode::GaussNewton;
  Hypergradient hg;
  hg.route = GradientRoute::FiniteDifference;
  hg.grad_theta = VectorXd::Zero(p.n_theta);
  for (int i = 0; i < p.n_theta; ++i) {
    const double h = opts.fd_step * (1.0 + std::abs(p.theta(i)));
    double vals[2];
    for (int s = 0; s < 2; ++s) {
      OCProblem q = p;
      q.theta(i) += (s == 0 ? h : -h);
      // Re-roll the warm start so the initial trajectory is feasible for
      // the perturbed parameters (theta can move the initial state).
      Trajectory warm = q.rollout(init.us, q.theta);
      Solution sol = solve(q, warm, so);
      if (!sol.converged) {
        throw InnerSolveFailed(
            "finite-difference probe did not converge for theta component " +
            std::to_string(i));
      }
      vals[s] = loss.value(sol.traj);
    }
    hg.grad_theta(i) = (vals[0] - vals[1]) / (2.0 * h);
  }
  return hg;
}

Hypergradient hypergradient(const OCProblem& p, const Solution& sol,
                            const LossSpec& loss, GradientRoute route,
                            const HypergradOptions& opts) {
  if (route == GradientRoute::FiniteDifference) {
    Hypergradient hg = fd_hypergradient(p, loss, sol.traj, opts);
    hg.kkt_residual = sol.kkt_residual;
    hg.stationary = sol.kkt_residual <= opts.stationarity_tol;
    return hg;
  }

  std::vector<VectorXd> loss_lx, loss_lu;
  loss.grads(sol.traj, loss_lx, loss_lu);

  if (route == GradientRoute::Pdp) {
    PdpJacobian J = pdp_jacobian(p, sol, DerivMode::FullNewton, opts.reg);
    Hypergradient hg;
    hg.route = route;
    hg.grad_theta = VectorXd::Zero(p.n_theta);
    for (int k = 0; k < p.horizon; ++k) {
      hg.grad_theta += J.dx[k].transpose() * loss_lx[k];
      hg.grad_theta += J.du[k].transpose() * loss_lu[k];
    }
    hg.grad_theta += J.dx[p.horizon].transpose() * loss_lx[p.horizon];
    hg.kkt_residual = sol.kkt_residual;
    hg.stationary = sol.kkt_residual <= opts.stationarity_tol;
    return hg;
  }

  const DerivMode mode = route == GradientRoute::DocFull
                             ? DerivMode::FullNewton
                             : DerivMode::GaussNewton;
  const DerivativeBundle d =
      compute_derivatives(p, sol.traj, sol.lambdas, mode, true);
  const auto active = active_set(p, sol.traj, sol.lambdas, p.theta);
  double reg_try = opts.reg;
  for (int attempt = 0;; ++attempt) {
    try {
      DocBackwardOutput bw = doc_backward(d, loss_lx, loss_lu, reg_try, active);
      Hypergradient hg = doc_forward(d, bw, active, opts.store_deltas);
      hg.route = route;
      hg.kkt_residual = sol.kkt_residual;
      hg.stationary = sol.kkt_residual <= opts.stationarity_tol;
      return hg;
    } catch (const NotPositiveDefinite&) {
      if (attempt >= 12) throw;
      reg_try = std::max(reg_try * 10.0, 1e-8);
    }
  }
}

namespace {

VectorXd stack_trajectory(const Trajectory& traj) {
  int n = 0;
  for (const auto& x : traj.xs) n += static_cast<int>(x.size());
  for (const auto& u : traj.us) n += static_cast<int>(u.size());
  VectorXd v(n);
  int at = 0;
  for (const auto& x : traj.xs) {
    v.segment(at, x.size()) = x;
    at += static_cast<int>(x.size());
  }
  for (const auto& u : traj.us) {
    v.segment(at, u.size()) = u;
    at += static_cast<int>(u.size());
  }
  return v;
}

MatrixXd stack_jacobian(const PdpJacobian& J) {
  int rows = 0;
  for (const auto& m : J.dx) rows += static_cast<int>(m.rows());
  for (const auto& m : J.du) rows += static_cast<int>(m.rows());
  const int cols = static_cast<int>(J.dx[0].cols());
  MatrixXd out(rows, cols);
  int at = 0;
  for (const auto& m : J.dx) {
    out.middleRows(at, m.rows()) = m;
    at += static_cast<int>(m.rows());
  }
  for (const auto& m : J.du) {
    out.middleRows(at, m.rows()) = m;
    at += static_cast<int>(m.rows());
  }
  return out;
}

MatrixXd fd_trajectory_jacobian(const OCProblem& p, const Trajectory& init,
                                double fd_step) {
  SolveOptions so;
  so.budget = 200;
  so.tol = 1e-10;
  MatrixXd J;
  for (int i = 0; i < p.n_theta; ++i) {
    const double h = fd_step * (1.0 + std::abs(p.theta(i)));
    VectorXd cols[2];
    for (int s = 0; s < 2; ++s) {
      OCProblem q = p;
      q.theta(i) += (s == 0 ? h : -h);
      Trajectory warm = q.rollout(init.us, q.theta);
      Solution sol = solve(q, warm, so);
      if (!sol.converged) {
        throw InnerSolveFailed("finite-difference reference solve failed");
      }
      cols[s] = stack_trajectory(sol.traj);
    }
    if (J.size() == 0) J.resize(cols[0].size(), p.n_theta);
    J.col(i) = (cols[0] - cols[1]) / (2.0 * h);
  }
  return J;
}

}  // namespace

std::vector<JacobianErrorRow> jacobian_error_experiment(
    const OCProblem& p, const Trajectory& init, const std::vector<int>& budgets,
    double fd_step) {
  SolveOptions tight;
  tight.budget = 200;
  tight.tol = 1e-10;
  const Solution star = solve(p, init, tight);
  const VectorXd z_star = stack_trajectory(star.traj);

  const MatrixXd J_fd = fd_trajectory_jacobian(p, init, fd_step);
  const MatrixXd J_fd_coarse = fd_trajectory_jacobian(p, init, 2.0 * fd_step);
  const double floor = (J_fd - J_fd_coarse).norm();

  std::vector<JacobianErrorRow> rows;
  for (int b : budgets) {
    SolveOptions so;
    so.budget = b;
    so.tol = 1e-14;  // never trip the improvement test: use the whole budget
    const Solution sol = solve(p, init, so);
    JacobianErrorRow row;
    row.budget = b;
    row.iterate_error = (stack_trajectory(sol.traj) - z_star).norm();
    row.err_doc_full =
        (stack_jacobian(pdp_jacobian(p, sol, DerivMode::FullNewton)) - J_fd)
            .norm();
    row.err_gauss_newton =
        (stack_jacobian(pdp_jacobian(p, sol, DerivMode::GaussNewton)) - J_fd)
            .norm();
    row.fd_floor = floor;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dtmpc
