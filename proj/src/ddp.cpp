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

#include "dtmpc/ddp.hpp"

#include <cmath>
#include <limits>

namespace dtmpc {

double OCProblem::total_cost(const Trajectory& traj, const VectorXd& th) const {
  if (traj.horizon() != horizon ||
      static_cast<int>(traj.xs.size()) != horizon + 1) {
    throw HorizonMismatch("trajectory horizon does not match the problem");
  }
  double c = 0.0;
  for (int k = 0; k < horizon; ++k) c += running_cost(k, traj.xs[k], traj.us[k], th);
  c += terminal_cost(traj.xs[horizon], th);
  return c;
}

Trajectory OCProblem::rollout(const std::vector<VectorXd>& us,
                              const VectorXd& th) const {
  Trajectory traj;
  traj.us = us;
  traj.xs.resize(us.size() + 1);
  traj.xs[0] = init(th);
  for (std::size_t k = 0; k < us.size(); ++k) {
    VectorXd u = traj.us[k];
    if (bounds) u = bounds->clamp(u);
    traj.us[k] = u;
    traj.xs[k + 1] = dynamics(traj.xs[k], u, th);
    if (!traj.xs[k + 1].allFinite()) {
      throw NonFiniteState("rollout produced a non-finite state at step " +
                           std::to_string(k));
    }
  }
  return traj;
}

Trajectory OCProblem::zero_init() const {
  std::vector<VectorXd> us(horizon, VectorXd::Zero(n_u));
  return rollout(us, theta);
}

void attach_dynamics(OCProblem& p, const DynamicsModel& model) {
  p.n_x = model.n_x;
  p.n_u = model.n_u;
  p.dynamics = [model](const VectorXd& x, const VectorXd& u,
                       const VectorXd&) { return model.step(x, u); };
  p.dynamics_jacobians = [model](const VectorXd& x, const VectorXd& u,
                                 const VectorXd&, MatrixXd& fx, MatrixXd& fu) {
    model.jacobians(x, u, fx, fu);
  };
  if (model.param_jacobian) {
    p.dynamics_param_jacobian = [model](const VectorXd& x, const VectorXd& u,
                                        const VectorXd& th) {
      return model.param_jacobian(x, u, th);
    };
  }
  if (model.hessian_contraction) {
    p.dynamics_hessian = [model](const VectorXd& x, const VectorXd& u,
                                 const VectorXd&, const VectorXd& lam,
                                 MatrixXd& hxx, MatrixXd& hux, MatrixXd& huu) {
      model.hessian_contraction(x, u, lam, hxx, hux, huu);
    };
  }
}

std::vector<VectorXd> extract_multipliers(const OCProblem& p,
                                          const Trajectory& traj,
                                          const VectorXd& th) {
  const int N = p.horizon;
  std::vector<VectorXd> lam(N + 1);
  VectorXd phix;
  MatrixXd phixx;
  p.terminal_cost_derivs(traj.xs[N], th, phix, phixx);
  lam[N] = phix;
  VectorXd lx, lu;
  MatrixXd lxx, lux, luu, fx, fu;
  for (int k = N - 1; k >= 0; --k) {
    p.running_cost_derivs(k, traj.xs[k], traj.us[k], th, lx, lu, lxx, lux, luu);
    p.dynamics_jacobians(traj.xs[k], traj.us[k], th, fx, fu);
    lam[k] = lx + fx.transpose() * lam[k + 1];
  }
  return lam;
}

namespace {

// lambda-contracted dynamics curvature by central differences of the
// analytic Jacobians; exact (zero) when the Jacobians are constant.
void hessian_fd(const OCProblem& p, const VectorXd& x, const VectorXd& u,
                const VectorXd& th, const VectorXd& lam, MatrixXd& hxx,
                MatrixXd& hux, MatrixXd& huu) {
  const int nx = static_cast<int>(x.size());
  const int nu = static_cast<int>(u.size());
  hxx = MatrixXd::Zero(nx, nx);
  hux = MatrixXd::Zero(nu, nx);
  huu = MatrixXd::Zero(nu, nu);
  MatrixXd fxp(nx, nx), fup(nx, nu), fxm(nx, nx), fum(nx, nu);
  const double h0 = 1e-6;
  for (int j = 0; j < nx; ++j) {
    const double h = h0 * (1.0 + std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    p.dynamics_jacobians(xp, u, th, fxp, fup);
    p.dynamics_jacobians(xm, u, th, fxm, fum);
    // column j of d(f_x^T lam)/dx and of d(f_u^T lam)/dx
    hxx.col(j) = ((fxp - fxm).transpose() * lam) / (2.0 * h);
    hux.col(j) = ((fup - fum).transpose() * lam) / (2.0 * h);
  }
  for (int j = 0; j < nu; ++j) {
    const double h = h0 * (1.0 + std::abs(u(j)));
    VectorXd up = u, um = u;
    up(j) += h;
    um(j) -= h;
    p.dynamics_jacobians(x, up, th, fxp, fup);
    p.dynamics_jacobians(x, um, th, fxm, fum);
    huu.col(j) = ((fup - fum).transpose() * lam) / (2.0 * h);
  }
  hxx = 0.5 * (hxx + hxx.transpose()).eval();
  huu = 0.5 * (huu + huu.transpose()).eval();
}

}  // namespace

DerivativeBundle compute_derivatives(const OCProblem& p, const Trajectory& traj,
                                     const std::vector<VectorXd>& lambdas,
                                     DerivMode mode, bool with_param_blocks) {
  const int N = p.horizon;
  DerivativeBundle d;
  d.n_x = p.n_x;
  d.n_u = p.n_u;
  d.n_theta = p.n_theta;
  d.horizon = N;
  d.mode = mode;
  d.has_param_blocks = with_param_blocks;
  d.fx.resize(N);
  d.fu.resize(N);
  d.lx.resize(N);
  d.lu.resize(N);
  d.lxx.resize(N);
  d.lux.resize(N);
  d.luu.resize(N);
  if (with_param_blocks) {
    d.ftheta.resize(N);
    d.lxt.resize(N);
    d.lut.resize(N);
  }

  std::vector<VectorXd> lam = lambdas;
  if (mode == DerivMode::FullNewton && lam.empty()) {
    lam = extract_multipliers(p, traj, p.theta);
  }

  const VectorXd& th = p.theta;
  for (int k = 0; k < N; ++k) {
    const VectorXd& x = traj.xs[k];
    const VectorXd& u = traj.us[k];
    p.dynamics_jacobians(x, u, th, d.fx[k], d.fu[k]);
    p.running_cost_derivs(k, x, u, th, d.lx[k], d.lu[k], d.lxx[k], d.lux[k],
                          d.luu[k]);
    if (mode == DerivMode::FullNewton) {
      MatrixXd hxx, hux, huu;
      if (p.dynamics_hessian) {
        p.dynamics_hessian(x, u, th, lam[k + 1], hxx, hux, huu);
      } else {
        hessian_fd(p, x, u, th, lam[k + 1], hxx, hux, huu);
      }
      d.lxx[k] += hxx;
      d.lux[k] += hux;
      d.luu[k] += huu;
    }
    if (with_param_blocks) {
      if (p.dynamics_param_jacobian) {
        d.ftheta[k] = p.dynamics_param_jacobian(x, u, th);
      } else {
        d.ftheta[k] = MatrixXd::Zero(p.n_x, p.n_theta);
      }
      if (p.running_cost_param_derivs) {
        p.running_cost_param_derivs(k, x, u, th, d.lxt[k], d.lut[k]);
      } else {
        d.lxt[k] = MatrixXd::Zero(p.n_x, p.n_theta);
        d.lut[k] = MatrixXd::Zero(p.n_u, p.n_theta);
      }
    }
  }
  p.terminal_cost_derivs(traj.xs[N], th, d.phix, d.phixx);
  if (with_param_blocks) {
    if (p.terminal_cost_param_derivs) {
      d.phixt = p.terminal_cost_param_derivs(traj.xs[N], th);
    } else {
      d.phixt = MatrixXd::Zero(p.n_x, p.n_theta);
    }
    if (p.init_jacobian) {
      d.xi_theta = p.init_jacobian(th);
    } else {
      d.xi_theta = MatrixXd::Zero(p.n_x, p.n_theta);
    }
  }
  return d;
}

BackwardPassResult backward_pass(const DerivativeBundle& d, double reg,
                                 const std::vector<VectorXd>* ref_us,
                                 const ControlBounds* bounds) {
  const int N = d.horizon;
  BackwardPassResult bp;
  bp.k.resize(N);
  bp.K.resize(N);
  bp.Vx.resize(N + 1);
  bp.Vxx.resize(N + 1);
  bp.Vx[N] = d.phix;
  bp.Vxx[N] = d.phixx;
  const double bound_tol = 1e-9;
  for (int k = N - 1; k >= 0; --k) {
    const MatrixXd& fx = d.fx[k];
    const MatrixXd& fu = d.fu[k];
    const VectorXd Qx = d.lx[k] + fx.transpose() * bp.Vx[k + 1];
    const VectorXd Qu = d.lu[k] + fu.transpose() * bp.Vx[k + 1];
    const MatrixXd Qxx = d.lxx[k] + fx.transpose() * bp.Vxx[k + 1] * fx;
    const MatrixXd Qux = d.lux[k] + fu.transpose() * bp.Vxx[k + 1] * fx;
    const MatrixXd Quu = d.luu[k] + fu.transpose() * bp.Vxx[k + 1] * fu;

    std::vector<int> free_idx;
    free_idx.reserve(d.n_u);
    for (int i = 0; i < d.n_u; ++i) {
      bool pinned = false;
      if (ref_us && bounds) {
        const double u = (*ref_us)[k](i);
        pinned = (u <= bounds->lower(i) + bound_tol && Qu(i) > 0.0) ||
                 (u >= bounds->upper(i) - bound_tol && Qu(i) < 0.0);
      }
      if (!pinned) free_idx.push_back(i);
    }

    bp.k[k] = VectorXd::Zero(d.n_u);
    bp.K[k] = MatrixXd::Zero(d.n_u, d.n_x);
    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      MatrixXd Quu_f(nf, nf), Qux_f(nf, d.n_x);
      VectorXd Qu_f(nf);
      for (int a = 0; a < nf; ++a) {
        Qu_f(a) = Qu(free_idx[a]);
        Qux_f.row(a) = Qux.row(free_idx[a]);
        for (int b = 0; b < nf; ++b) {
          Quu_f(a, b) = Quu(free_idx[a], free_idx[b]);
        }
      }
      MatrixXd Quu_reg = Quu_f;
      Quu_reg.diagonal().array() += reg;
      Eigen::LLT<MatrixXd> llt(Quu_reg);
      if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("Q_uu factorization failed at step " +
                                  std::to_string(k));
      }
      const VectorXd k_f = -llt.solve(Qu_f);
      const MatrixXd K_f = -llt.solve(Qux_f);
      for (int a = 0; a < nf; ++a) {
        bp.k[k](free_idx[a]) = k_f(a);
        bp.K[k].row(free_idx[a]) = K_f.row(a);
      }
      bp.expected_improvement +=
          -(k_f.dot(Qu_f) + 0.5 * k_f.dot(Quu_f * k_f));
    }
    bp.Vx[k] = Qx + Qux.transpose() * bp.k[k];
    MatrixXd Vxx = Qxx + Qux.transpose() * bp.K[k];
    bp.Vxx[k] = 0.5 * (Vxx + Vxx.transpose());
  }
  return bp;
}

Trajectory forward_pass(const OCProblem& p, const Trajectory& ref,
                        const BackwardPassResult& bp, double step_size,
                        const VectorXd& th) {
  const int N = p.horizon;
  Trajectory out;
  out.xs.resize(N + 1);
  out.us.resize(N);
  out.xs[0] = ref.xs[0];
  for (int k = 0; k < N; ++k) {
    VectorXd u =
        ref.us[k] + step_size * bp.k[k] + bp.K[k] * (out.xs[k] - ref.xs[k]);
    if (p.bounds) u = p.bounds->clamp(u);
    out.us[k] = u;
    out.xs[k + 1] = p.dynamics(out.xs[k], u, th);
    if (!out.xs[k + 1].allFinite() || out.xs[k + 1].norm() > 1e8) {
      throw NonFiniteState("forward pass diverged at step " +
                           std::to_string(k));
    }
  }
  return out;
}

std::vector<std::vector<int>> active_set(const OCProblem& p,
                                         const Trajectory& traj,
                                         const std::vector<VectorXd>& lambdas,
                                         const VectorXd& th) {
  const int N = p.horizon;
  std::vector<std::vector<int>> active(N);
  if (!p.bounds) return active;
  const double tol = 1e-9;
  VectorXd lx, lu;
  MatrixXd lxx, lux, luu, fx, fu;
  for (int k = 0; k < N; ++k) {
    p.running_cost_derivs(k, traj.xs[k], traj.us[k], th, lx, lu, lxx, lux, luu);
    p.dynamics_jacobians(traj.xs[k], traj.us[k], th, fx, fu);
    const VectorXd g = lu + fu.transpose() * lambdas[k + 1];
    for (int i = 0; i < p.n_u; ++i) {
      const double u = traj.us[k](i);
      const bool at_lower = u <= p.bounds->lower(i) + tol && g(i) > 0.0;
      const bool at_upper = u >= p.bounds->upper(i) - tol && g(i) < 0.0;
      if (at_lower || at_upper) active[k].push_back(i);
    }
  }
  return active;
}

double kkt_residual(const OCProblem& p, const Trajectory& traj,
                    const std::vector<VectorXd>& lambdas, const VectorXd& th) {
  const int N = p.horizon;
  const auto active = active_set(p, traj, lambdas, th);
  double r = 0.0;
  VectorXd lx, lu;
  MatrixXd lxx, lux, luu, fx, fu;
  for (int k = 0; k < N; ++k) {
    p.running_cost_derivs(k, traj.xs[k], traj.us[k], th, lx, lu, lxx, lux, luu);
    p.dynamics_jacobians(traj.xs[k], traj.us[k], th, fx, fu);
    VectorXd g = lu + fu.transpose() * lambdas[k + 1];
    for (int i : active[k]) g(i) = 0.0;
    r = std::max(r, g.lpNorm<Eigen::Infinity>());
  }
  return r;
}

Solution solve(const OCProblem& p, const Trajectory& init,
               const SolveOptions& opts) {
  Solution sol;
  sol.traj = init;
  if (sol.traj.horizon() != p.horizon) {
    throw HorizonMismatch("initial trajectory horizon mismatch");
  }
  sol.cost = p.total_cost(sol.traj, p.theta);
  double reg = opts.reg_init;
  bool converged = false;
  int iters = 0;
  for (int iter = 0; iter < opts.budget; ++iter) {
    ++iters;
    DerivativeBundle d =
        compute_derivatives(p, sol.traj, {}, opts.mode, false);
    BackwardPassResult bp;
    bool have_bp = false;
    while (!have_bp) {
      try {
        bp = backward_pass(d, reg, &sol.traj.us,
                           p.bounds ? &*p.bounds : nullptr);
        have_bp = true;
      } catch (const NotPositiveDefinite&) {
        reg *= 10.0;
        if (reg > opts.reg_max) {
          sol.final_reg = reg;
          sol.iterations = iters;
          sol.converged = false;
          sol.budget_exhausted = false;
          sol.lambdas = extract_multipliers(p, sol.traj, p.theta);
          sol.kkt_residual = kkt_residual(p, sol.traj, sol.lambdas, p.theta);
          return sol;
        }
      }
    }
    // A predicted decrease already below tolerance means the iterate is
    // converged; one more (possibly tiny) accepted step still polishes it.
    const bool predicted_small =
        bp.expected_improvement >= 0.0 && bp.expected_improvement < opts.tol;
    bool accepted = false;
    double step = 1.0;
    for (int ls = 0; ls < opts.line_search_steps; ++ls, step *= 0.5) {
      Trajectory cand;
      try {
        cand = forward_pass(p, sol.traj, bp, step, p.theta);
      } catch (const NonFiniteState&) {
        continue;
      } catch (const DomainError&) {
        continue;
      }
      double c;
      try {
        c = p.total_cost(cand, p.theta);
      } catch (const DomainError&) {
        continue;
      }
      if (!std::isfinite(c)) continue;
      if (c < sol.cost) {
        const double improvement = sol.cost - c;
        sol.traj = cand;
        sol.cost = c;
        accepted = true;
        if (ls == 0) reg = std::max(reg * 0.5, opts.reg_min);
        if (improvement < opts.tol) converged = true;
        break;
      }
    }
    if (predicted_small) {
      converged = true;
      break;
    }
    if (!accepted) {
      reg *= 10.0;
      if (reg > opts.reg_max) break;
      // A rejected sweep still consumed a budget slot; retry with a larger
      // regularizer on the next iteration.
      continue;
    }
    if (converged) break;
  }
  sol.iterations = iters;
  sol.converged = converged;
  sol.budget_exhausted = !converged && iters >= opts.budget;
  sol.final_reg = reg;
  sol.lambdas = extract_multipliers(p, sol.traj, p.theta);
  sol.kkt_residual = kkt_residual(p, sol.traj, sol.lambdas, p.theta);
  return sol;
}

Solution solve(const OCProblem& p, const SolveOptions& opts) {
  return solve(p, p.zero_init(), opts);
}

}  // namespace dtmpc
