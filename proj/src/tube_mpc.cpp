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

#include "dtmpc/tube_mpc.hpp"

#include <cmath>
#include <memory>

namespace dtmpc {

VectorXd ControllerParams::to_theta() const {
  VectorXd th(n_theta());
  th.head(q_diag.size()) = q_diag;
  th.segment(q_diag.size(), r_diag.size()) = r_diag;
  th(qb_index()) = q_b;
  th(gamma_index()) = gamma;
  th(alpha_index()) = alpha;
  return th;
}

void ControllerParams::from_theta(const VectorXd& th) {
  if (th.size() != n_theta()) {
    throw std::invalid_argument("parameter vector size mismatch");
  }
  q_diag = th.head(q_diag.size());
  r_diag = th.segment(q_diag.size(), r_diag.size());
  q_b = th(qb_index());
  gamma = th(gamma_index());
  alpha = th(alpha_index());
}

void ControllerParams::project() {
  q_diag = q_diag.cwiseMax(0.0);
  r_diag = r_diag.cwiseMax(1e-4);
  q_b = std::clamp(q_b, 0.0, 1.0);
  gamma = std::clamp(gamma, -1.0, 1.0);
  alpha = std::max(alpha, 0.0);
}

void nesterov_update(VectorXd& theta, VectorXd& velocity, const VectorXd& grad,
                     double eta, double mu, const std::vector<bool>& frozen) {
  for (int i = 0; i < theta.size(); ++i) {
    if (i < static_cast<int>(frozen.size()) && frozen[i]) continue;
    velocity(i) = mu * velocity(i) + grad(i);
    theta(i) -= eta * (grad(i) + mu * velocity(i));
  }
}

namespace {

BarrierConfig cfg_from_theta(const BarrierConfig& base,
                             const BarrierThetaMap& map, const VectorXd& th) {
  BarrierConfig c = base;
  if (map.gamma_index >= 0 && map.gamma_index < th.size())
    c.gamma = th(map.gamma_index);
  if (map.alpha_index >= 0 && map.alpha_index < th.size())
    c.alpha = th(map.alpha_index);
  return c;
}

// Shared skeleton: embedded dynamics, initial state and barrier penalty
// wiring; costs are filled in by the nominal/ancillary builders.
OCProblem embedded_problem(const SystemSetup& setup,
                           const ControllerParams& params,
                           const VectorXd& x_plant) {
  OCProblem p;
  const int np = setup.model.n_x;
  p.n_x = np + 1;
  p.n_u = setup.model.n_u;
  p.horizon = setup.horizon;
  p.n_theta = params.n_theta();
  p.theta = params.to_theta();
  p.bounds = setup.bounds;

  BarrierConfig cfg;
  cfg.kind = setup.barrier_kind;
  cfg.alpha = params.alpha;
  cfg.gamma = params.gamma;
  cfg.q_b = params.q_b;
  BarrierThetaMap map{params.gamma_index(), params.alpha_index()};

  AugmentedDynamics aug = augment_parameterized(setup.model, setup.safety, cfg,
                                                map, p.n_theta);
  p.dynamics = aug.step;
  p.dynamics_jacobians = aug.jacobians;
  p.dynamics_param_jacobian = aug.param_jacobian;

  const SafetyFunction safety = setup.safety;
  p.init = [x_plant, safety, cfg, map, np](const VectorXd& th) {
    const BarrierConfig c = cfg_from_theta(cfg, map, th);
    VectorXd z0(np + 1);
    z0.head(np) = x_plant;
    z0(np) = barrier_sum(c, safety, x_plant);
    return z0;
  };
  p.init_jacobian = [x_plant, safety, cfg, map, np,
                     nt = p.n_theta](const VectorXd& th) {
    const BarrierConfig c = cfg_from_theta(cfg, map, th);
    MatrixXd xi = MatrixXd::Zero(np + 1, nt);
    if (map.alpha_index >= 0) {
      xi(np, map.alpha_index) = barrier_sum_alpha_partial(c, safety, x_plant);
    }
    return xi;
  };
  return p;
}

// Central-difference Hessian of an analytic gradient restricted to the
// leading `dims` components (used for the arm task-space cost).
template <typename GradFn>
MatrixXd fd_hessian_block(const GradFn& grad, const VectorXd& x, int dims) {
  MatrixXd H = MatrixXd::Zero(dims, dims);
  const double h0 = 1e-6;
  for (int j = 0; j < dims; ++j) {
    const double h = h0 * (1.0 + std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    H.col(j) = (grad(xp) - grad(xm)).head(dims) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose()).eval();
}

}  // namespace

OCProblem build_nominal_problem(const SystemSetup& setup,
                                const ControllerParams& params,
                                const VectorXd& x_plant) {
  OCProblem p = embedded_problem(setup, params, x_plant);
  const int np = setup.model.n_x;
  const int nu = setup.model.n_u;
  const int nq = static_cast<int>(params.q_diag.size());
  const int nr = static_cast<int>(params.r_diag.size());
  const int qb_i = params.qb_index();
  const VectorXd target = setup.target;
  const VectorXd qf = params.qf_diag.size() > 0 ? params.qf_diag
                                                : params.q_diag;

  if (!setup.ee_cost) {
    // State-target cost: sum q_i (x_i - t_i)^2 + sum r_j u_j^2 + q_b b^2.
    p.running_cost = [np, nq, nr, qb_i, target](int, const VectorXd& z,
                                                const VectorXd& u,
                                                const VectorXd& th) {
      const VectorXd dx = z.head(np) - target;
      const double b = z(np);
      return th.head(nq).dot(dx.cwiseProduct(dx)) +
             th.segment(nq, nr).dot(u.cwiseProduct(u)) + th(qb_i) * b * b;
    };
    p.running_cost_derivs = [np, nq, nr, qb_i, target](
                                int, const VectorXd& z, const VectorXd& u,
                                const VectorXd& th, VectorXd& lx, VectorXd& lu,
                                MatrixXd& lxx, MatrixXd& lux, MatrixXd& luu) {
      const VectorXd dx = z.head(np) - target;
      const double b = z(np);
      lx = VectorXd::Zero(np + 1);
      lx.head(np) = 2.0 * th.head(nq).cwiseProduct(dx);
      lx(np) = 2.0 * th(qb_i) * b;
      lu = 2.0 * th.segment(nq, nr).cwiseProduct(u);
      lxx = MatrixXd::Zero(np + 1, np + 1);
      lxx.diagonal().head(np) = 2.0 * th.head(nq);
      lxx(np, np) = 2.0 * th(qb_i);
      lux = MatrixXd::Zero(nr, np + 1);
      luu = (2.0 * th.segment(nq, nr)).asDiagonal();
    };
    p.running_cost_param_derivs =
        [np, nq, nr, qb_i, target, nt = p.n_theta](
            int, const VectorXd& z, const VectorXd& u, const VectorXd&,
            MatrixXd& lxt, MatrixXd& lut) {
          const VectorXd dx = z.head(np) - target;
          lxt = MatrixXd::Zero(np + 1, nt);
          lut = MatrixXd::Zero(u.size(), nt);
          for (int j = 0; j < nq; ++j) lxt(j, j) = 2.0 * dx(j);
          lxt(np, qb_i) = 2.0 * z(np);
          for (int j = 0; j < nr; ++j) lut(j, nq + j) = 2.0 * u(j);
        };
    p.terminal_cost = [np, qb_i, qf, target](const VectorXd& z,
                                             const VectorXd& th) {
      const VectorXd dx = z.head(np) - target;
      const double b = z(np);
      return qf.dot(dx.cwiseProduct(dx)) + th(qb_i) * b * b;
    };
    p.terminal_cost_derivs = [np, qb_i, qf, target](
                                 const VectorXd& z, const VectorXd& th,
                                 VectorXd& phix, MatrixXd& phixx) {
      const VectorXd dx = z.head(np) - target;
      phix = VectorXd::Zero(np + 1);
      phix.head(np) = 2.0 * qf.cwiseProduct(dx);
      phix(np) = 2.0 * th(qb_i) * z(np);
      phixx = MatrixXd::Zero(np + 1, np + 1);
      phixx.diagonal().head(np) = 2.0 * qf;
      phixx(np, np) = 2.0 * th(qb_i);
    };
    p.terminal_cost_param_derivs = [np, qb_i, nt = p.n_theta](
                                       const VectorXd& z, const VectorXd&) {
      MatrixXd pxt = MatrixXd::Zero(np + 1, nt);
      pxt(np, qb_i) = 2.0 * z(np);
      return pxt;
    };
    return p;
  }

  // Task-space (end-effector) cost for the robot arm: the running and
  // terminal state terms weight the end-effector error, not the joint state.
  const int na = 6;  // joint angles at the head of the arm state
  auto ee_grad = [target](const VectorXd& angles, const VectorXd& w) {
    const ArmPose pose = arm_forward_kinematics(angles, 1);
    const Eigen::Vector3d de = pose.end_effector - Eigen::Vector3d(target);
    const MatrixXd J = arm_ee_jacobian(angles);
    return VectorXd(2.0 * J.transpose() * w.cwiseProduct(Eigen::Vector3d(de)));
  };
  p.running_cost = [np, nq, nr, qb_i, target](int, const VectorXd& z,
                                              const VectorXd& u,
                                              const VectorXd& th) {
    const ArmPose pose = arm_forward_kinematics(z.head(6), 1);
    const Eigen::Vector3d de = pose.end_effector - Eigen::Vector3d(target);
    const double b = z(np);
    return th.head(nq).dot(de.cwiseProduct(de)) +
           th.segment(nq, nr).dot(u.cwiseProduct(u)) + th(qb_i) * b * b;
  };
  p.running_cost_derivs = [np, nq, nr, qb_i, na, ee_grad](
                              int, const VectorXd& z, const VectorXd& u,
                              const VectorXd& th, VectorXd& lx, VectorXd& lu,
                              MatrixXd& lxx, MatrixXd& lux, MatrixXd& luu) {
    const VectorXd angles = z.head(na);
    const VectorXd w = th.head(nq);
    lx = VectorXd::Zero(np + 1);
    lx.head(na) = ee_grad(angles, w);
    lx(np) = 2.0 * th(qb_i) * z(np);
    lu = 2.0 * th.segment(nq, nr).cwiseProduct(u);
    lxx = MatrixXd::Zero(np + 1, np + 1);
    lxx.topLeftCorner(na, na) = fd_hessian_block(
        [&](const VectorXd& a) { return ee_grad(a, w); }, angles, na);
    lxx(np, np) = 2.0 * th(qb_i);
    lux = MatrixXd::Zero(nr, np + 1);
    luu = (2.0 * th.segment(nq, nr)).asDiagonal();
  };
  p.running_cost_param_derivs = [np, nq, nr, qb_i, na, target,
                                 nt = p.n_theta](int, const VectorXd& z,
                                                 const VectorXd& u,
                                                 const VectorXd&, MatrixXd& lxt,
                                                 MatrixXd& lut) {
    const VectorXd angles = z.head(na);
    const ArmPose pose = arm_forward_kinematics(angles, 1);
    const Eigen::Vector3d de = pose.end_effector - Eigen::Vector3d(target);
    const MatrixXd J = arm_ee_jacobian(angles);
    lxt = MatrixXd::Zero(np + 1, nt);
    lut = MatrixXd::Zero(u.size(), nt);
    for (int j = 0; j < nq; ++j) {
      lxt.block(0, j, na, 1) = 2.0 * de(j) * J.row(j).transpose();
    }
    lxt(np, qb_i) = 2.0 * z(np);
    for (int j = 0; j < nr; ++j) lut(j, nq + j) = 2.0 * u(j);
  };
  p.terminal_cost = [np, qb_i, qf, target](const VectorXd& z,
                                           const VectorXd& th) {
    const ArmPose pose = arm_forward_kinematics(z.head(6), 1);
    const Eigen::Vector3d de = pose.end_effector - Eigen::Vector3d(target);
    const double b = z(np);
    return qf.dot(de.cwiseProduct(de)) + th(qb_i) * b * b;
  };
  p.terminal_cost_derivs = [np, qb_i, na, qf, ee_grad](
                               const VectorXd& z, const VectorXd& th,
                               VectorXd& phix, MatrixXd& phixx) {
    const VectorXd angles = z.head(na);
    phix = VectorXd::Zero(np + 1);
    phix.head(na) = ee_grad(angles, qf);
    phix(np) = 2.0 * th(qb_i) * z(np);
    phixx = MatrixXd::Zero(np + 1, np + 1);
    phixx.topLeftCorner(na, na) = fd_hessian_block(
        [&](const VectorXd& a) { return ee_grad(a, qf); }, angles, na);
    phixx(np, np) = 2.0 * th(qb_i);
  };
  p.terminal_cost_param_derivs = [np, qb_i, nt = p.n_theta](const VectorXd& z,
                                                            const VectorXd&) {
    MatrixXd pxt = MatrixXd::Zero(np + 1, nt);
    pxt(np, qb_i) = 2.0 * z(np);
    return pxt;
  };
  return p;
}

OCProblem build_ancillary_problem(const SystemSetup& setup,
                                  const ControllerParams& params,
                                  const VectorXd& x_plant,
                                  const Trajectory& nominal_ref) {
  if (nominal_ref.horizon() != setup.horizon) {
    throw HorizonMismatch("nominal reference horizon mismatch");
  }
  OCProblem p = embedded_problem(setup, params, x_plant);
  const int np = setup.model.n_x;
  const int nq = static_cast<int>(params.q_diag.size());
  const int nr = static_cast<int>(params.r_diag.size());
  const int qb_i = params.qb_index();
  if (nq != np) {
    throw std::invalid_argument(
        "ancillary state weights must match the plant dimension");
  }
  // Copy the reference plant states/controls out of the embedded plan. The
  // barrier state is tracked relative to the reference barrier state so that
  // the reference trajectory itself is the exact optimum of the tracking
  // problem (undisturbed tracking has zero cost).
  auto ref_x = std::make_shared<std::vector<VectorXd>>();
  auto ref_b = std::make_shared<std::vector<double>>();
  auto ref_u = std::make_shared<std::vector<VectorXd>>();
  for (const auto& z : nominal_ref.xs) {
    ref_x->push_back(z.head(np));
    ref_b->push_back(z(np));
  }
  *ref_u = nominal_ref.us;

  p.running_cost = [np, nq, nr, qb_i, ref_x, ref_b, ref_u](
                       int k, const VectorXd& z, const VectorXd& u,
                       const VectorXd& th) {
    const VectorXd dx = z.head(np) - (*ref_x)[k];
    const VectorXd du = u - (*ref_u)[k];
    const double db = z(np) - (*ref_b)[k];
    return th.head(nq).dot(dx.cwiseProduct(dx)) +
           th.segment(nq, nr).dot(du.cwiseProduct(du)) + th(qb_i) * db * db;
  };
  p.running_cost_derivs = [np, nq, nr, qb_i, ref_x, ref_b, ref_u](
                              int k, const VectorXd& z, const VectorXd& u,
                              const VectorXd& th, VectorXd& lx, VectorXd& lu,
                              MatrixXd& lxx, MatrixXd& lux, MatrixXd& luu) {
    const VectorXd dx = z.head(np) - (*ref_x)[k];
    const VectorXd du = u - (*ref_u)[k];
    lx = VectorXd::Zero(np + 1);
    lx.head(np) = 2.0 * th.head(nq).cwiseProduct(dx);
    lx(np) = 2.0 * th(qb_i) * (z(np) - (*ref_b)[k]);
    lu = 2.0 * th.segment(nq, nr).cwiseProduct(du);
    lxx = MatrixXd::Zero(np + 1, np + 1);
    lxx.diagonal().head(np) = 2.0 * th.head(nq);
    lxx(np, np) = 2.0 * th(qb_i);
    lux = MatrixXd::Zero(nr, np + 1);
    luu = (2.0 * th.segment(nq, nr)).asDiagonal();
  };
  p.running_cost_param_derivs = [np, nq, nr, qb_i, ref_x, ref_b, ref_u,
                                 nt = p.n_theta](int k, const VectorXd& z,
                                                 const VectorXd& u,
                                                 const VectorXd&, MatrixXd& lxt,
                                                 MatrixXd& lut) {
    const VectorXd dx = z.head(np) - (*ref_x)[k];
    const VectorXd du = u - (*ref_u)[k];
    lxt = MatrixXd::Zero(np + 1, nt);
    lut = MatrixXd::Zero(u.size(), nt);
    for (int j = 0; j < nq; ++j) lxt(j, j) = 2.0 * dx(j);
    lxt(np, qb_i) = 2.0 * (z(np) - (*ref_b)[k]);
    for (int j = 0; j < nr; ++j) lut(j, nq + j) = 2.0 * du(j);
  };
  const int N = setup.horizon;
  p.terminal_cost = [np, nq, qb_i, ref_x, ref_b, N](const VectorXd& z,
                                                    const VectorXd& th) {
    const VectorXd dx = z.head(np) - (*ref_x)[N];
    const double db = z(np) - (*ref_b)[N];
    return th.head(nq).dot(dx.cwiseProduct(dx)) + th(qb_i) * db * db;
  };
  p.terminal_cost_derivs = [np, nq, qb_i, ref_x, ref_b, N](
                               const VectorXd& z, const VectorXd& th,
                               VectorXd& phix, MatrixXd& phixx) {
    const VectorXd dx = z.head(np) - (*ref_x)[N];
    phix = VectorXd::Zero(np + 1);
    phix.head(np) = 2.0 * th.head(nq).cwiseProduct(dx);
    phix(np) = 2.0 * th(qb_i) * (z(np) - (*ref_b)[N]);
    phixx = MatrixXd::Zero(np + 1, np + 1);
    phixx.diagonal().head(np) = 2.0 * th.head(nq);
    phixx(np, np) = 2.0 * th(qb_i);
  };
  p.terminal_cost_param_derivs = [np, nq, qb_i, ref_x, ref_b, N,
                                  nt = p.n_theta](const VectorXd& z,
                                                  const VectorXd&) {
    const VectorXd dx = z.head(np) - (*ref_x)[N];
    MatrixXd pxt = MatrixXd::Zero(np + 1, nt);
    for (int j = 0; j < nq; ++j) pxt(j, j) = 2.0 * dx(j);
    pxt(np, qb_i) = 2.0 * (z(np) - (*ref_b)[N]);
    return pxt;
  };
  return p;
}

LossSpec make_deviation_loss(const Trajectory& nominal_ref, int n_plant,
                             bool position_only, int position_dim) {
  auto ref_x = std::make_shared<std::vector<VectorXd>>();
  for (const auto& z : nominal_ref.xs) ref_x->push_back(z.head(n_plant));
  auto ref_b = std::make_shared<std::vector<double>>();
  for (const auto& z : nominal_ref.xs) ref_b->push_back(z(n_plant));
  const int nd = position_only ? position_dim : n_plant;
  LossSpec loss;
  // The barrier component is measured against the reference barrier state:
  // perfect tracking gives exactly zero loss, and any deviation toward the
  // obstacles shows up through the barrier channel.
  loss.value = [ref_x, ref_b, n_plant, nd](const Trajectory& traj) {
    double L = 0.0;
    for (std::size_t k = 0; k < traj.xs.size(); ++k) {
      const VectorXd dev =
          traj.xs[k].head(nd) - (*ref_x)[k].head(nd);
      const double db = traj.xs[k](n_plant) - (*ref_b)[k];
      L += dev.squaredNorm() + db * db;
    }
    return L;
  };
  loss.grads = [ref_x, ref_b, n_plant, nd](const Trajectory& traj,
                                           std::vector<VectorXd>& lx,
                                           std::vector<VectorXd>& lu) {
    const int N = traj.horizon();
    lx.assign(N + 1, VectorXd());
    lu.assign(N, VectorXd());
    for (int k = 0; k <= N; ++k) {
      VectorXd g = VectorXd::Zero(n_plant + 1);
      g.head(nd) = 2.0 * (traj.xs[k].head(nd) - (*ref_x)[k].head(nd));
      g(n_plant) = 2.0 * (traj.xs[k](n_plant) - (*ref_b)[k]);
      lx[k] = g;
      if (k < N) lu[k] = VectorXd::Zero(traj.us[k].size());
    }
  };
  return loss;
}

void nominal_pullback_grads(const Trajectory& anc_traj,
                            const Trajectory& nominal_ref,
                            const Hypergradient& anc_sensitivity,
                            const ControllerParams& anc, int n_plant,
                            bool position_only, int position_dim,
                            std::vector<VectorXd>& lx,
                            std::vector<VectorXd>& lu) {
  const int N = nominal_ref.horizon();
  if (anc_sensitivity.delta_x.size() != static_cast<std::size_t>(N + 1)) {
    throw std::invalid_argument(
        "nominal pullback needs stored ancillary sensitivities");
  }
  const int nd = position_only ? position_dim : n_plant;
  lx.assign(N + 1, VectorXd());
  lu.assign(N, VectorXd());
  for (int k = 0; k <= N; ++k) {
    VectorXd g = VectorXd::Zero(n_plant + 1);
    // Direct dependence of the deviation loss on the reference.
    g.head(nd) -= 2.0 * (anc_traj.xs[k].head(nd) -
                         nominal_ref.xs[k].head(nd));
    g(n_plant) -= 2.0 * (anc_traj.xs[k](n_plant) -
                         nominal_ref.xs[k](n_plant));
    // Cross term of the ancillary tracking cost with the reference.
    g.head(n_plant) -=
        2.0 * anc.q_diag.cwiseProduct(
                  anc_sensitivity.delta_x[k].head(n_plant));
    g(n_plant) -= 2.0 * anc.q_b * anc_sensitivity.delta_x[k](n_plant);
    lx[k] = g;
    if (k < N) {
      lu[k] = -2.0 * anc.r_diag.cwiseProduct(anc_sensitivity.delta_u[k]);
    }
  }
}

// --- Benchmark setups ------------------------------------------------------

namespace {

std::vector<bool> freeze_gamma_alpha(const ControllerParams& p) {
  std::vector<bool> frozen(p.n_theta(), false);
  frozen[p.gamma_index()] = true;
  frozen[p.alpha_index()] = true;
  return frozen;
}

std::vector<bool> freeze_all(const ControllerParams& p) {
  return std::vector<bool>(p.n_theta(), true);
}

}  // namespace

SystemSetup make_dubins_setup() {
  SystemSetup s;
  s.name = "dubins";
  s.model = make_dubins(0.01);
  s.bounds = dubins_bounds();
  std::vector<Obstacle> obstacles;
  for (auto [cx, cy, r] : {std::tuple{5.3, 4.6, 1.0},
                           std::tuple{6.2, 7.2, 0.9},
                           std::tuple{8.4, 8.3, 0.65}}) {
    Obstacle o;
    o.center = Eigen::Vector2d(cx, cy);
    o.radius = r;
    obstacles.push_back(o);
  }
  s.safety = make_obstacle_safety(obstacles, 0, 2, 3);
  s.barrier_kind = BarrierKind::Inverse;
  s.target = Eigen::Vector3d(10.0, 10.0, M_PI / 4.0);
  s.horizon = 50;
  s.task_horizon = 300;
  s.success_radius = 0.25;
  s.position_dim = 2;
  s.noise.ranges.assign(3, {-0.05, 0.05});

  s.nominal.q_diag = Eigen::Vector3d(1.0, 1.0, 0.0);
  s.nominal.r_diag = Eigen::Vector2d(1.0, 1.0);
  s.nominal.qf_diag = Eigen::Vector3d::Constant(1000.0);
  s.nominal.q_b = 1.0;
  s.nominal.frozen = freeze_all(s.nominal);

  s.ancillary.q_diag = VectorXd::Ones(3);
  s.ancillary.r_diag = VectorXd::Ones(2);
  s.ancillary.q_b = 1.0;
  s.ancillary.frozen = freeze_gamma_alpha(s.ancillary);

  s.initial_state = [](std::uint64_t) { return VectorXd::Zero(3).eval(); };
  s.goal_distance = [](const VectorXd& x) {
    return (x.head(2) - Eigen::Vector2d(10.0, 10.0)).norm();
  };
  s.default_control = VectorXd::Zero(2);
  return s;
}

SystemSetup make_quadrotor_setup(std::uint64_t obstacle_seed) {
  SystemSetup s;
  s.name = "quadrotor";
  s.model = make_quadrotor(0.02);
  s.bounds = quadrotor_bounds();
  const Eigen::Vector3d start(0.0, 0.0, 0.0), goal(10.0, 10.0, 10.0);
  const auto obstacles = quadrotor_obstacle_field(obstacle_seed, start, goal);
  s.safety = make_obstacle_safety(obstacles, 0, 3, 12);
  s.barrier_kind = BarrierKind::Inverse;
  s.target = VectorXd::Zero(12);
  s.target.head(3) = goal;
  s.horizon = 50;
  s.task_horizon = 300;
  s.success_radius = 0.5;
  s.position_dim = 3;
  s.noise.ranges.assign(12, {-0.1, 0.1});
  for (int i = 0; i < 6; ++i) s.noise.ranges[i] = {-0.01, 0.01};

  s.nominal.q_diag = VectorXd::Ones(12);
  s.nominal.r_diag = VectorXd::Ones(4);
  s.nominal.qf_diag = VectorXd::Constant(12, 1000.0);
  s.nominal.q_b = 1.0;
  s.nominal.frozen = freeze_all(s.nominal);

  s.ancillary.q_diag = VectorXd::Ones(12);
  s.ancillary.r_diag = VectorXd::Ones(4);
  s.ancillary.q_b = 1.0;
  s.ancillary.frozen = freeze_gamma_alpha(s.ancillary);

  s.initial_state = [](std::uint64_t) { return VectorXd::Zero(12).eval(); };
  s.goal_distance = [goal](const VectorXd& x) {
    return (x.head(3) - goal).norm();
  };
  s.extra_failure = [](const VectorXd& x) {
    for (int i = 0; i < 3; ++i) {
      if (x(i) < -2.0 || x(i) > 12.0) return true;
    }
    return false;
  };
  VectorXd hover = VectorXd::Zero(4);
  hover(0) = 9.81;
  s.default_control = hover;
  return s;
}

SystemSetup make_robot_arm_setup() {
  SystemSetup s;
  s.name = "robot_arm";
  s.model = make_robot_arm(0.02);
  s.bounds = robot_arm_bounds();
  std::vector<Obstacle> obstacles;
  for (auto [cx, cy] : {std::pair{1.0, 0.0}, std::pair{1.0, 1.5},
                        std::pair{1.0, -1.5}, std::pair{2.0, -2.0},
                        std::pair{2.0, 2.0}}) {
    Obstacle o;
    o.center = Eigen::Vector3d(cx, cy, 0.0);
    o.radius = 0.5;
    obstacles.push_back(o);
  }
  s.safety = make_arm_safety(obstacles);
  s.barrier_kind = BarrierKind::Inverse;
  s.target = Eigen::Vector3d(2.0, 0.0, 1.0);
  s.ee_cost = true;
  s.horizon = 50;
  s.task_horizon = 400;
  s.success_radius = 0.25;
  s.position_dim = 12;
  s.noise.ranges.assign(12, {-0.1, 0.1});
  for (int i = 0; i < 6; ++i) s.noise.ranges[i] = {-0.01, 0.01};

  s.nominal.q_diag = VectorXd::Constant(3, 100.0);
  s.nominal.r_diag = VectorXd::Constant(6, 100.0);
  s.nominal.qf_diag = VectorXd::Constant(3, 10000.0);
  s.nominal.q_b = 1e-3;
  s.nominal.frozen = freeze_gamma_alpha(s.nominal);

  s.ancillary.q_diag = VectorXd::Ones(12);
  s.ancillary.r_diag = VectorXd::Ones(6);
  s.ancillary.q_b = 1e-3;
  s.ancillary.frozen = freeze_gamma_alpha(s.ancillary);

  s.adapt_nominal = true;

  s.initial_state = [seed = s.noise.seed](std::uint64_t trial) {
    VectorXd x = VectorXd::Zero(12);
    const double base[6] = {0.0, -1.0, 0.0, 0.5, 0.0, 0.5};
    for (int i = 0; i < 6; ++i) {
      const double u = counter_uniform(seed + 1, trial, 500 + i, 0);
      x(i) = base[i] + 0.05 * (2.0 * u - 1.0);
    }
    return x;
  };
  s.goal_distance = [target = Eigen::Vector3d(2.0, 0.0, 1.0)](
                        const VectorXd& x) {
    const ArmPose pose = arm_forward_kinematics(x.head(6), 1);
    return (pose.end_effector - target).norm();
  };
  s.default_control = VectorXd::Zero(6);
  return s;
}

SystemSetup make_system_setup(const std::string& name,
                              std::uint64_t obstacle_seed) {
  if (name == "dubins") return make_dubins_setup();
  if (name == "quadrotor") return make_quadrotor_setup(obstacle_seed);
  if (name == "robot_arm") return make_robot_arm_setup();
  throw ConfigError("unknown system: " + name);
}

// --- Closed loop -----------------------------------------------------------

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Success:
      return "success";
    case Outcome::Violation:
      return "violation";
    case Outcome::Timeout:
      return "timeout";
    case Outcome::Diverged:
      return "diverged";
  }
  return "timeout";
}

namespace {

// Hypergradient at a budget-limited iterate: the curvature blocks may be
// indefinite away from the optimum, so escalate regularization until the
// factorizations go through. Returns false when even the largest
// regularization fails (the caller skips the update for this step).
// Projects theta through the parameter box and zeroes the momentum of any
// component the projection clamped. Leaving the velocity running while a
// component sits on the box boundary lets it integrate without bound, and a
// later gradient sign flip then launches the parameter far outside its
// useful range.
void project_with_momentum_reset(ControllerParams& params, VectorXd& theta,
                                 VectorXd& velocity) {
  params.from_theta(theta);
  params.project();
  const VectorXd projected = params.to_theta();
  for (int i = 0; i < theta.size(); ++i) {
    if (projected(i) != theta(i)) velocity(i) = 0.0;
  }
  theta = projected;
}

// The deviation loss has cliffs in parameter space (e.g. control weights
// near their floor while the reference is far away), where its gradient
// spikes by two orders of magnitude for a single MPC step. One unclipped
// spike through the momentum buffer launches a weight far outside its
// useful range, so gradients are clipped before the momentum step. The
// clip is per component: a spike in one weight's gradient should not
// scale down the (well-behaved) signal driving the others.
constexpr double kGradClip = 5.0;

VectorXd clip_components(const VectorXd& g, double limit) {
  return g.cwiseMax(-limit).cwiseMin(limit);
}

bool try_hypergradient(const OCProblem& p, const Solution& sol,
                       const LossSpec& loss, GradientRoute route,
                       HypergradOptions ho, Hypergradient& out) {
  for (double reg : {0.0, 1e-6, 1e-3, 1.0, 1e3}) {
    ho.reg = reg;
    try {
      out = hypergradient(p, sol, loss, route, ho);
      return true;
    } catch (const NotPositiveDefinite&) {
    }
  }
  return false;
}

std::vector<VectorXd> shifted_warm_start(const std::vector<VectorXd>& us) {
  std::vector<VectorXd> out(us.begin() + 1, us.end());
  out.push_back(us.back());
  return out;
}

Trajectory warm_or_default(const OCProblem& p,
                           const std::vector<VectorXd>& warm_us,
                           const VectorXd& default_u) {
  try {
    return p.rollout(warm_us, p.theta);
  } catch (const DomainError&) {
  } catch (const NonFiniteState&) {
  }
  std::vector<VectorXd> us(p.horizon, default_u);
  return p.rollout(us, p.theta);
}

}  // namespace

TrialResult run_trial(const SystemSetup& setup, const MpcOptions& opts,
                      std::uint64_t trial) {
  TrialResult res;
  const int np = setup.model.n_x;
  VectorXd x_true = setup.initial_state(trial);
  VectorXd x_nom = x_true;

  ControllerParams anc = setup.ancillary;
  ControllerParams nom = setup.nominal;
  VectorXd th_anc = anc.to_theta();
  VectorXd th_nom = nom.to_theta();
  VectorXd v_anc = VectorXd::Zero(th_anc.size());
  VectorXd v_nom = VectorXd::Zero(th_nom.size());

  std::vector<VectorXd> warm_nom(setup.horizon, setup.default_control);
  std::vector<VectorXd> warm_anc(setup.horizon, setup.default_control);

  SolveOptions so;
  so.budget = opts.adapt ? opts.adapt_solver_budget : opts.solver_budget;
  so.tol = opts.solver_tol;

  res.min_h_seen = setup.safety.min_h(x_true);
  res.final_goal_distance = setup.goal_distance(x_true);

  for (int t = 0; t < setup.task_horizon; ++t) {
    res.steps = t;
    if (res.min_h_seen <= 0.0) {
      res.outcome = Outcome::Violation;
      return res;
    }
    try {
      OCProblem nomp = build_nominal_problem(setup, nom, x_nom);
      Trajectory nom_init = warm_or_default(nomp, warm_nom,
                                            setup.default_control);
      Solution sol_nom = solve(nomp, nom_init, so);

      OCProblem ancp = build_ancillary_problem(setup, anc, x_true,
                                               sol_nom.traj);
      Trajectory anc_init = warm_or_default(ancp, warm_anc,
                                            setup.default_control);
      Solution sol_anc = solve(ancp, anc_init, so);

      LossSpec dev_loss = make_deviation_loss(
          sol_nom.traj, np, setup.loss_position_only, setup.position_dim);
      double loss_value = 0.0;
      double grad_norm = 0.0;
      // The update slot is only funded when at least one layer's solve
      // actually converged this cycle and the differentiated iterate is
      // close to stationary: gradients taken at interrupted or
      // far-from-stationary iterates are unreliable and can run the
      // weights away.
      if (opts.adapt && (sol_nom.converged || sol_anc.converged) &&
          sol_anc.kkt_residual <= 10.0 * HypergradOptions{}.stationarity_tol) {
        loss_value = dev_loss.value(sol_anc.traj);
        HypergradOptions ho;
        ho.store_deltas = setup.adapt_nominal;
        Hypergradient hg;
        const bool have_grad =
            try_hypergradient(ancp, sol_anc, dev_loss, opts.route, ho, hg);
        if (have_grad) {
          grad_norm = hg.grad_theta.norm();
          nesterov_update(th_anc, v_anc, clip_components(hg.grad_theta, kGradClip),
                          opts.eta, opts.momentum, anc.frozen);
          project_with_momentum_reset(anc, th_anc, v_anc);
        }
        if (have_grad && setup.adapt_nominal) {
          std::vector<VectorXd> plx, plu;
          nominal_pullback_grads(sol_anc.traj, sol_nom.traj, hg, anc, np,
                                 setup.loss_position_only, setup.position_dim,
                                 plx, plu);
          LossSpec nom_loss;
          nom_loss.value = [loss_value](const Trajectory&) {
            return loss_value;
          };
          nom_loss.grads = [plx, plu](const Trajectory&,
                                      std::vector<VectorXd>& lx,
                                      std::vector<VectorXd>& lu) {
            lx = plx;
            lu = plu;
          };
          Hypergradient hg_nom;
          if (try_hypergradient(nomp, sol_nom, nom_loss, opts.route, {},
                                hg_nom)) {
            nesterov_update(th_nom, v_nom,
                            clip_components(hg_nom.grad_theta, kGradClip),
                            opts.eta, opts.momentum, nom.frozen);
            project_with_momentum_reset(nom, th_nom, v_nom);
          }
        }
      }

      const VectorXd u = sol_anc.traj.us.front();
      const VectorXd w = setup.noise.sample(trial, t);
      x_true = setup.model.step(x_true, u) + w;
      x_nom = setup.model.step(x_nom, sol_nom.traj.us.front());
      warm_nom = shifted_warm_start(sol_nom.traj.us);
      warm_anc = shifted_warm_start(sol_anc.traj.us);

      if (!x_true.allFinite() || !x_nom.allFinite()) {
        res.outcome = Outcome::Diverged;
        res.steps = t + 1;
        return res;
      }

      const double mh = setup.safety.min_h(x_true);
      res.min_h_seen = std::min(res.min_h_seen, mh);
      res.final_goal_distance = setup.goal_distance(x_true);
      res.steps = t + 1;

      if (opts.log_steps) {
        StepRecord rec;
        rec.t = t;
        rec.x_true = x_true;
        rec.x_nominal = x_nom;
        rec.u_applied = u;
        rec.loss_value = loss_value;
        rec.grad_norm = grad_norm;
        rec.min_h = mh;
        rec.barrier_state = sol_anc.traj.xs.front()(np);
        rec.goal_distance = res.final_goal_distance;
        rec.nominal_converged = sol_nom.converged;
        rec.ancillary_converged = sol_anc.converged;
        res.log.push_back(rec);
      }

      if (mh <= 0.0 ||
          (setup.extra_failure && setup.extra_failure(x_true))) {
        res.outcome = Outcome::Violation;
        res.final_theta_ancillary = th_anc;
        res.final_theta_nominal = th_nom;
        return res;
      }
      if (res.final_goal_distance <= setup.success_radius) {
        res.outcome = Outcome::Success;
        res.final_theta_ancillary = th_anc;
        res.final_theta_nominal = th_nom;
        return res;
      }
    } catch (const DomainError&) {
      res.outcome = Outcome::Diverged;
      return res;
    } catch (const NonFiniteState&) {
      res.outcome = Outcome::Diverged;
      return res;
    }
  }
  res.outcome = Outcome::Timeout;
  res.final_theta_ancillary = th_anc;
  res.final_theta_nominal = th_nom;
  return res;
}

}  // namespace dtmpc
