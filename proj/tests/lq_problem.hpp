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

#ifndef DTMPC_TESTS_LQ_PROBLEM_HPP
#define DTMPC_TESTS_LQ_PROBLEM_HPP

#include "dtmpc/ddp.hpp"

namespace dtmpc::testutil {

// Linear-quadratic benchmark problem with theta = cost weights:
// x' = A x + B u, cost sum_k (sum_i th_i x_i^2 + sum_j th_{nx+j} u_j^2)
// plus a fixed terminal cost x_N^T Qf x_N. n_theta = n_x + n_u.
struct LqData {
  MatrixXd A, B;
  VectorXd qf_diag;
  VectorXd x0;
  int N = 0;
};

inline LqData default_lq_data() {
  LqData d;
  d.N = 10;
  d.A.resize(3, 3);
  d.A << 0.95, 0.10, 0.00,
        -0.05, 0.90, 0.12,
         0.02, 0.00, 0.93;
  d.B.resize(3, 2);
  d.B << 0.10, 0.00,
         0.00, 0.08,
         0.05, 0.05;
  d.qf_diag = VectorXd::Constant(3, 5.0);
  d.x0 = Eigen::Vector3d(1.0, -0.8, 0.6);
  return d;
}

inline OCProblem make_lq_problem(const LqData& d, const VectorXd& theta) {
  const int nx = static_cast<int>(d.A.rows());
  const int nu = static_cast<int>(d.B.cols());
  OCProblem p;
  p.n_x = nx;
  p.n_u = nu;
  p.n_theta = nx + nu;
  p.horizon = d.N;
  p.theta = theta;
  p.dynamics = [d](const VectorXd& x, const VectorXd& u, const VectorXd&) {
    return VectorXd(d.A * x + d.B * u);
  };
  p.dynamics_jacobians = [d](const VectorXd&, const VectorXd&,
                             const VectorXd&, MatrixXd& fx, MatrixXd& fu) {
    fx = d.A;
    fu = d.B;
  };
  p.running_cost = [nx, nu](int, const VectorXd& x, const VectorXd& u,
                            const VectorXd& th) {
    return th.head(nx).dot(x.cwiseProduct(x)) +
           th.segment(nx, nu).dot(u.cwiseProduct(u));
  };
  p.running_cost_derivs = [nx, nu](int, const VectorXd& x, const VectorXd& u,
                                   const VectorXd& th, VectorXd& lx,
                                   VectorXd& lu, MatrixXd& lxx, MatrixXd& lux,
                                   MatrixXd& luu) {
    lx = 2.0 * th.head(nx).cwiseProduct(x);
    lu = 2.0 * th.segment(nx, nu).cwiseProduct(u);
    lxx = (2.0 * th.head(nx)).asDiagonal();
    lux = MatrixXd::Zero(nu, nx);
    luu = (2.0 * th.segment(nx, nu)).asDiagonal();
  };
  p.running_cost_param_derivs = [nx, nu](int, const VectorXd& x,
                                         const VectorXd& u, const VectorXd&,
                                         MatrixXd& lxt, MatrixXd& lut) {
    lxt = MatrixXd::Zero(nx, nx + nu);
    lut = MatrixXd::Zero(nu, nx + nu);
    for (int i = 0; i < nx; ++i) lxt(i, i) = 2.0 * x(i);
    for (int j = 0; j < nu; ++j) lut(j, nx + j) = 2.0 * u(j);
  };
  p.terminal_cost = [d](const VectorXd& x, const VectorXd&) {
    return d.qf_diag.dot(x.cwiseProduct(x));
  };
  p.terminal_cost_derivs = [d](const VectorXd& x, const VectorXd&,
                               VectorXd& phix, MatrixXd& phixx) {
    phix = 2.0 * d.qf_diag.cwiseProduct(x);
    phixx = (2.0 * d.qf_diag).asDiagonal();
  };
  p.init = [d](const VectorXd&) { return d.x0; };
  return p;
}

// Trajectory sensitivity dz/dtheta by a dense bordered-KKT solve, fully
// independent of the library's recursions. Variable order:
// z = (u_0..u_{N-1}, x_1..x_N).
inline MatrixXd lq_kkt_sensitivity(const LqData& d, const VectorXd& theta,
                                   const std::vector<VectorXd>& xs,
                                   const std::vector<VectorXd>& us) {
  const int nx = static_cast<int>(d.A.rows());
  const int nu = static_cast<int>(d.B.cols());
  const int N = d.N;
  const int nz = N * nu + N * nx;
  const int nc = N * nx;
  const int nth = nx + nu;

  auto uidx = [nu](int k) { return k * nu; };
  auto xidx = [N, nu, nx](int k) { return N * nu + (k - 1) * nx; };

  MatrixXd H = MatrixXd::Zero(nz, nz);
  for (int k = 0; k < N; ++k) {
    H.block(uidx(k), uidx(k), nu, nu) =
        MatrixXd((2.0 * theta.segment(nx, nu)).asDiagonal());
  }
  for (int k = 1; k <= N; ++k) {
    MatrixXd Hx = MatrixXd::Zero(nx, nx);
    if (k < N) Hx += MatrixXd((2.0 * theta.head(nx)).asDiagonal());
    if (k == N) Hx += MatrixXd((2.0 * d.qf_diag).asDiagonal());
    H.block(xidx(k), xidx(k), nx, nx) = Hx;
  }

  // Constraints c_k = x_{k+1} - A x_k - B u_k, k = 0..N-1 (x_0 fixed).
  MatrixXd G = MatrixXd::Zero(nc, nz);
  for (int k = 0; k < N; ++k) {
    G.block(k * nx, xidx(k + 1), nx, nx) = MatrixXd::Identity(nx, nx);
    G.block(k * nx, uidx(k), nx, nu) = -d.B;
    if (k >= 1) G.block(k * nx, xidx(k), nx, nx) = -d.A;
  }

  // d/dtheta of the Lagrangian z-gradient (only cost terms depend on theta).
  MatrixXd Lzt = MatrixXd::Zero(nz, nth);
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < nu; ++j) {
      Lzt(uidx(k) + j, nx + j) = 2.0 * us[k](j);
    }
  }
  for (int k = 1; k < N; ++k) {
    for (int i = 0; i < nx; ++i) {
      Lzt(xidx(k) + i, i) = 2.0 * xs[k](i);
    }
  }

  MatrixXd M = MatrixXd::Zero(nz + nc, nz + nc);
  M.topLeftCorner(nz, nz) = H;
  M.topRightCorner(nz, nc) = G.transpose();
  M.bottomLeftCorner(nc, nz) = G;
  MatrixXd rhs = MatrixXd::Zero(nz + nc, nth);
  rhs.topRows(nz) = -Lzt;
  const MatrixXd sol = M.fullPivLu().solve(rhs);
  return sol.topRows(nz);  // dz/dtheta
}

}  // namespace dtmpc::testutil

#endif  // DTMPC_TESTS_LQ_PROBLEM_HPP
