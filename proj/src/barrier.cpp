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

#include "dtmpc/barrier.hpp"

#include <cmath>
#include <stdexcept>

namespace dtmpc {

BarrierKind barrier_kind_from_string(const std::string& s) {
  if (s == "inverse") return BarrierKind::Inverse;
  if (s == "log") return BarrierKind::Log;
  if (s == "relaxed_inverse") return BarrierKind::RelaxedInverse;
  throw ConfigError("unknown barrier kind: " + s);
}

std::string to_string(BarrierKind kind) {
  switch (kind) {
    case BarrierKind::Inverse:
      return "inverse";
    case BarrierKind::Log:
      return "log";
    case BarrierKind::RelaxedInverse:
      return "relaxed_inverse";
  }
  return "inverse";
}

namespace {

[[noreturn]] void throw_domain(double zeta) {
  throw DomainError("barrier evaluated outside the safe set (h = " +
                    std::to_string(zeta) + ")");
}

}  // namespace

double barrier_value(const BarrierConfig& cfg, double zeta) {
  switch (cfg.kind) {
    case BarrierKind::Inverse:
      if (zeta <= 0.0) throw_domain(zeta);
      return 1.0 / zeta;
    case BarrierKind::Log:
      if (zeta <= 0.0) throw_domain(zeta);
      return -std::log(zeta);
    case BarrierKind::RelaxedInverse: {
      const double a = cfg.alpha;
      if (zeta >= a || a <= 0.0) {  // alpha = 0 degenerates to the inverse
        if (zeta <= 0.0) throw_domain(zeta);
        return 1.0 / zeta;
      }
      // Quadratic extension below alpha, C^1 at the seam.
      const double d = zeta - a;
      return 1.0 / a - d / (a * a) + d * d / (a * a * a);
    }
  }
  throw std::logic_error("unreachable barrier kind");
}

double barrier_slope(const BarrierConfig& cfg, double zeta) {
  switch (cfg.kind) {
    case BarrierKind::Inverse:
      if (zeta <= 0.0) throw_domain(zeta);
      return -1.0 / (zeta * zeta);
    case BarrierKind::Log:
      if (zeta <= 0.0) throw_domain(zeta);
      return -1.0 / zeta;
    case BarrierKind::RelaxedInverse: {
      const double a = cfg.alpha;
      if (zeta >= a || a <= 0.0) {
        if (zeta <= 0.0) throw_domain(zeta);
        return -1.0 / (zeta * zeta);
      }
      const double d = zeta - a;
      return -1.0 / (a * a) + 2.0 * d / (a * a * a);
    }
  }
  throw std::logic_error("unreachable barrier kind");
}

double barrier_alpha_partial(const BarrierConfig& cfg, double zeta) {
  if (cfg.kind != BarrierKind::RelaxedInverse) return 0.0;
  const double a = cfg.alpha;
  if (a <= 0.0 || zeta >= a) return 0.0;
  const double d = zeta - a;
  return -3.0 * d * d / (a * a * a * a);
}

double barrier_sum(const BarrierConfig& cfg, const SafetyFunction& safety,
                   const VectorXd& x) {
  std::vector<double> hs;
  safety.eval(x, hs);
  double w = 0.0;
  for (double h : hs) w += barrier_value(cfg, h);
  return w;
}

double barrier_sum_with_grad(const BarrierConfig& cfg,
                             const SafetyFunction& safety, const VectorXd& x,
                             VectorXd& grad) {
  std::vector<double> hs;
  std::vector<VectorXd> grads;
  safety.eval_with_grads(x, hs, grads);
  grad = VectorXd::Zero(x.size());
  double w = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    w += barrier_value(cfg, hs[i]);
    grad += barrier_slope(cfg, hs[i]) * grads[i];
  }
  return w;
}

double barrier_sum_alpha_partial(const BarrierConfig& cfg,
                                 const SafetyFunction& safety,
                                 const VectorXd& x) {
  if (cfg.kind != BarrierKind::RelaxedInverse) return 0.0;
  std::vector<double> hs;
  safety.eval(x, hs);
  double w = 0.0;
  for (double h : hs) w += barrier_alpha_partial(cfg, h);
  return w;
}

double dbas_step(const BarrierConfig& cfg, const SafetyFunction& safety,
                 const DynamicsModel& model, const VectorXd& x,
                 const VectorXd& u, double b) {
  const VectorXd x_next = model.step(x, u);
  return barrier_sum(cfg, safety, x_next) -
         cfg.gamma * (barrier_sum(cfg, safety, x) - b);
}

double init_barrier_state(const BarrierConfig& cfg,
                          const SafetyFunction& safety, const VectorXd& x0) {
  return barrier_sum(cfg, safety, x0);
}

namespace {

BarrierConfig with_theta(const BarrierConfig& cfg, const BarrierThetaMap& map,
                         const VectorXd& th) {
  BarrierConfig c = cfg;
  if (map.gamma_index >= 0 && map.gamma_index < th.size())
    c.gamma = th(map.gamma_index);
  if (map.alpha_index >= 0 && map.alpha_index < th.size())
    c.alpha = th(map.alpha_index);
  return c;
}

}  // namespace

AugmentedDynamics augment_parameterized(const DynamicsModel& base,
                                        const SafetyFunction& safety,
                                        const BarrierConfig& cfg,
                                        const BarrierThetaMap& map,
                                        int n_theta) {
  AugmentedDynamics aug;
  const int nb = base.n_x;
  aug.n_x = nb + 1;
  aug.n_u = base.n_u;

  aug.step = [base, safety, cfg, map, nb](const VectorXd& z, const VectorXd& u,
                                          const VectorXd& th) {
    const BarrierConfig c = with_theta(cfg, map, th);
    const VectorXd x = z.head(nb);
    const VectorXd x_next = base.step(x, u);
    VectorXd z_next(nb + 1);
    z_next.head(nb) = x_next;
    z_next(nb) = barrier_sum(c, safety, x_next) -
                 c.gamma * (barrier_sum(c, safety, x) - z(nb));
    return z_next;
  };

  aug.jacobians = [base, safety, cfg, map, nb](const VectorXd& z,
                                               const VectorXd& u,
                                               const VectorXd& th, MatrixXd& fx,
                                               MatrixXd& fu) {
    const BarrierConfig c = with_theta(cfg, map, th);
    const VectorXd x = z.head(nb);
    MatrixXd bfx(nb, nb), bfu(nb, base.n_u);
    base.jacobians(x, u, bfx, bfu);
    const VectorXd x_next = base.step(x, u);
    VectorXd gw_next, gw;
    barrier_sum_with_grad(c, safety, x_next, gw_next);
    barrier_sum_with_grad(c, safety, x, gw);

    fx = MatrixXd::Zero(nb + 1, nb + 1);
    fu = MatrixXd::Zero(nb + 1, base.n_u);
    fx.topLeftCorner(nb, nb) = bfx;
    fu.topRows(nb) = bfu;
    fx.row(nb).head(nb) =
        (gw_next.transpose() * bfx - c.gamma * gw.transpose());
    fx(nb, nb) = c.gamma;
    fu.row(nb) = gw_next.transpose() * bfu;
  };

  aug.param_jacobian = [base, safety, cfg, map, nb, n_theta](
                           const VectorXd& z, const VectorXd& u,
                           const VectorXd& th) {
    const BarrierConfig c = with_theta(cfg, map, th);
    const VectorXd x = z.head(nb);
    const VectorXd x_next = base.step(x, u);
    MatrixXd ft = MatrixXd::Zero(nb + 1, n_theta);
    if (base.param_jacobian) {
      const MatrixXd bft = base.param_jacobian(x, u, th);
      ft.topRows(nb) = bft;
      VectorXd gw_next;
      barrier_sum_with_grad(c, safety, x_next, gw_next);
      ft.row(nb) += gw_next.transpose() * bft;
    }
    if (map.gamma_index >= 0)
      ft(nb, map.gamma_index) += -(barrier_sum(c, safety, x) - z(nb));
    if (map.alpha_index >= 0)
      ft(nb, map.alpha_index) +=
          barrier_sum_alpha_partial(c, safety, x_next) -
          c.gamma * barrier_sum_alpha_partial(c, safety, x);
    return ft;
  };

  return aug;
}

DynamicsModel augment(const DynamicsModel& base, const SafetyFunction& safety,
                      const BarrierConfig& cfg, const BarrierThetaMap& map) {
  const int n_theta =
      std::max(map.gamma_index, map.alpha_index) + 1;
  AugmentedDynamics aug =
      augment_parameterized(base, safety, cfg, map, std::max(n_theta, 0));
  DynamicsModel model;
  model.n_x = aug.n_x;
  model.n_u = aug.n_u;
  model.dt = base.dt;
  const VectorXd empty_theta = VectorXd::Zero(std::max(n_theta, 0));
  model.step = [step = aug.step, empty_theta](const VectorXd& z,
                                              const VectorXd& u) {
    return step(z, u, empty_theta);
  };
  model.jacobians = [jac = aug.jacobians, empty_theta](
                        const VectorXd& z, const VectorXd& u, MatrixXd& fx,
                        MatrixXd& fu) { jac(z, u, empty_theta, fx, fu); };
  model.param_jacobian = [pj = aug.param_jacobian](const VectorXd& z,
                                                   const VectorXd& u,
                                                   const VectorXd& th) {
    return pj(z, u, th);
  };
  // hessian_contraction left empty: callers use the FD-of-Jacobian fallback.
  return model;
}

}  // namespace dtmpc
