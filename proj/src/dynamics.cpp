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

#include "dtmpc/dynamics.hpp"

#include <cmath>

namespace dtmpc {

namespace {
constexpr double kGravity = 9.81;
constexpr double kPitchGuard = 1e-3;
const double kArmLengths[3] = {1.0, 1.5, 1.0};
}  // namespace

void hessian_contraction_fd(const DynamicsModel& model, const VectorXd& x,
                            const VectorXd& u, const VectorXd& lam,
                            MatrixXd& hxx, MatrixXd& hux, MatrixXd& huu) {
  const int nx = model.n_x;
  const int nu = model.n_u;
  hxx.setZero(nx, nx);
  hux.setZero(nu, nx);
  huu.setZero(nu, nu);
  MatrixXd fxp(nx, nx), fup(nx, nu), fxm(nx, nx), fum(nx, nu);
  // d(lam^T fx)/dx and d(lam^T fu)/dx
  for (int i = 0; i < nx; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x(i)));
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    model.jacobians(xp, u, fxp, fup);
    model.jacobians(xm, u, fxm, fum);
    hxx.col(i) = (fxp - fxm).transpose() * lam / (2.0 * h);
    hux.col(i) = (fup - fum).transpose() * lam / (2.0 * h);
  }
  for (int i = 0; i < nu; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(u(i)));
    VectorXd up = u, um = u;
    up(i) += h;
    um(i) -= h;
    model.jacobians(x, up, fxp, fup);
    model.jacobians(x, um, fxm, fum);
    huu.col(i) = (fup - fum).transpose() * lam / (2.0 * h);
  }
  hxx = 0.5 * (hxx + hxx.transpose()).eval();
  huu = 0.5 * (huu + huu.transpose()).eval();
}

void contract_dynamics_hessian(const DynamicsModel& model, const VectorXd& x,
                               const VectorXd& u, const VectorXd& lam,
                               MatrixXd& hxx, MatrixXd& hux, MatrixXd& huu) {
  if (model.hessian_contraction) {
    model.hessian_contraction(x, u, lam, hxx, hux, huu);
  } else {
    hessian_contraction_fd(model, x, u, lam, hxx, hux, huu);
  }
}

// --- Dubins vehicle -------------------------------------------------------

VectorXd step_dubins(const VectorXd& x, const VectorXd& u, double dt) {
  VectorXd next(3);
  next(0) = x(0) + dt * u(0) * std::cos(x(2));
  next(1) = x(1) + dt * u(0) * std::sin(x(2));
  next(2) = x(2) + dt * u(1);
  return next;
}

DynamicsModel make_dubins(double dt) {
  DynamicsModel m;
  m.n_x = 3;
  m.n_u = 2;
  m.dt = dt;
  m.step = [dt](const VectorXd& x, const VectorXd& u) {
    return step_dubins(x, u, dt);
  };
  m.jacobians = [dt](const VectorXd& x, const VectorXd& u, MatrixXd& fx,
                     MatrixXd& fu) {
    const double c = std::cos(x(2)), s = std::sin(x(2));
    fx = MatrixXd::Identity(3, 3);
    fx(0, 2) = -dt * u(0) * s;
    fx(1, 2) = dt * u(0) * c;
    fu.setZero(3, 2);
    fu(0, 0) = dt * c;
    fu(1, 0) = dt * s;
    fu(2, 1) = dt;
  };
  m.hessian_contraction = [dt](const VectorXd& x, const VectorXd& u,
                               const VectorXd& lam, MatrixXd& hxx,
                               MatrixXd& hux, MatrixXd& huu) {
    const double c = std::cos(x(2)), s = std::sin(x(2));
    hxx.setZero(3, 3);
    hux.setZero(2, 3);
    huu.setZero(2, 2);
    hxx(2, 2) = dt * u(0) * (-c * lam(0) - s * lam(1));
    hux(0, 2) = dt * (-s * lam(0) + c * lam(1));
  };
  return m;
}

ControlBounds dubins_bounds() {
  ControlBounds b;
  b.lower = VectorXd(2);
  b.upper = VectorXd(2);
  b.lower << -10.0, -M_PI;
  b.upper << 10.0, M_PI;
  return b;
}

// --- Quadrotor ------------------------------------------------------------

// State: (px, py, pz, roll, pitch, yaw, vx, vy, vz, p, q, r).
// Controls: (thrust, moment_x, moment_y, moment_z). Unity mass and inertia.
VectorXd step_quadrotor(const VectorXd& x, const VectorXd& u, double dt) {
  const double phi = x(3), th = x(4), psi = x(5);
  if (std::abs(th) >= M_PI / 2.0 - kPitchGuard) {
    throw SingularAttitude("quadrotor pitch near +-pi/2");
  }
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double cth = std::cos(th), sth = std::sin(th);
  const double cpsi = std::cos(psi), spsi = std::sin(psi);
  const double T = u(0);

  VectorXd xdot(12);
  xdot.segment<3>(0) = x.segment<3>(6);
  // Euler kinematics (ZYX)
  const double p = x(9), q = x(10), r = x(11);
  const double tth = sth / cth;
  xdot(3) = p + sphi * tth * q + cphi * tth * r;
  xdot(4) = cphi * q - sphi * r;
  xdot(5) = (sphi * q + cphi * r) / cth;
  // Thrust along body z, world frame
  xdot(6) = T * (cpsi * sth * cphi + spsi * sphi);
  xdot(7) = T * (spsi * sth * cphi - cpsi * sphi);
  xdot(8) = T * (cth * cphi) - kGravity;
  xdot.segment<3>(9) = u.segment<3>(1);
  return x + dt * xdot;
}

DynamicsModel make_quadrotor(double dt) {
  DynamicsModel m;
  m.n_x = 12;
  m.n_u = 4;
  m.dt = dt;
  m.step = [dt](const VectorXd& x, const VectorXd& u) {
    return step_quadrotor(x, u, dt);
  };
  m.jacobians = [dt](const VectorXd& x, const VectorXd& u, MatrixXd& fx,
                     MatrixXd& fu) {
    const double phi = x(3), th = x(4), psi = x(5);
    if (std::abs(th) >= M_PI / 2.0 - kPitchGuard) {
      throw SingularAttitude("quadrotor pitch near +-pi/2");
    }
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double cth = std::cos(th), sth = std::sin(th);
    const double cpsi = std::cos(psi), spsi = std::sin(psi);
    const double p = x(9), q = x(10), r = x(11);
    const double T = u(0);
    const double tth = sth / cth;
    const double sec2 = 1.0 / (cth * cth);

    MatrixXd J = MatrixXd::Zero(12, 12);
    J.block<3, 3>(0, 6).setIdentity();
    // Euler-rate rows
    J(3, 3) = cphi * tth * q - sphi * tth * r;
    J(3, 4) = (sphi * q + cphi * r) * sec2;
    J(3, 9) = 1.0;
    J(3, 10) = sphi * tth;
    J(3, 11) = cphi * tth;
    J(4, 3) = -sphi * q - cphi * r;
    J(4, 10) = cphi;
    J(4, 11) = -sphi;
    J(5, 3) = (cphi * q - sphi * r) / cth;
    J(5, 4) = (sphi * q + cphi * r) * sth * sec2;
    J(5, 10) = sphi / cth;
    J(5, 11) = cphi / cth;
    // Linear acceleration rows
    J(6, 3) = T * (-cpsi * sth * sphi + spsi * cphi);
    J(6, 4) = T * (cpsi * cth * cphi);
    J(6, 5) = T * (-spsi * sth * cphi + cpsi * sphi);
    J(7, 3) = T * (-spsi * sth * sphi - cpsi * cphi);
    J(7, 4) = T * (spsi * cth * cphi);
    J(7, 5) = T * (cpsi * sth * cphi + spsi * sphi);
    J(8, 3) = T * (-cth * sphi);
    J(8, 4) = T * (-sth * cphi);

    fx = MatrixXd::Identity(12, 12) + dt * J;

    fu = MatrixXd::Zero(12, 4);
    fu(6, 0) = dt * (cpsi * sth * cphi + spsi * sphi);
    fu(7, 0) = dt * (spsi * sth * cphi - cpsi * sphi);
    fu(8, 0) = dt * (cth * cphi);
    fu.block<3, 3>(9, 1) = dt * Eigen::Matrix3d::Identity();
  };
  return m;
}

ControlBounds quadrotor_bounds() {
  ControlBounds b;
  b.lower = VectorXd(4);
  b.upper = VectorXd(4);
  b.lower << 0.0, -10.0, -10.0, -10.0;
  b.upper << 50.0, 10.0, 10.0, 10.0;
  return b;
}

// --- Robot arm ------------------------------------------------------------

VectorXd step_robot_arm(const VectorXd& x, const VectorXd& u, double dt) {
  VectorXd next(12);
  next.segment<6>(0) = x.segment<6>(0) + dt * x.segment<6>(6);
  next.segment<6>(6) = x.segment<6>(6) + dt * u;
  return next;
}

DynamicsModel make_robot_arm(double dt) {
  DynamicsModel m;
  m.n_x = 12;
  m.n_u = 6;
  m.dt = dt;
  m.step = [dt](const VectorXd& x, const VectorXd& u) {
    return step_robot_arm(x, u, dt);
  };
  m.jacobians = [dt](const VectorXd&, const VectorXd&, MatrixXd& fx,
                     MatrixXd& fu) {
    fx = MatrixXd::Identity(12, 12);
    fx.block<6, 6>(0, 6) = dt * MatrixXd::Identity(6, 6);
    fu = MatrixXd::Zero(12, 6);
    fu.block<6, 6>(6, 0) = dt * MatrixXd::Identity(6, 6);
  };
  m.hessian_contraction = [](const VectorXd&, const VectorXd&,
                             const VectorXd&, MatrixXd& hxx, MatrixXd& hux,
                             MatrixXd& huu) {
    hxx.setZero(12, 12);
    hux.setZero(6, 12);
    huu.setZero(6, 6);
  };
  return m;
}

ControlBounds robot_arm_bounds() {
  ControlBounds b;
  b.lower = VectorXd::Constant(6, -10.0);
  b.upper = VectorXd::Constant(6, 10.0);
  return b;
}

namespace {

struct ArmFrames {
  Eigen::Matrix3d R[4];      // R[0] = I, R[i] = frame after link i joints
  Eigen::Vector3d joint[4];  // joint[0] = origin, joint[i] = tip of link i
  Eigen::Matrix3d Ryaw[3];   // R_{i-1} * Rz(yaw_i), for pitch axes
};

Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d R;
  R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return R;
}

Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d R;
  R << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return R;
}

ArmFrames arm_frames(const VectorXd& angles) {
  ArmFrames f;
  f.R[0].setIdentity();
  f.joint[0].setZero();
  for (int i = 0; i < 3; ++i) {
    const double yaw = angles(2 * i);
    const double pitch = angles(2 * i + 1);
    f.Ryaw[i] = f.R[i] * rot_z(yaw);
    f.R[i + 1] = f.Ryaw[i] * rot_y(pitch);
    f.joint[i + 1] =
        f.joint[i] + kArmLengths[i] * (f.R[i + 1] * Eigen::Vector3d::UnitX());
  }
  return f;
}

}  // namespace

ArmPose arm_forward_kinematics(const VectorXd& angles, int samples_per_link) {
  const ArmFrames f = arm_frames(angles);
  ArmPose pose;
  pose.end_effector = f.joint[3];
  for (int i = 0; i < 4; ++i) pose.joint_positions.push_back(f.joint[i]);
  for (int i = 0; i < 3; ++i) {
    for (int s = 1; s <= samples_per_link; ++s) {
      const double frac = static_cast<double>(s) / samples_per_link;
      pose.link_points.push_back(f.joint[i] +
                                 frac * (f.joint[i + 1] - f.joint[i]));
    }
  }
  return pose;
}

MatrixXd arm_point_jacobian(const VectorXd& angles, int link, double s) {
  const ArmFrames f = arm_frames(angles);
  const Eigen::Vector3d point =
      f.joint[link] + s * (f.joint[link + 1] - f.joint[link]);
  MatrixXd J = MatrixXd::Zero(3, 6);
  for (int m = 0; m <= link; ++m) {
    const Eigen::Vector3d origin = f.joint[m];
    const Eigen::Vector3d yaw_axis = f.R[m] * Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d pitch_axis = f.Ryaw[m] * Eigen::Vector3d::UnitY();
    J.col(2 * m) = yaw_axis.cross(point - origin);
    J.col(2 * m + 1) = pitch_axis.cross(point - origin);
  }
  return J;
}

MatrixXd arm_ee_jacobian(const VectorXd& angles) {
  return arm_point_jacobian(angles, 2, 1.0);
}

// --- Obstacles ------------------------------------------------------------

double obstacle_h(const VectorXd& position,
                  const std::vector<Obstacle>& obstacles) {
  double h = std::numeric_limits<double>::infinity();
  for (const auto& o : obstacles) {
    const double v = (position - o.center).squaredNorm() - o.radius * o.radius;
    h = std::min(h, v);
  }
  return h;
}

void SafetyFunction::eval(const VectorXd& x, std::vector<double>& h) const {
  if (batch_h) {
    batch_h(x, h);
    return;
  }
  h.resize(constraints.size());
  for (std::size_t i = 0; i < constraints.size(); ++i) h[i] = constraints[i].h(x);
}

void SafetyFunction::eval_with_grads(const VectorXd& x, std::vector<double>& h,
                                     std::vector<VectorXd>& grads) const {
  if (batch_h_grads) {
    batch_h_grads(x, h, grads);
    return;
  }
  h.resize(constraints.size());
  grads.resize(constraints.size());
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    h[i] = constraints[i].h(x);
    grads[i] = constraints[i].grad_h(x);
  }
}

double SafetyFunction::min_h(const VectorXd& x) const {
  std::vector<double> hs;
  eval(x, hs);
  double h = std::numeric_limits<double>::infinity();
  for (double v : hs) h = std::min(h, v);
  return h;
}

SafetyFunction make_obstacle_safety(const std::vector<Obstacle>& obstacles,
                                    int position_offset, int position_dim,
                                    int n_x) {
  SafetyFunction sf;
  for (const auto& o : obstacles) {
    Constraint c;
    // Clearance in meters (not the squared form): the barrier magnitude
    // 1/h then reflects metric distance to the surface, which keeps its
    // authority against the goal attraction independent of obstacle size.
    c.h = [o, position_offset, position_dim](const VectorXd& x) {
      return (x.segment(position_offset, position_dim) - o.center).norm() -
             o.radius;
    };
    c.grad_h = [o, position_offset, position_dim, n_x](const VectorXd& x) {
      const VectorXd d = x.segment(position_offset, position_dim) - o.center;
      const double n = std::max(d.norm(), 1e-12);
      VectorXd g = VectorXd::Zero(n_x);
      g.segment(position_offset, position_dim) = d / n;
      return g;
    };
    sf.constraints.push_back(std::move(c));
  }
  return sf;
}

void add_state_bound_constraints(SafetyFunction& sf, int n_x,
                                 const std::vector<int>& indices, double lo,
                                 double hi) {
  for (int i : indices) {
    Constraint clo;
    clo.h = [i, lo](const VectorXd& x) { return x(i) - lo; };
    clo.grad_h = [i, n_x](const VectorXd&) {
      VectorXd g = VectorXd::Zero(n_x);
      g(i) = 1.0;
      return g;
    };
    sf.constraints.push_back(std::move(clo));
    Constraint chi;
    chi.h = [i, hi](const VectorXd& x) { return hi - x(i); };
    chi.grad_h = [i, n_x](const VectorXd&) {
      VectorXd g = VectorXd::Zero(n_x);
      g(i) = -1.0;
      return g;
    };
    sf.constraints.push_back(std::move(chi));
  }
}

// Floor constraints are offset so that the horizontal rest pose (link points
// exactly in the xy-plane) keeps a strictly positive margin; a state only
// becomes unsafe once a link tip drops below -kFloorOffset.
static constexpr double kArmFloorOffset = 0.1;

SafetyFunction make_arm_safety(const std::vector<Obstacle>& obstacles,
                               int samples_per_link) {
  SafetyFunction sf;

  struct PointSpec {
    int link;
    double frac;
  };
  std::vector<PointSpec> points;
  for (int link = 0; link < 3; ++link) {
    for (int s = 1; s <= samples_per_link; ++s) {
      points.push_back({link, static_cast<double>(s) / samples_per_link});
    }
  }

  // Per-constraint views, for gradient checks and callers that probe h_i.
  for (const auto& pt : points) {
    for (const auto& o : obstacles) {
      Constraint c;
      c.h = [o, pt](const VectorXd& x) {
        const ArmPose pose = arm_forward_kinematics(x.head<6>(), 1);
        const Eigen::Vector3d p =
            pose.joint_positions[pt.link] +
            pt.frac * (pose.joint_positions[pt.link + 1] -
                       pose.joint_positions[pt.link]);
        return (p - o.center.head<3>()).squaredNorm() - o.radius * o.radius;
      };
      c.grad_h = [o, pt](const VectorXd& x) {
        const VectorXd angles = x.head<6>();
        const ArmPose pose = arm_forward_kinematics(angles, 1);
        const Eigen::Vector3d p =
            pose.joint_positions[pt.link] +
            pt.frac * (pose.joint_positions[pt.link + 1] -
                       pose.joint_positions[pt.link]);
        const MatrixXd J = arm_point_jacobian(angles, pt.link, pt.frac);
        VectorXd g = VectorXd::Zero(x.size());
        g.head<6>() = 2.0 * J.transpose() * (p - o.center.head<3>());
        return g;
      };
      sf.constraints.push_back(std::move(c));
    }
  }
  for (int link = 0; link < 3; ++link) {
    Constraint floor;
    floor.h = [link](const VectorXd& x) {
      const ArmPose pose = arm_forward_kinematics(x.head<6>(), 1);
      return pose.joint_positions[link + 1].z() + kArmFloorOffset;
    };
    floor.grad_h = [link](const VectorXd& x) {
      const MatrixXd J = arm_point_jacobian(x.head<6>(), link, 1.0);
      VectorXd g = VectorXd::Zero(x.size());
      g.head<6>() = J.row(2).transpose();
      return g;
    };
    sf.constraints.push_back(std::move(floor));
  }

  // Batch path: one FK pass shared by every constraint.
  const std::size_t n_constraints = sf.constraints.size();
  auto batch = [obstacles, points, n_constraints](
                   const VectorXd& x, std::vector<double>& h,
                   std::vector<VectorXd>* grads) {
    const VectorXd angles = x.head<6>();
    const ArmPose pose = arm_forward_kinematics(angles, 1);
    h.resize(n_constraints);
    if (grads) grads->resize(n_constraints);
    std::size_t idx = 0;
    for (const auto& pt : points) {
      const Eigen::Vector3d p =
          pose.joint_positions[pt.link] +
          pt.frac * (pose.joint_positions[pt.link + 1] -
                     pose.joint_positions[pt.link]);
      MatrixXd J;
      if (grads) J = arm_point_jacobian(angles, pt.link, pt.frac);
      for (const auto& o : obstacles) {
        const Eigen::Vector3d d = p - Eigen::Vector3d(o.center.head<3>());
        h[idx] = d.squaredNorm() - o.radius * o.radius;
        if (grads) {
          VectorXd g = VectorXd::Zero(x.size());
          g.head<6>() = 2.0 * J.transpose() * d;
          (*grads)[idx] = std::move(g);
        }
        ++idx;
      }
    }
    for (int link = 0; link < 3; ++link) {
      h[idx] = pose.joint_positions[link + 1].z() + kArmFloorOffset;
      if (grads) {
        const MatrixXd J = arm_point_jacobian(angles, link, 1.0);
        VectorXd g = VectorXd::Zero(x.size());
        g.head<6>() = J.row(2).transpose();
        (*grads)[idx] = std::move(g);
      }
      ++idx;
    }
  };
  sf.batch_h = [batch](const VectorXd& x, std::vector<double>& h) {
    batch(x, h, nullptr);
  };
  sf.batch_h_grads = [batch](const VectorXd& x, std::vector<double>& h,
                             std::vector<VectorXd>& grads) {
    batch(x, h, &grads);
  };
  return sf;
}

std::vector<Obstacle> quadrotor_obstacle_field(std::uint64_t seed,
                                               const Eigen::Vector3d& start,
                                               const Eigen::Vector3d& target,
                                               double margin) {
  std::vector<Obstacle> field;
  Obstacle central;
  central.center = Eigen::Vector3d(5.0, 5.0, 5.0);
  central.radius = 1.5;
  field.push_back(central);
  std::uint64_t draw = 0;
  while (field.size() < 31) {
    Eigen::Vector3d c;
    for (int i = 0; i < 3; ++i) {
      c(i) = 10.0 * counter_uniform(seed, draw, 0, i);
    }
    const double r = 0.5 + counter_uniform(seed, draw, 1, 0);
    ++draw;
    if ((c - start).norm() <= r + margin || (c - target).norm() <= r + margin) {
      continue;  // keep the endpoints feasible
    }
    Obstacle o;
    o.center = c;
    o.radius = r;
    field.push_back(o);
  }
  return field;
}

// --- Disturbances ---------------------------------------------------------

namespace {
std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

VectorXd DisturbanceConfig::sample(std::uint64_t trial, std::uint64_t t) const {
  VectorXd w(static_cast<int>(ranges.size()));
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double u = counter_uniform(seed, trial, t, i);
    w(static_cast<int>(i)) =
        ranges[i].first + u * (ranges[i].second - ranges[i].first);
  }
  return w;
}

double DisturbanceConfig::max_magnitude() const {
  double m = 0.0;
  for (const auto& [lo, hi] : ranges) {
    m = std::max(m, std::max(std::abs(lo), std::abs(hi)));
  }
  return m;
}

}  // namespace dtmpc
