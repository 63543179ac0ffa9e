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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dtmpc/dynamics.hpp"
#include "test_util.hpp"

using namespace dtmpc;
using testutil::fd_jacobian;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

void check_jacobians(const DynamicsModel& m, const VectorXd& x,
                     const VectorXd& u, double tol = 1e-5) {
  MatrixXd fx, fu;
  m.jacobians(x, u, fx, fu);
  const MatrixXd fx_fd =
      fd_jacobian([&](const VectorXd& xx) { return m.step(xx, u); }, x);
  const MatrixXd fu_fd =
      fd_jacobian([&](const VectorXd& uu) { return m.step(x, uu); }, u);
  CHECK((fx - fx_fd).cwiseAbs().maxCoeff() < tol);
  CHECK((fu - fu_fd).cwiseAbs().maxCoeff() < tol);
}

}  // namespace

TEST_CASE("dubins straight-line motion") {
  const VectorXd next = step_dubins(vec({0, 0, 0}), vec({1, 0}), 0.01);
  CHECK(next(0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(next(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(next(2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dubins motion along +y") {
  const VectorXd next =
      step_dubins(vec({0, 0, M_PI / 2}), vec({1, 0}), 0.01);
  CHECK(std::abs(next(0)) < 1e-12);
  CHECK(next(1) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(next(2) == doctest::Approx(M_PI / 2).epsilon(1e-12));
}

TEST_CASE("dubins default bounds") {
  const ControlBounds b = dubins_bounds();
  CHECK(b.lower(0) == -10.0);
  CHECK(b.upper(0) == 10.0);
  CHECK(b.lower(1) == doctest::Approx(-M_PI));
  CHECK(b.upper(1) == doctest::Approx(M_PI));
}

TEST_CASE("dubins jacobians match finite differences") {
  const DynamicsModel m = make_dubins(0.01);
  check_jacobians(m, vec({1.3, -0.4, 0.7}), vec({2.5, 0.3}));
}

TEST_CASE("dubins analytic hessian contraction matches FD fallback") {
  const DynamicsModel m = make_dubins(0.01);
  const VectorXd x = vec({1.3, -0.4, 0.7});
  const VectorXd u = vec({2.5, 0.3});
  const VectorXd lam = vec({0.3, -1.1, 0.8});
  MatrixXd hxx_a, hux_a, huu_a, hxx_f, hux_f, huu_f;
  m.hessian_contraction(x, u, lam, hxx_a, hux_a, huu_a);
  hessian_contraction_fd(m, x, u, lam, hxx_f, hux_f, huu_f);
  CHECK((hxx_a - hxx_f).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((hux_a - hux_f).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((huu_a - huu_f).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("quadrotor hover keeps position to O(dt^2)") {
  const double g = 9.81;
  VectorXd x = VectorXd::Zero(12);
  VectorXd u = VectorXd::Zero(4);
  u(0) = g;
  const VectorXd next = step_quadrotor(x, u, 0.02);
  CHECK(next.head(3).cwiseAbs().maxCoeff() < 0.02 * 0.02);
  CHECK(next.segment(6, 3).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("quadrotor free fall") {
  VectorXd x = VectorXd::Zero(12);
  const VectorXd next = step_quadrotor(x, VectorXd::Zero(4), 0.02);
  CHECK(next(8) == doctest::Approx(-9.81 * 0.02).epsilon(1e-12));
}

TEST_CASE("quadrotor jacobians match finite differences at random state") {
  const DynamicsModel m = make_quadrotor(0.02);
  VectorXd x(12);
  x << 1.0, -2.0, 3.0, 0.2, -0.3, 0.5, 0.7, -0.1, 0.4, 0.05, -0.2, 0.3;
  VectorXd u(4);
  u << 12.0, 0.5, -0.3, 0.2;
  check_jacobians(m, x, u);
}

TEST_CASE("quadrotor pitch singularity guarded") {
  VectorXd x = VectorXd::Zero(12);
  x(4) = M_PI / 2;
  CHECK_THROWS_AS(step_quadrotor(x, VectorXd::Zero(4), 0.02),
                  SingularAttitude);
}

TEST_CASE("robot arm equilibrium and constant velocity") {
  VectorXd x = VectorXd::Zero(12);
  CHECK((step_robot_arm(x, VectorXd::Zero(6), 0.02) - x).norm() == 0.0);
  x(6) = 1.0;  // first joint velocity
  const VectorXd next = step_robot_arm(x, VectorXd::Zero(6), 0.02);
  CHECK(next(0) == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("robot arm second-order dynamics terms are exactly zero") {
  const DynamicsModel m = make_robot_arm(0.02);
  VectorXd x = VectorXd::Random(12);
  VectorXd u = VectorXd::Random(6);
  VectorXd lam = VectorXd::Random(12);
  MatrixXd hxx, hux, huu;
  contract_dynamics_hessian(m, x, u, lam, hxx, hux, huu);
  CHECK(hxx.norm() == 0.0);
  CHECK(hux.norm() == 0.0);
  CHECK(huu.norm() == 0.0);
}

TEST_CASE("arm zero pose end effector at (3.5, 0, 0)") {
  const ArmPose pose = arm_forward_kinematics(VectorXd::Zero(6));
  CHECK((pose.end_effector - Eigen::Vector3d(3.5, 0, 0)).norm() < 1e-12);
}

TEST_CASE("arm end-effector jacobian matches finite differences") {
  VectorXd a(6);
  a << 0.3, -0.7, 0.5, 0.4, -0.2, 0.6;
  const MatrixXd J = arm_ee_jacobian(a);
  const MatrixXd J_fd = fd_jacobian(
      [](const VectorXd& aa) {
        return VectorXd(arm_forward_kinematics(aa, 1).end_effector);
      },
      a);
  CHECK((J - J_fd).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("arm link point jacobians match finite differences") {
  VectorXd a(6);
  a << -0.2, 0.8, 0.3, -0.5, 0.1, 0.4;
  for (int link = 0; link < 3; ++link) {
    for (double s : {0.25, 0.75, 1.0}) {
      const MatrixXd J = arm_point_jacobian(a, link, s);
      const MatrixXd J_fd = fd_jacobian(
          [&](const VectorXd& aa) {
            const ArmPose pose = arm_forward_kinematics(aa, 4);
            const Eigen::Vector3d p0 = pose.joint_positions[link];
            const Eigen::Vector3d p1 = pose.joint_positions[link + 1];
            return VectorXd(p0 + s * (p1 - p0));
          },
          a);
      CHECK((J - J_fd).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("arm sampled link points lie on straight segments") {
  VectorXd a(6);
  a << 0.3, -0.4, -0.6, 0.2, 0.5, -0.1;
  const int samples = 4;
  const ArmPose pose = arm_forward_kinematics(a, samples);
  REQUIRE(pose.joint_positions.size() == 4);
  REQUIRE(pose.link_points.size() == 3 * samples);
  int idx = 0;
  for (int link = 0; link < 3; ++link) {
    const Eigen::Vector3d p0 = pose.joint_positions[link];
    const Eigen::Vector3d p1 = pose.joint_positions[link + 1];
    for (int s = 1; s <= samples; ++s, ++idx) {
      const Eigen::Vector3d expect =
          p0 + (double(s) / samples) * (p1 - p0);
      CHECK((pose.link_points[idx] - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("obstacle_h at center and at distance 2r") {
  Obstacle o;
  o.center = vec({1.0, 2.0});
  o.radius = 0.5;
  CHECK(obstacle_h(vec({1.0, 2.0}), {o}) ==
        doctest::Approx(-0.25).epsilon(1e-12));
  // distance 2r -> (2r)^2 - r^2 = 3 r^2
  CHECK(obstacle_h(vec({2.0, 2.0}), {o}) ==
        doctest::Approx(3 * 0.25).epsilon(1e-12));
}

TEST_CASE("safety gradients match finite differences") {
  Obstacle o;
  o.center = vec({1.0, 2.0});
  o.radius = 0.5;
  const SafetyFunction sf = make_obstacle_safety({o}, 0, 2, 3);
  const VectorXd x = vec({0.2, 0.7, 0.4});
  std::vector<double> hs;
  std::vector<VectorXd> grads;
  sf.eval_with_grads(x, hs, grads);
  REQUIRE(hs.size() == 1);
  const VectorXd g_fd = testutil::fd_gradient(
      [&](const VectorXd& xx) {
        std::vector<double> h2;
        sf.eval(xx, h2);
        return h2[0];
      },
      x);
  CHECK((grads[0] - g_fd).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("arm safety batch evaluation agrees with per-constraint path") {
  Obstacle o;
  o.center = Eigen::Vector3d(1.0, 0.0, 0.0);
  o.radius = 0.5;
  const SafetyFunction sf = make_arm_safety({o});
  VectorXd x = VectorXd::Zero(12);
  x.head(6) << 0.1, -0.9, 0.2, 0.4, -0.1, 0.5;
  std::vector<double> h_batch, h_each;
  sf.eval(x, h_batch);
  for (const auto& c : sf.constraints) h_each.push_back(c.h(x));
  REQUIRE(h_batch.size() == h_each.size());
  for (std::size_t i = 0; i < h_each.size(); ++i) {
    CHECK(h_batch[i] == doctest::Approx(h_each[i]).epsilon(1e-12));
  }
}

TEST_CASE("quadrotor obstacle field contract") {
  const Eigen::Vector3d start(0, 0, 0), target(10, 10, 10);
  const auto obs = quadrotor_obstacle_field(7, start, target);
  REQUIRE(obs.size() == 31);
  CHECK(obs[0].radius == doctest::Approx(1.5));
  CHECK((obs[0].center - Eigen::Vector3d(5, 5, 5)).norm() < 1e-12);
  for (std::size_t i = 1; i < obs.size(); ++i) {
    CHECK(obs[i].radius >= 0.5);
    CHECK(obs[i].radius <= 1.5);
    for (int d = 0; d < 3; ++d) {
      CHECK(obs[i].center(d) >= 0.0);
      CHECK(obs[i].center(d) <= 10.0);
    }
    CHECK((VectorXd(obs[i].center) - VectorXd(start)).norm() >
          obs[i].radius);
    CHECK((VectorXd(obs[i].center) - VectorXd(target)).norm() >
          obs[i].radius);
  }
  // Deterministic in the seed.
  const auto obs2 = quadrotor_obstacle_field(7, start, target);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    CHECK((obs[i].center - obs2[i].center).norm() == 0.0);
  }
}

TEST_CASE("disturbance sampling is counter-based and in range") {
  DisturbanceConfig dc;
  dc.ranges.assign(3, {-0.05, 0.05});
  dc.seed = 123;
  const VectorXd w1 = dc.sample(4, 17);
  const VectorXd w2 = dc.sample(4, 17);
  CHECK((w1 - w2).norm() == 0.0);
  CHECK(w1.cwiseAbs().maxCoeff() <= 0.05);
  // Different keys give different draws.
  CHECK((dc.sample(4, 18) - w1).norm() > 0.0);
  CHECK((dc.sample(5, 17) - w1).norm() > 0.0);

  DisturbanceConfig zero;
  zero.ranges.assign(3, {0.0, 0.0});
  CHECK(zero.sample(0, 0).norm() == 0.0);
  CHECK(dc.max_magnitude() == doctest::Approx(0.05));
}
