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

#ifndef DTMPC_TYPES_HPP
#define DTMPC_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(const std::string& msg)
      : std::runtime_error(msg) {}
};

class NonFiniteState : public std::runtime_error {
 public:
  explicit NonFiniteState(const std::string& msg) : std::runtime_error(msg) {}
};

class SingularAttitude : public DomainError {
 public:
  explicit SingularAttitude(const std::string& msg) : DomainError(msg) {}
};

class HorizonMismatch : public std::runtime_error {
 public:
  explicit HorizonMismatch(const std::string& msg)
      : std::runtime_error(msg) {}
};

class InnerSolveFailed : public std::runtime_error {
 public:
  explicit InnerSolveFailed(const std::string& msg)
      : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// State-control sequences (x_0, u_0, ..., u_{N-1}, x_N).
struct Trajectory {
  std::vector<VectorXd> xs;  // N + 1 states
  std::vector<VectorXd> us;  // N controls

  int horizon() const { return static_cast<int>(us.size()); }
};

struct ControlBounds {
  VectorXd lower;
  VectorXd upper;

  VectorXd clamp(const VectorXd& u) const {
    return u.cwiseMax(lower).cwiseMin(upper);
  }
};

}  // namespace dtmpc

#endif  // DTMPC_TYPES_HPP
