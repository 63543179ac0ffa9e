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

#ifndef DTMPC_TEST_UTIL_HPP
#define DTMPC_TEST_UTIL_HPP

#include <functional>

#include "dtmpc/types.hpp"

namespace dtmpc::testutil {

// Central-difference Jacobian of a vector map, independent of any analytic
// derivative code in the library.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f,
                            const VectorXd& x, double h0 = 1e-6) {
  const VectorXd f0 = f(x);
  MatrixXd J(f0.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    const double h = h0 * (1.0 + std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& x, double h0 = 1e-6) {
  VectorXd g(x.size());
  for (int j = 0; j < x.size(); ++j) {
    const double h = h0 * (1.0 + std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    g(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace dtmpc::testutil

#endif  // DTMPC_TEST_UTIL_HPP
