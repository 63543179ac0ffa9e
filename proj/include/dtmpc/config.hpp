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

#ifndef DTMPC_CONFIG_HPP
#define DTMPC_CONFIG_HPP

#include <string>

#include "dtmpc/harness.hpp"

namespace dtmpc {

/// Experiment settings. Loaded from JSON with a strict schema: unknown keys
/// are a hard error (ConfigError), so typos never silently fall back to
/// defaults.
struct ExperimentConfig {
  std::string system = "dubins";
  std::string algorithm = "dt";  // "dt" (adaptive) or "nt" (fixed weights)
  int trials = 100;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  double eta = 1e-2;
  double momentum = 0.9;
  int solver_budget = 10;
  int adapt_solver_budget = 9;
  double solver_tol = 1e-3;
  int horizon = 0;        // 0 = system default
  int task_horizon = 0;   // 0 = system default
  std::string route = "doc_gauss_newton";
  double noise_scale = 1.0;
  std::uint64_t obstacle_seed = 42;
  bool log_steps = false;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

MpcOptions to_mpc_options(const ExperimentConfig& cfg);
SystemSetup to_system_setup(const ExperimentConfig& cfg);

}  // namespace dtmpc

#endif  // DTMPC_CONFIG_HPP
