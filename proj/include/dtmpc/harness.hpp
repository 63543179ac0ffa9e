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

#ifndef DTMPC_HARNESS_HPP
#define DTMPC_HARNESS_HPP

#include "dtmpc/tube_mpc.hpp"

namespace dtmpc {

struct TrialSummary {
  int trial = 0;
  Outcome outcome = Outcome::Timeout;
  int steps = 0;
  double final_goal_distance = 0.0;
  double min_h_seen = 0.0;
  double wall_ms = 0.0;
};

struct CampaignResult {
  int n_trials = 0;
  int n_success = 0, n_violation = 0, n_timeout = 0, n_diverged = 0;
  double success_rate = 0.0, violation_rate = 0.0, timeout_rate = 0.0;
  std::vector<TrialSummary> trials;
  double total_ms = 0.0;
};

/// Runs n_trials closed-loop trials in parallel. Disturbances are keyed by
/// (base_seed, trial, t, i), so results are independent of the thread count
/// and identical between algorithm variants run with the same base_seed.
CampaignResult run_campaign(const SystemSetup& setup, const MpcOptions& opts,
                            int n_trials, std::uint64_t base_seed,
                            int threads);

/// Nominal trajectory-optimization problem for gradient benchmarks: the
/// system's safety-embedded goal-reaching problem from its start state.
OCProblem gradcheck_problem(const SystemSetup& setup);

struct GradcheckRouteResult {
  std::string route;
  VectorXd grad;
  double rel_error_vs_fd = 0.0;
  double wall_ms = 0.0;
};

struct GradcheckReport {
  std::string system;
  double kkt_residual = 0.0;
  bool stationary = false;
  std::vector<GradcheckRouteResult> routes;  // fd last, error 0 by definition
};

/// Hypergradients of the deviation-style loss by every route at a converged
/// solve, with relative errors against the finite-difference reference.
GradcheckReport run_gradcheck(const SystemSetup& setup);

struct TimingRow {
  std::string route;
  int reps = 0;
  double mean_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
};

/// Wall-clock comparison of the gradient routes at one converged solve.
std::vector<TimingRow> timing_campaign(const SystemSetup& setup, int reps);

}  // namespace dtmpc

#endif  // DTMPC_HARNESS_HPP
