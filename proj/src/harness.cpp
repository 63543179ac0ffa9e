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

#include "dtmpc/harness.hpp"

#include <atomic>
#include <chrono>
#include <thread>

namespace dtmpc {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

CampaignResult run_campaign(const SystemSetup& setup, const MpcOptions& opts,
                            int n_trials, std::uint64_t base_seed,
                            int threads) {
  SystemSetup s = setup;
  s.noise.seed = base_seed;
  CampaignResult result;
  result.n_trials = n_trials;
  result.trials.resize(n_trials);

  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_trials) return;
      const auto trial_t0 = std::chrono::steady_clock::now();
      TrialResult tr = run_trial(s, opts, static_cast<std::uint64_t>(i));
      TrialSummary& sum = result.trials[i];
      sum.trial = i;
      sum.outcome = tr.outcome;
      sum.steps = tr.steps;
      sum.final_goal_distance = tr.final_goal_distance;
      sum.min_h_seen = tr.min_h_seen;
      sum.wall_ms = ms_since(trial_t0);
    }
  };
  const int nw = std::max(1, threads);
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  result.total_ms = ms_since(t0);

  for (const auto& tr : result.trials) {
    switch (tr.outcome) {
      case Outcome::Success:
        ++result.n_success;
        break;
      case Outcome::Violation:
        ++result.n_violation;
        break;
      case Outcome::Timeout:
        ++result.n_timeout;
        break;
      case Outcome::Diverged:
        ++result.n_diverged;
        break;
    }
  }
  if (n_trials > 0) {
    result.success_rate = double(result.n_success) / n_trials;
    result.violation_rate = double(result.n_violation) / n_trials;
    result.timeout_rate =
        double(result.n_timeout + result.n_diverged) / n_trials;
  }
  return result;
}

OCProblem gradcheck_problem(const SystemSetup& setup) {
  return build_nominal_problem(setup, setup.nominal,
                               setup.initial_state(0));
}

namespace {

// Smooth benchmark loss for gradient checks: squared distance of every
// state to the embedded goal plus control effort.
LossSpec gradcheck_loss(const SystemSetup& setup) {
  const int np = setup.model.n_x;
  VectorXd goal = VectorXd::Zero(np + 1);
  if (setup.ee_cost) {
    // Compare in joint space against the start (pure regularizer); the
    // task-space goal would need inverse kinematics.
    goal.head(np) = setup.initial_state(0);
  } else {
    goal.head(np) = setup.target;
  }
  LossSpec loss;
  loss.value = [goal, np](const Trajectory& traj) {
    double L = 0.0;
    for (const auto& z : traj.xs) {
      const VectorXd d = z.head(np) - goal.head(np);
      L += d.squaredNorm();
    }
    for (const auto& u : traj.us) L += u.squaredNorm();
    return L;
  };
  loss.grads = [goal, np](const Trajectory& traj, std::vector<VectorXd>& lx,
                          std::vector<VectorXd>& lu) {
    const int N = traj.horizon();
    lx.assign(N + 1, VectorXd());
    lu.assign(N, VectorXd());
    for (int k = 0; k <= N; ++k) {
      VectorXd g = VectorXd::Zero(np + 1);
      g.head(np) = 2.0 * (traj.xs[k].head(np) - goal.head(np));
      lx[k] = g;
      if (k < N) lu[k] = 2.0 * traj.us[k];
    }
  };
  return loss;
}

}  // namespace

GradcheckReport run_gradcheck(const SystemSetup& setup) {
  GradcheckReport report;
  report.system = setup.name;

  OCProblem p = gradcheck_problem(setup);
  SolveOptions so;
  so.budget = 400;
  so.tol = 1e-12;
  const Solution sol = solve(p, so);
  report.kkt_residual = sol.kkt_residual;

  const LossSpec loss = gradcheck_loss(setup);
  HypergradOptions ho;
  // The fd reference re-solves around theta: a larger step with very tight
  // inner solves keeps the loss differences well above the inner solver's
  // termination noise.
  ho.fd_step = 1e-3;
  ho.fd_tol = 1e-12;
  ho.fd_budget = 400;
  report.stationary = sol.kkt_residual <= ho.stationarity_tol;

  const auto fd_t0 = std::chrono::steady_clock::now();
  const Hypergradient fd =
      hypergradient(p, sol, loss, GradientRoute::FiniteDifference, ho);
  const double fd_ms = ms_since(fd_t0);
  const double fd_norm = std::max(fd.grad_theta.norm(), 1e-12);

  for (GradientRoute route : {GradientRoute::DocFull,
                              GradientRoute::DocGaussNewton,
                              GradientRoute::Pdp}) {
    const auto t0 = std::chrono::steady_clock::now();
    const Hypergradient hg = hypergradient(p, sol, loss, route, ho);
    GradcheckRouteResult r;
    r.route = to_string(route);
    r.grad = hg.grad_theta;
    r.rel_error_vs_fd = (hg.grad_theta - fd.grad_theta).norm() / fd_norm;
    r.wall_ms = ms_since(t0);
    report.routes.push_back(r);
  }
  GradcheckRouteResult rfd;
  rfd.route = to_string(GradientRoute::FiniteDifference);
  rfd.grad = fd.grad_theta;
  rfd.rel_error_vs_fd = 0.0;
  rfd.wall_ms = fd_ms;
  report.routes.push_back(rfd);
  return report;
}

std::vector<TimingRow> timing_campaign(const SystemSetup& setup, int reps) {
  OCProblem p = gradcheck_problem(setup);
  SolveOptions so;
  so.budget = 200;
  so.tol = 1e-10;
  const Solution sol = solve(p, so);
  const LossSpec loss = gradcheck_loss(setup);

  const GradientRoute routes[] = {GradientRoute::DocGaussNewton,
                                  GradientRoute::DocFull, GradientRoute::Pdp,
                                  GradientRoute::FiniteDifference};
  std::vector<TimingRow> rows;
  for (GradientRoute route : routes) {
    TimingRow row;
    row.route = to_string(route);
    row.reps = reps;
    row.min_ms = std::numeric_limits<double>::infinity();
    rows.push_back(row);
    // Untimed warm-up so first-touch allocations and code paging do not
    // land on whichever route happens to run first.
    volatile double sink =
        hypergradient(p, sol, loss, route, {}).grad_theta.sum();
    (void)sink;
  }
  // Interleave the routes within each rep: timing all reps of one route
  // back to back lets CPU frequency ramp and cache state drift bias the
  // comparison between routes.
  std::vector<double> totals(rows.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile double sink =
          hypergradient(p, sol, loss, routes[j], {}).grad_theta.sum();
      (void)sink;
      const double ms = ms_since(t0);
      totals[j] += ms;
      rows[j].min_ms = std::min(rows[j].min_ms, ms);
      rows[j].max_ms = std::max(rows[j].max_ms, ms);
    }
  }
  for (std::size_t j = 0; j < rows.size(); ++j)
    rows[j].mean_ms = totals[j] / std::max(reps, 1);
  return rows;
}

}  // namespace dtmpc
