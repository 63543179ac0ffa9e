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

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dtmpc/config.hpp"
#include "dtmpc/doc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dtmpc;

namespace {

// Shortest round-trip decimal representation.
std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json trial_json(const TrialSummary& t) {
  json j;
  j["trial"] = t.trial;
  j["outcome"] = to_string(t.outcome);
  j["steps"] = t.steps;
  j["final_goal_distance"] = t.final_goal_distance;
  j["min_h_seen"] = t.min_h_seen;
  j["wall_ms"] = t.wall_ms;
  return j;
}

struct CliState {
  std::string config_path;
  std::string out_dir = "out";
  ExperimentConfig cfg;
  std::vector<std::string> outputs;

  void resolve(CLI::App& cmd, std::uint64_t seed, int trials,
               const std::string& system, const std::string& algo,
               int threads) {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (cmd.count("--seed")) cfg.seed = seed;
    if (cmd.count("--trials")) cfg.trials = trials;
    if (cmd.count("--system")) cfg.system = system;
    if (cmd.count("--algo")) cfg.algorithm = algo;
    if (cmd.count("--threads")) cfg.threads = threads;
    if (cfg.algorithm == "dt-mpc") cfg.algorithm = "dt";
    if (cfg.algorithm == "nt-mpc") cfg.algorithm = "nt";
    if (cfg.algorithm != "dt" && cfg.algorithm != "nt") {
      throw ConfigError("algorithm must be 'dt[-mpc]' or 'nt[-mpc]'");
    }
    make_system_setup(cfg.system, 0);  // validates the name
    route_from_string(cfg.route);
    fs::create_directories(out_dir);
  }

  void manifest(const std::string& command) {
    json j;
    j["command"] = command;
    j["version"] = "1.0.0";
    j["seed"] = cfg.seed;
    j["config"] = json::parse(config_to_json(cfg));
    j["outputs"] = outputs;
    j["timestamp_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    write_file(fs::path(out_dir) / "manifest.json", j.dump(2) + "\n");
  }
};

int cmd_solve(CliState& st) {
  SystemSetup setup = to_system_setup(st.cfg);
  OCProblem p = gradcheck_problem(setup);
  SolveOptions so;
  so.budget = 200;
  so.tol = st.cfg.solver_tol;
  Solution sol = solve(p, so);

  // Columns: k, plant states, barrier state b, controls.
  std::string csv = "k";
  for (int i = 0; i < p.n_x - 1; ++i) csv += ",x" + std::to_string(i);
  csv += ",b";
  for (int i = 0; i < p.n_u; ++i) csv += ",u" + std::to_string(i);
  csv += "\n";
  for (int k = 0; k <= p.horizon; ++k) {
    csv += std::to_string(k);
    for (int i = 0; i < p.n_x; ++i) csv += "," + fmt(sol.traj.xs[k](i));
    for (int i = 0; i < p.n_u; ++i) {
      csv += k < p.horizon ? "," + fmt(sol.traj.us[k](i)) : ",";
    }
    csv += "\n";
  }
  write_file(fs::path(st.out_dir) / "trajectory.csv", csv);

  json stats;
  stats["cost"] = sol.cost;
  stats["iterations"] = sol.iterations;
  stats["converged"] = sol.converged;
  stats["kkt_residual"] = sol.kkt_residual;
  stats["final_reg"] = sol.final_reg;
  write_file(fs::path(st.out_dir) / "solve_stats.json", stats.dump(2) + "\n");

  st.outputs = {"trajectory.csv", "solve_stats.json"};
  st.manifest("solve");

  std::cout << "solve: system=" << st.cfg.system << " cost=" << fmt(sol.cost)
            << " iterations=" << sol.iterations
            << " converged=" << (sol.converged ? "true" : "false")
            << " kkt=" << fmt(sol.kkt_residual) << "\n";
  return sol.converged ? 0 : 1;
}

int cmd_mpc(CliState& st) {
  SystemSetup setup = to_system_setup(st.cfg);
  MpcOptions opts = to_mpc_options(st.cfg);
  const int threads = st.cfg.threads > 0
                          ? st.cfg.threads
                          : static_cast<int>(
                                std::max(1u, std::thread::hardware_concurrency()));
  CampaignResult res =
      run_campaign(setup, opts, st.cfg.trials, st.cfg.seed, threads);

  double mean_steps = 0.0;
  for (const auto& t : res.trials) mean_steps += t.steps;
  if (!res.trials.empty()) mean_steps /= res.trials.size();

  std::string csv =
      "system,algorithm,trials,success_rate,violation_rate,timeout_rate,"
      "mean_steps,total_ms\n";
  csv += st.cfg.system + "," + st.cfg.algorithm + "," +
         std::to_string(res.n_trials) + "," + fmt(res.success_rate) + "," +
         fmt(res.violation_rate) + "," + fmt(res.timeout_rate) + "," +
         fmt(mean_steps) + "," + fmt(res.total_ms) + "\n";
  write_file(fs::path(st.out_dir) / "summary.csv", csv);

  std::string jsonl;
  for (const auto& t : res.trials) jsonl += trial_json(t).dump() + "\n";
  write_file(fs::path(st.out_dir) / "trials.jsonl", jsonl);

  json cj;
  cj["n_trials"] = res.n_trials;
  cj["n_success"] = res.n_success;
  cj["n_violation"] = res.n_violation;
  cj["n_timeout"] = res.n_timeout;
  cj["n_diverged"] = res.n_diverged;
  cj["success_rate"] = res.success_rate;
  cj["violation_rate"] = res.violation_rate;
  cj["timeout_rate"] = res.timeout_rate;
  cj["total_ms"] = res.total_ms;
  write_file(fs::path(st.out_dir) / "campaign.json", cj.dump(2) + "\n");

  st.outputs = {"summary.csv", "trials.jsonl", "campaign.json"};
  st.manifest("mpc");

  std::cout << "mpc: system=" << st.cfg.system << " algo=" << st.cfg.algorithm
            << " trials=" << res.n_trials
            << " success=" << fmt(res.success_rate)
            << " violation=" << fmt(res.violation_rate)
            << " timeout=" << fmt(res.timeout_rate) << "\n";
  return 0;
}

int cmd_gradcheck(CliState& st) {
  SystemSetup setup = to_system_setup(st.cfg);
  GradcheckReport report = run_gradcheck(setup);

  json j;
  j["system"] = report.system;
  j["kkt_residual"] = report.kkt_residual;
  j["stationary"] = report.stationary;
  j["routes"] = json::array();
  const VectorXd* g_full = nullptr;
  const VectorXd* g_pdp = nullptr;
  double err_full_vs_fd = 0.0;
  for (const auto& r : report.routes) {
    json rj;
    rj["route"] = r.route;
    rj["rel_error_vs_fd"] = r.rel_error_vs_fd;
    rj["wall_ms"] = r.wall_ms;
    rj["grad"] = std::vector<double>(r.grad.data(),
                                     r.grad.data() + r.grad.size());
    j["routes"].push_back(rj);
    if (r.route == "doc_full") {
      g_full = &r.grad;
      err_full_vs_fd = r.rel_error_vs_fd;
    }
    if (r.route == "pdp") g_pdp = &r.grad;
  }
  const double err_full_vs_pdp =
      g_full && g_pdp
          ? (*g_full - *g_pdp).norm() / std::max(g_full->norm(), 1e-12)
          : 1.0;
  j["rel_error_full_vs_pdp"] = err_full_vs_pdp;

  // Jacobian accuracy vs solver budget at the same nominal problem.
  OCProblem p = gradcheck_problem(setup);
  const auto sweep =
      jacobian_error_experiment(p, p.zero_init(), {1, 2, 3, 5, 10});
  j["budget_sweep"] = json::array();
  for (const auto& row : sweep) {
    json sj;
    sj["budget"] = row.budget;
    sj["iterate_error"] = row.iterate_error;
    sj["err_doc_full"] = row.err_doc_full;
    sj["err_gauss_newton"] = row.err_gauss_newton;
    sj["fd_floor"] = row.fd_floor;
    j["budget_sweep"].push_back(sj);
  }

  const bool pass = err_full_vs_fd <= 1e-3 && err_full_vs_pdp <= 1e-8;
  j["pass"] = pass;
  write_file(fs::path(st.out_dir) / "gradcheck_report.json", j.dump(2) + "\n");
  st.outputs = {"gradcheck_report.json"};
  st.manifest("gradcheck");

  for (const auto& r : report.routes) {
    std::cout << "gradcheck: route=" << r.route
              << " rel_error_vs_fd=" << fmt(r.rel_error_vs_fd)
              << " wall_ms=" << fmt(r.wall_ms) << "\n";
  }
  std::cout << "gradcheck: doc_full_vs_pdp=" << fmt(err_full_vs_pdp)
            << " pass=" << (pass ? "true" : "false") << "\n";
  return pass ? 0 : 1;
}

int cmd_bench(CliState& st) {
  SystemSetup setup = to_system_setup(st.cfg);
  const int reps = 100;
  auto rows = timing_campaign(setup, reps);
  std::sort(rows.begin(), rows.end(),
            [](const TimingRow& a, const TimingRow& b) {
              return a.mean_ms < b.mean_ms;
            });

  std::string csv = "route,reps,mean_ms,min_ms,max_ms\n";
  for (const auto& r : rows) {
    csv += r.route + "," + std::to_string(r.reps) + "," + fmt(r.mean_ms) +
           "," + fmt(r.min_ms) + "," + fmt(r.max_ms) + "\n";
  }
  write_file(fs::path(st.out_dir) / "timing.csv", csv);
  st.outputs = {"timing.csv"};
  st.manifest("bench");

  for (const auto& r : rows) {
    std::cout << "bench: route=" << r.route << " mean_ms=" << fmt(r.mean_ms)
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-embedded robust MPC benchmarks"};
  app.require_subcommand(1);

  CliState st;
  std::uint64_t seed = 0;
  int trials = 0;
  std::string system, algo;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", st.config_path, "JSON config file");
    cmd->add_option("--out", st.out_dir, "output directory");
    cmd->add_option("--seed", seed, "base seed");
    cmd->add_option("--trials", trials, "number of trials");
    cmd->add_option("--system", system, "dubins | quadrotor | robot_arm");
    cmd->add_option("--algo", algo, "dt | nt");
    cmd->add_option("--threads", threads, "worker threads (0 = hardware)");
    return cmd;
  };

  auto* solve_cmd = add_common(app.add_subcommand(
      "solve", "solve the nominal trajectory-optimization problem"));
  auto* mpc_cmd = add_common(app.add_subcommand(
      "mpc", "run the closed-loop disturbance campaign"));
  auto* grad_cmd = add_common(app.add_subcommand(
      "gradcheck", "cross-check the gradient routes against finite differences"));
  auto* bench_cmd = add_common(
      app.add_subcommand("bench", "time the gradient routes"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    st.resolve(*active, seed, trials, system, algo, threads);
    if (active == solve_cmd) return cmd_solve(st);
    if (active == mpc_cmd) return cmd_mpc(st);
    if (active == grad_cmd) return cmd_gradcheck(st);
    if (active == bench_cmd) return cmd_bench(st);
    std::cerr << "error: unknown subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
