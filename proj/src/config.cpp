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

#include "dtmpc/config.hpp"

#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

namespace dtmpc {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const std::string& key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
  }
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");

  static const std::set<std::string> known = {
      "system",        "algorithm",   "trials",
      "seed",          "threads",     "eta",
      "momentum",      "solver_budget", "adapt_solver_budget",
      "solver_tol",    "horizon",     "task_horizon",
      "route",         "noise_scale", "obstacle_seed",
      "log_steps"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) {
      throw ConfigError("unknown config key: '" + key + "'");
    }
  }

  ExperimentConfig cfg;
  take(j, "system", cfg.system);
  take(j, "algorithm", cfg.algorithm);
  take(j, "trials", cfg.trials);
  take(j, "seed", cfg.seed);
  take(j, "threads", cfg.threads);
  take(j, "eta", cfg.eta);
  take(j, "momentum", cfg.momentum);
  take(j, "solver_budget", cfg.solver_budget);
  take(j, "adapt_solver_budget", cfg.adapt_solver_budget);
  take(j, "solver_tol", cfg.solver_tol);
  take(j, "horizon", cfg.horizon);
  take(j, "task_horizon", cfg.task_horizon);
  take(j, "route", cfg.route);
  take(j, "noise_scale", cfg.noise_scale);
  take(j, "obstacle_seed", cfg.obstacle_seed);
  take(j, "log_steps", cfg.log_steps);

  if (cfg.algorithm == "dt-mpc") cfg.algorithm = "dt";
  if (cfg.algorithm == "nt-mpc") cfg.algorithm = "nt";
  if (cfg.algorithm != "dt" && cfg.algorithm != "nt") {
    throw ConfigError("algorithm must be 'dt[-mpc]' or 'nt[-mpc]', got '" +
                      cfg.algorithm + "'");
  }
  if (cfg.trials < 0) throw ConfigError("trials must be non-negative");
  if (cfg.noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
  route_from_string(cfg.route);          // validates
  make_system_setup(cfg.system, 0);      // validates the system name
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_json(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["system"] = cfg.system;
  j["algorithm"] = cfg.algorithm;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["eta"] = cfg.eta;
  j["momentum"] = cfg.momentum;
  j["solver_budget"] = cfg.solver_budget;
  j["adapt_solver_budget"] = cfg.adapt_solver_budget;
  j["solver_tol"] = cfg.solver_tol;
  j["horizon"] = cfg.horizon;
  j["task_horizon"] = cfg.task_horizon;
  j["route"] = cfg.route;
  j["noise_scale"] = cfg.noise_scale;
  j["obstacle_seed"] = cfg.obstacle_seed;
  j["log_steps"] = cfg.log_steps;
  return j.dump(2);
}

MpcOptions to_mpc_options(const ExperimentConfig& cfg) {
  MpcOptions opts;
  opts.adapt = cfg.algorithm == "dt";
  opts.solver_budget = cfg.solver_budget;
  opts.adapt_solver_budget = cfg.adapt_solver_budget;
  opts.solver_tol = cfg.solver_tol;
  opts.eta = cfg.eta;
  opts.momentum = cfg.momentum;
  opts.route = route_from_string(cfg.route);
  opts.log_steps = cfg.log_steps;
  return opts;
}

SystemSetup to_system_setup(const ExperimentConfig& cfg) {
  // The base seed participates in the obstacle-field key so that seed
  // overrides re-randomize the scenario as well as the disturbances.
  SystemSetup s = make_system_setup(cfg.system, cfg.obstacle_seed + cfg.seed);
  if (cfg.horizon > 0) s.horizon = cfg.horizon;
  if (cfg.task_horizon > 0) s.task_horizon = cfg.task_horizon;
  if (cfg.noise_scale != 1.0) {
    for (auto& [lo, hi] : s.noise.ranges) {
      lo *= cfg.noise_scale;
      hi *= cfg.noise_scale;
    }
  }
  s.noise.seed = cfg.seed;
  return s;
}

}  // namespace dtmpc
