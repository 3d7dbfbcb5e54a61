#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tace/env.hpp"
#include "tace/trainer.hpp"

namespace tace {

enum class Algorithm { tcppo, ppo, tcmae, ippo };

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "tcppo") return Algorithm::tcppo;
  if (s == "ppo") return Algorithm::ppo;
  if (s == "tcmae") return Algorithm::tcmae;
  if (s == "ippo") return Algorithm::ippo;
  throw InputError("unknown algorithm: " + s);
}

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::tcppo: return "tcppo";
    case Algorithm::ppo: return "ppo";
    case Algorithm::tcmae: return "tcmae";
    case Algorithm::ippo: return "ippo";
  }
  return "?";
}

inline bool is_multi_agent(Algorithm a) {
  return a == Algorithm::tcmae || a == Algorithm::ippo;
}

inline bool is_constrained(Algorithm a) {
  return a == Algorithm::tcppo || a == Algorithm::tcmae;
}

struct EnvSpec {
  bool multi_agent = false;
  GridWorld grid;  // valid when !multi_agent
  MpeGrid mpe;     // valid when multi_agent
  std::string name;
};

struct Preset {
  EnvSpec env;
  TrainConfig train;
};

namespace detail {

// Stabilizers shared by every preset: the uniform log-barrier keeps action
// probabilities alive under large distance penalties, delta = 0 makes a
// collectively-far batch penalty-free so a converged optimal policy is not
// eroded, and the slow sigma decay keeps the repulsion window open.
inline void apply_common_stabilizers(TrainConfig& t) {
  t.action_reg = 0.03;
  t.delta = 0.0;
  t.epsilon_scale = 0.25;
  t.asm_down = 0.995;
  t.entropy_coef = 0.01;
  t.entropy_boost = 0.4;
  t.entropy_boost_decay = 0.985;
}

}  // namespace detail

// Named task presets. grid50/grid70/grid70_three_goal/mpe70 carry the
// reference hyperparameters (policy lr 1.8e-5, value lr 1.2e-4, 8 episodes
// and 65 epochs per iteration, gamma 0.99, clip 0.2, sigma0 0.5, n = 5
// demonstrations). grid20 and mpe30 are small fast variants sized for
// continuous-integration budgets.
inline Preset make_preset(const std::string& name) {
  Preset p;
  p.env.name = name;
  TrainConfig& t = p.train;
  if (name == "grid50" || name == "grid70" || name == "grid70_three_goal") {
    p.env.multi_agent = false;
    if (name == "grid50") p.env.grid = make_grid50();
    if (name == "grid70") p.env.grid = make_grid70();
    if (name == "grid70_three_goal") p.env.grid = make_grid70_three_goal();
    t.goal_count = static_cast<int>(p.env.grid.goals.size());
    detail::apply_common_stabilizers(t);
    t.entropy_boost_decay = 0.995;
    t.stall_restart_iters = 400;
    t.max_iterations = 2500;
  } else if (name == "mpe70") {
    p.env.multi_agent = true;
    p.env.mpe = make_mpe70();
    t.goal_count = 2;
    detail::apply_common_stabilizers(t);
    t.entropy_boost_decay = 0.995;
    t.epsilon_override = 0.15;
    t.stall_restart_iters = 400;
    t.max_iterations = 2500;
  } else if (name == "grid20") {
    p.env.multi_agent = false;
    p.env.grid = make_two_goal_grid("grid20", 20, 20, 120);
    t.goal_count = 2;
    t.policy_lr = 1.5e-4;
    t.value_lr = 1e-3;
    t.epochs_per_iter = 10;
    detail::apply_common_stabilizers(t);
    t.convergence_threshold = 0.9;
    t.convergence_window = 40;
    t.stall_restart_iters = 80;
    t.max_iterations = 700;
  } else if (name == "mpe30") {
    p.env.multi_agent = true;
    p.env.mpe = make_mpe_grid("mpe30", 30, 30, 160);
    t.goal_count = 2;
    t.policy_lr = 1.5e-4;
    t.value_lr = 1e-3;
    t.epochs_per_iter = 10;
    detail::apply_common_stabilizers(t);
    t.stall_restart_iters = 70;
    t.convergence_threshold = 0.4;
    t.convergence_window = 32;
    t.epsilon_override = 0.15;
    t.max_iterations = 300;
  } else {
    throw InputError("unknown environment preset: " + name);
  }
  return p;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "grid50", "grid70", "grid70_three_goal", "mpe70", "grid20", "mpe30"};
  return names;
}

// JSON (de)serialization of the tunable fields; unknown keys are rejected
// so config typos fail loudly.
inline void apply_config_json(TrainConfig& t, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "gamma") t.gamma = value.get<double>();
    else if (key == "gae_lambda") t.gae_lambda = value.get<double>();
    else if (key == "clip_epsilon") t.clip_epsilon = value.get<double>();
    else if (key == "episodes_per_iter") t.episodes_per_iter = value.get<int>();
    else if (key == "epochs_per_iter") t.epochs_per_iter = value.get<int>();
    else if (key == "policy_lr") t.policy_lr = value.get<double>();
    else if (key == "value_lr") t.value_lr = value.get<double>();
    else if (key == "entropy_coef") t.entropy_coef = value.get<double>();
    else if (key == "action_reg") t.action_reg = value.get<double>();
    else if (key == "explore_floor") t.explore_floor = value.get<double>();
    else if (key == "entropy_boost") t.entropy_boost = value.get<double>();
    else if (key == "entropy_boost_decay")
      t.entropy_boost_decay = value.get<double>();
    else if (key == "seed") t.seed = value.get<std::uint64_t>();
    else if (key == "goal_count") t.goal_count = value.get<int>();
    else if (key == "memory_capacity") t.memory_capacity = value.get<int>();
    else if (key == "sigma_init") t.sigma_init = value.get<double>();
    else if (key == "delta") t.delta = value.get<double>();
    else if (key == "asm_up") t.asm_up = value.get<double>();
    else if (key == "asm_down") t.asm_down = value.get<double>();
    else if (key == "asm_same_goal") t.asm_same_goal = value.get<double>();
    else if (key == "epsilon_override") t.epsilon_override = value.get<double>();
    else if (key == "epsilon_scale") t.epsilon_scale = value.get<double>();
    else if (key == "kernel") {
      const std::string fam = value.get<std::string>();
      if (fam == "gaussian") t.kernel_family = KernelFamily::gaussian;
      else if (fam == "laplace") t.kernel_family = KernelFamily::laplace;
      else throw InputError("config: unknown kernel " + fam);
    } else if (key == "bandwidth_override") {
      t.bandwidth_override = value.get<double>();
    } else if (key == "estimator") {
      const std::string est = value.get<std::string>();
      if (est == "biased") t.estimator = MmdEstimator::biased;
      else if (est == "unbiased") t.estimator = MmdEstimator::unbiased;
      else throw InputError("config: unknown estimator " + est);
    } else if (key == "convergence_window") {
      t.convergence_window = value.get<int>();
    } else if (key == "convergence_threshold") {
      t.convergence_threshold = value.get<double>();
    } else if (key == "hidden_dims") {
      t.hidden_dims = value.get<std::vector<int>>();
    } else if (key == "max_iterations") {
      t.max_iterations = value.get<int>();
    } else if (key == "reset_policy_per_phase") {
      t.reset_policy_per_phase = value.get<bool>();
    } else if (key == "stall_restart_iters") {
      t.stall_restart_iters = value.get<int>();
    } else if (key == "max_episode_len") {
      // applied to the environment by the caller
    } else {
      throw InputError("config: unknown key '" + key + "'");
    }
  }
}

inline nlohmann::json config_to_json(const TrainConfig& t) {
  nlohmann::json j;
  j["gamma"] = t.gamma;
  j["gae_lambda"] = t.gae_lambda;
  j["clip_epsilon"] = t.clip_epsilon;
  j["episodes_per_iter"] = t.episodes_per_iter;
  j["epochs_per_iter"] = t.epochs_per_iter;
  j["policy_lr"] = t.policy_lr;
  j["value_lr"] = t.value_lr;
  j["entropy_coef"] = t.entropy_coef;
  j["action_reg"] = t.action_reg;
  j["explore_floor"] = t.explore_floor;
  j["entropy_boost"] = t.entropy_boost;
  j["entropy_boost_decay"] = t.entropy_boost_decay;
  j["seed"] = t.seed;
  j["goal_count"] = t.goal_count;
  j["memory_capacity"] = t.memory_capacity;
  j["sigma_init"] = t.sigma_init;
  j["delta"] = t.delta;
  j["asm_up"] = t.asm_up;
  j["asm_down"] = t.asm_down;
  j["asm_same_goal"] = t.asm_same_goal;
  j["epsilon_override"] = t.epsilon_override;
  j["epsilon_scale"] = t.epsilon_scale;
  j["kernel"] = t.kernel_family == KernelFamily::gaussian ? "gaussian"
                                                          : "laplace";
  j["bandwidth_override"] = t.bandwidth_override;
  j["estimator"] =
      t.estimator == MmdEstimator::biased ? "biased" : "unbiased";
  j["convergence_window"] = t.convergence_window;
  j["convergence_threshold"] = t.convergence_threshold;
  j["hidden_dims"] = t.hidden_dims;
  j["max_iterations"] = t.max_iterations;
  j["reset_policy_per_phase"] = t.reset_policy_per_phase;
  j["stall_restart_iters"] = t.stall_restart_iters;
  return j;
}

// Loads a preset, optionally overlaying the matching section of a config
// file ({"grid50": {...}, "grid20": {...}, ...}).
inline Preset load_preset(const std::string& env_name,
                          const std::string& config_path = "") {
  Preset p = make_preset(env_name);
  if (config_path.empty()) return p;
  std::ifstream in(config_path);
  TACE_REQUIRE(in.good(), "load_preset: cannot open " + config_path);
  nlohmann::json file = nlohmann::json::parse(in);
  if (file.contains(env_name)) {
    const auto& section = file.at(env_name);
    apply_config_json(p.train, section);
    if (section.contains("max_episode_len")) {
      const int len = section.at("max_episode_len").get<int>();
      if (p.env.multi_agent)
        p.env.mpe.base.max_steps = len;
      else
        p.env.grid.max_steps = len;
    }
  }
  return p;
}

struct RunSpec {
  Algorithm algorithm = Algorithm::tcppo;
  std::string env_name;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::string config_path;

  void validate() const {
    TACE_REQUIRE(!seeds.empty(), "RunSpec: seeds must be non-empty");
    TACE_REQUIRE(!env_name.empty(), "RunSpec: env name required");
  }
};

}  // namespace tace
