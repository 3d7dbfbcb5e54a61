#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tace/env.hpp"
#include "tace/mlp.hpp"
#include "tace/mmd.hpp"
#include "tace/rng.hpp"

namespace tace {

struct Transition {
  Vec state;                      // observation fed to the policy
  int action = 0;
  double extrinsic_reward = 0.0;  // R_e
  double intrinsic_reward = 0.0;  // R_i, never positive
  double log_prob = 0.0;          // under the sampling policy
  double value_estimate = 0.0;
};

struct Trajectory {
  std::vector<Transition> transitions;
  TrajectoryFeatures features;             // g(s_t, a_t) per step
  std::vector<std::string> occurrence_keys;  // identity of each (s, a)
  std::vector<Cell> cells;                 // visited cells incl. start
  std::optional<int> terminal_goal;
  double extrinsic_return = 0.0;           // undiscounted episode return

  std::size_t length() const { return transitions.size(); }
};

// One iteration's worth of on-policy experience plus its annotations.
// Per-step arrays are flattened in trajectory order; offsets[i] is the
// first flat index of trajectory i.
struct OnPolicyBatch {
  std::vector<Trajectory> trajectories;
  std::vector<std::size_t> offsets;

  std::vector<double> traj_mmd2;  // per-trajectory distance to memory
  DistanceBatch distances;        // per-step raw/normalized pair distances
  bool has_distances = false;

  std::vector<double> q_extrinsic;
  std::vector<double> q_intrinsic;
  std::vector<double> adv_extrinsic;
  std::vector<double> adv_intrinsic;

  std::size_t step_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
  }

  void rebuild_offsets() {
    offsets.clear();
    std::size_t acc = 0;
    for (const auto& t : trajectories) {
      offsets.push_back(acc);
      acc += t.length();
    }
  }
};

namespace detail {

template <typename Env>
Cell cell_of(const Env& env, const typename Env::State& s) {
  if constexpr (requires { s.pos.x; }) {
    (void)env;
    return s.pos;
  } else {
    (void)env;
    return s.pos[0];
  }
}

}  // namespace detail

// Runs exactly `episodes` episodes under the current policy. Each episode
// ends on a goal or on the environment step budget; log-probs and value
// estimates are recorded under the sampling parameters.
template <typename Env>
OnPolicyBatch collect_rollouts(const CategoricalPolicy& policy,
                               const Mlp& value_net, const Env& env,
                               int episodes, Rng& rng) {
  TACE_REQUIRE(episodes >= 1, "collect_rollouts: need at least one episode");
  OnPolicyBatch batch;
  for (int ep = 0; ep < episodes; ++ep) {
    Trajectory traj;
    auto state = env.initial_state();
    traj.cells.push_back(detail::cell_of(env, state));
    while (true) {
      const Vec obs = env.observe(state);
      auto [action, log_prob] = policy.sample(obs, rng);
      const double value = mlp_forward(value_net, obs)[0];
      const auto out = env.step(state, action);

      Transition tr;
      tr.state = obs;
      tr.action = action;
      tr.extrinsic_reward = out.reward;
      tr.log_prob = log_prob;
      tr.value_estimate = value;
      traj.transitions.push_back(std::move(tr));

      const FeaturePoint feat = env.feature(state, action);
      traj.occurrence_keys.push_back(occurrence_key(feat, action));
      traj.features.push_back(feat);
      traj.extrinsic_return += out.reward;

      state = out.next;
      traj.cells.push_back(detail::cell_of(env, state));
      if (out.terminal) {
        traj.terminal_goal = out.goal_id;
        break;
      }
    }
    batch.trajectories.push_back(std::move(traj));
  }
  batch.rebuild_offsets();
  return batch;
}

// Finite-horizon discounted reward-to-go per episode, for both reward
// streams. Q_i stays non-positive because R_i is.
inline void compute_returns(OnPolicyBatch& batch, double gamma) {
  const std::size_t n = batch.step_count();
  batch.q_extrinsic.assign(n, 0.0);
  batch.q_intrinsic.assign(n, 0.0);
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const auto& traj = batch.trajectories[i];
    const std::size_t base = batch.offsets[i];
    double qe = 0.0, qi = 0.0;
    for (int t = static_cast<int>(traj.length()) - 1; t >= 0; --t) {
      qe = traj.transitions[t].extrinsic_reward + gamma * qe;
      qi = traj.transitions[t].intrinsic_reward + gamma * qi;
      batch.q_extrinsic[base + t] = qe;
      batch.q_intrinsic[base + t] = qi;
    }
  }
}

// A_e by GAE(lambda) on the extrinsic stream (value function as baseline,
// terminal value zero); A_i is the raw intrinsic return, no baseline.
inline void compute_advantages(OnPolicyBatch& batch, double gamma,
                               double lambda) {
  TACE_REQUIRE(!batch.q_intrinsic.empty(),
               "compute_advantages: returns not computed");
  const std::size_t n = batch.step_count();
  batch.adv_extrinsic.assign(n, 0.0);
  batch.adv_intrinsic = batch.q_intrinsic;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const auto& traj = batch.trajectories[i];
    const std::size_t base = batch.offsets[i];
    const int len = static_cast<int>(traj.length());
    double gae = 0.0;
    for (int t = len - 1; t >= 0; --t) {
      const double v = traj.transitions[t].value_estimate;
      const double v_next =
          (t + 1 < len) ? traj.transitions[t + 1].value_estimate : 0.0;
      const double delta =
          traj.transitions[t].extrinsic_reward + gamma * v_next - v;
      gae = delta + gamma * lambda * gae;
      batch.adv_extrinsic[base + t] = gae;
    }
  }
}

}  // namespace tace
