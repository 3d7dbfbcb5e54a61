#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "tace/env.hpp"
#include "tace/trainer.hpp"

namespace tace {

// One independent learner: own nets, own optimizer state, own random
// stream, own trajectory memory and own Lagrange multiplier.
struct AgentSlot {
  int agent_id = 0;
  CategoricalPolicy policy;
  Mlp value_net;
  AdamState policy_opt;
  AdamState value_opt;
  ReplayMemory memory;
  SigmaController sigma;
  Rng rng;

  AgentSlot(int id, const MpeGrid& env, const TrainConfig& cfg)
      : agent_id(id), memory{cfg.memory_capacity}, rng(cfg.seed + id) {
    reinit_networks(env, cfg);
    reset_sigma(cfg);
  }

  // Fresh nets and optimizer state drawn from this agent's own (advanced)
  // random stream; memory is left alone.
  void reinit_networks(const MpeGrid& env, const TrainConfig& cfg) {
    std::vector<int> pol_dims{env.observation_dim()};
    for (int h : cfg.hidden_dims) pol_dims.push_back(h);
    pol_dims.push_back(env.action_count());
    std::vector<int> val_dims{env.observation_dim()};
    for (int h : cfg.hidden_dims) val_dims.push_back(h);
    val_dims.push_back(1);
    policy.net = make_mlp(pol_dims, rng, 0.01);
    policy.explore_floor = cfg.explore_floor;
    value_net = make_mlp(val_dims, rng, 1.0);
    policy_opt = make_adam(policy.net, cfg.policy_lr);
    value_opt = make_adam(value_net, cfg.value_lr);
  }

  void reset_sigma(const TrainConfig& cfg) {
    sigma = SigmaController{};
    sigma.sigma = cfg.sigma_init;
    sigma.epsilon = cfg.epsilon_override;
    sigma.up_factor = cfg.asm_up;
    sigma.down_factor = cfg.asm_down;
    sigma.same_goal_factor = cfg.asm_same_goal;
    sigma.delta = cfg.delta;
  }
};

// References an agent repels from: every other agent's stored trajectories.
inline std::vector<TrajectoryFeatures> cross_memory(
    int agent_id, const std::vector<AgentSlot>& team) {
  std::vector<TrajectoryFeatures> refs;
  for (const auto& slot : team) {
    if (slot.agent_id == agent_id) continue;
    auto slot_refs = slot.memory.reference_features();
    refs.insert(refs.end(), slot_refs.begin(), slot_refs.end());
  }
  return refs;
}

// Pushes the batch's trajectories into the agent's own memory, oldest out.
inline void memory_refresh(AgentSlot& agent,
                           const std::vector<Trajectory>& own_trajectories) {
  for (const auto& traj : own_trajectories) agent.memory.add(0, traj);
}

struct TcmaeIterationStats {
  int iteration = 0;
  double team_mean_return = 0.0;
  double team_success_rate = 0.0;  // any agent at the optimal goal
  std::vector<double> sigma;
  std::vector<double> mean_raw_mmd;
  std::vector<bool> has_mmd;
};

// Independent PPO learners whose intrinsic rewards repel each agent from
// the other agents' shared trajectory memories (Algorithm: collect jointly,
// refresh every memory, then per-agent annotate/update in id order).
// Unconstrained mode is the independent-PPO baseline on the same path.
class TcmaeTrainer {
 public:
  TcmaeTrainer(MpeGrid env, TrainConfig cfg, bool constrained = true)
      : env_(std::move(env)),
        cfg_(cfg),
        constrained_(constrained),
        visitation_(env_.extent_y(), std::vector<long>(env_.extent_x(), 0)) {
    cfg_.validate();
    for (int k = 0; k < env_.agent_count; ++k)
      team_.emplace_back(k, env_, cfg_);
  }

  const std::vector<AgentSlot>& team() const { return team_; }
  const MpeGrid& env() const { return env_; }
  const std::vector<std::vector<long>>& visitation() const {
    return visitation_;
  }

  TcmaeIterationStats iterate() {
    // stagnation recovery: reinitialize one agent (round-robin) when the
    // team has gone a long stretch without optimal-goal traction; the other
    // agents' memories keep shaping where the fresh policy is pushed
    if (constrained_ && cfg_.stall_restart_iters > 0 &&
        iters_since_restart_ >= cfg_.stall_restart_iters &&
        recent_optimal_share() < 0.2) {
      const int k = next_restart_agent_ % static_cast<int>(team_.size());
      team_[k].reinit_networks(env_, cfg_);
      team_[k].reset_sigma(cfg_);
      next_restart_agent_ += 1;
      iters_since_restart_ = 0;
    }

    // joint rollout: one batch per agent, same episodes
    std::vector<OnPolicyBatch> batches(team_.size());
    std::vector<std::optional<int>> episode_goal;
    std::vector<double> episode_return;
    collect_joint(batches, episode_goal, episode_return);

    // refresh all memories before any distance computation so that the
    // repulsion within one iteration is mutual
    if (constrained_)
      for (std::size_t k = 0; k < team_.size(); ++k)
        memory_refresh(team_[k], batches[k].trajectories);

    TcmaeIterationStats stats;
    stats.iteration = iteration_++;
    for (std::size_t k = 0; k < team_.size(); ++k) {
      auto& agent = team_[k];
      auto& batch = batches[k];

      std::vector<TrajectoryFeatures> refs;
      if (constrained_) refs = cross_memory(agent.agent_id, team_);

      KernelSpec kernel{cfg_.kernel_family, 1.0};
      if (!refs.empty()) {
        if (cfg_.bandwidth_override > 0.0) {
          kernel.bandwidth = cfg_.bandwidth_override;
        } else {
          std::vector<const TrajectoryFeatures*> sets;
          for (const auto& t : batch.trajectories) sets.push_back(&t.features);
          for (const auto& r : refs) sets.push_back(&r);
          kernel.bandwidth =
              median_heuristic_bandwidth(sets, cfg_.kernel_family);
        }
      }
      annotate_intrinsic(batch, refs, kernel, agent.sigma.delta,
                         cfg_.estimator);

      std::vector<double> traj_mmd;
      if (batch.has_distances) {
        for (double d2 : batch.traj_mmd2)
          traj_mmd.push_back(std::sqrt(std::max(0.0, d2)));
        if (cfg_.epsilon_override <= 0.0 && !traj_mmd.empty()) {
          std::vector<double> sorted = traj_mmd;
          const std::size_t mid = sorted.size() / 2;
          std::nth_element(sorted.begin(), sorted.begin() + mid, sorted.end());
          agent.sigma.epsilon =
              std::max({agent.sigma.epsilon, 1e-12,
                        cfg_.epsilon_scale * sorted[mid]});
        }
      }

      compute_returns(batch, cfg_.gamma);
      compute_advantages(batch, cfg_.gamma, cfg_.gae_lambda);
      TrainConfig update_cfg = cfg_;
      if (batch.has_distances && cfg_.entropy_boost > 0.0) {
        update_cfg.entropy_coef +=
            cfg_.entropy_boost *
            std::pow(cfg_.entropy_boost_decay,
                     static_cast<double>(iteration_));
      }
      ppo_update(agent.policy, agent.policy_opt, agent.value_net,
                 agent.value_opt, batch, agent.sigma.sigma, update_cfg);

      if (constrained_) {
        // the same-goal rule fires on the agent's own terminal goals that
        // other agents' stored trajectories also reach
        bool same_goal = false;
        for (const auto& traj : batch.trajectories) {
          if (!traj.terminal_goal) continue;
          for (const auto& other : team_) {
            if (other.agent_id == agent.agent_id) continue;
            for (const auto& [goal, stored] : other.memory.store) {
              for (const auto& ref : stored)
                if (ref.terminal_goal &&
                    *ref.terminal_goal == *traj.terminal_goal)
                  same_goal = true;
            }
          }
        }
        asm_update(agent.sigma, traj_mmd, same_goal);
      }

      stats.sigma.push_back(agent.sigma.sigma);
      if (batch.has_distances) {
        double sum = 0.0;
        for (double d : batch.distances.raw) sum += d;
        stats.mean_raw_mmd.push_back(sum / batch.distances.raw.size());
        stats.has_mmd.push_back(true);
      } else {
        stats.mean_raw_mmd.push_back(0.0);
        stats.has_mmd.push_back(false);
      }
    }

    int hits = 0;
    double ret = 0.0;
    for (std::size_t ep = 0; ep < episode_goal.size(); ++ep) {
      ret += episode_return[ep];
      if (episode_goal[ep] && *episode_goal[ep] == env_.optimal_goal_id())
        ++hits;
      recent_goals_.push_back(episode_goal[ep] ? *episode_goal[ep] : -1);
      while (static_cast<int>(recent_goals_.size()) > cfg_.convergence_window)
        recent_goals_.pop_front();
    }
    stats.team_mean_return = ret / episode_goal.size();
    stats.team_success_rate =
        static_cast<double>(hits) / episode_goal.size();
    iters_since_restart_ += 1;
    return stats;
  }

  double recent_optimal_share() const {
    if (recent_goals_.empty()) return 0.0;
    int hits = 0;
    for (int g : recent_goals_)
      if (g == env_.optimal_goal_id()) ++hits;
    return static_cast<double>(hits) / recent_goals_.size();
  }

 private:
  // Episodes of the joint environment; every agent records its own local
  // observation/action stream with the shared reward signal.
  void collect_joint(std::vector<OnPolicyBatch>& batches,
                     std::vector<std::optional<int>>& episode_goal,
                     std::vector<double>& episode_return) {
    const int n = env_.agent_count;
    for (int ep = 0; ep < cfg_.episodes_per_iter; ++ep) {
      std::vector<Trajectory> trajs(n);
      auto state = env_.initial_state();
      for (int k = 0; k < n; ++k)
        trajs[k].cells.push_back(state.pos[k]);
      std::optional<int> goal;
      double ep_return = 0.0;
      while (true) {
        std::vector<int> joint_action(n);
        for (int k = 0; k < n; ++k) {
          const Vec obs = env_.observe(state, k);
          auto [action, log_prob] = team_[k].policy.sample(obs, team_[k].rng);
          const double value = mlp_forward(team_[k].value_net, obs)[0];
          joint_action[k] = action;
          Transition tr;
          tr.state = obs;
          tr.action = action;
          tr.log_prob = log_prob;
          tr.value_estimate = value;
          trajs[k].transitions.push_back(std::move(tr));
          const FeaturePoint feat = env_.feature(state, k, action);
          trajs[k].occurrence_keys.push_back(occurrence_key(feat, action));
          trajs[k].features.push_back(feat);
        }
        const auto out = env_.step(state, joint_action);
        for (int k = 0; k < n; ++k) {
          trajs[k].transitions.back().extrinsic_reward = out.reward;
          trajs[k].extrinsic_return += out.reward;
          trajs[k].cells.push_back(out.next.pos[k]);
        }
        ep_return += out.reward;
        state = out.next;
        if (out.terminal) {
          goal = out.goal_id;
          for (int k = 0; k < n; ++k)
            trajs[k].terminal_goal =
                (out.reaching_agent == k) ? out.goal_id : std::nullopt;
          break;
        }
      }
      for (int k = 0; k < n; ++k) {
        for (const Cell& c : trajs[k].cells)
          if (c.y >= 0 && c.y < env_.extent_y() && c.x >= 0 &&
              c.x < env_.extent_x())
            visitation_[c.y][c.x] += 1;
        batches[k].trajectories.push_back(std::move(trajs[k]));
      }
      episode_goal.push_back(goal);
      episode_return.push_back(ep_return);
    }
    for (auto& b : batches) b.rebuild_offsets();
  }

  MpeGrid env_;
  TrainConfig cfg_;
  bool constrained_;
  std::vector<AgentSlot> team_;
  std::vector<std::vector<long>> visitation_;
  std::deque<int> recent_goals_;
  int iteration_ = 0;
  int iters_since_restart_ = 0;
  int next_restart_agent_ = 0;
};

}  // namespace tace
