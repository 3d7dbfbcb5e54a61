#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tace/env.hpp"
#include "tace/mlp.hpp"
#include "tace/mmd.hpp"
#include "tace/rollout.hpp"

namespace tace {

// Rollout/annotation parallelism cap; 0 or unset means hardware concurrency.
inline int tace_thread_cap() {
  if (const char* s = std::getenv("TACE_THREADS")) {
    const int n = std::atoi(s);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Per-goal store of demonstration trajectories. Entries are treated as
// fixed references once stored; eviction is oldest-first.
struct ReplayMemory {
  int capacity_per_goal = 5;
  std::map<int, std::deque<Trajectory>> store;

  bool empty() const { return store.empty(); }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [goal, trajs] : store) n += trajs.size();
    return n;
  }

  void add(int goal_id, Trajectory traj) {
    auto& bucket = store[goal_id];
    bucket.push_back(std::move(traj));
    while (static_cast<int>(bucket.size()) > capacity_per_goal)
      bucket.pop_front();
  }

  bool has_goal(int goal_id) const { return store.count(goal_id) > 0; }

  std::vector<TrajectoryFeatures> reference_features() const {
    std::vector<TrajectoryFeatures> refs;
    for (const auto& [goal, trajs] : store)
      for (const auto& t : trajs) refs.push_back(t.features);
    return refs;
  }
};

// Lagrange multiplier state plus the multiplicative update factors.
struct SigmaController {
  double sigma = 0.5;
  double epsilon = 0.0;  // distance threshold; 0 = not yet calibrated
  double up_factor = 1.05;
  double down_factor = 0.98;
  double same_goal_factor = 1.2;
  double delta = 0.5;  // normalized constraint boundary
};

// Multiplicative sigma update driven by the unsquared trajectory-to-memory
// distances: up when any trajectory is inside epsilon, down when all are
// beyond 2*epsilon, unchanged in between. The same-goal factor composes
// multiplicatively after the distance rule. No-op without references.
inline double asm_update(SigmaController& ctl,
                         const std::vector<double>& traj_mmd,
                         bool reached_same_goal) {
  if (traj_mmd.empty()) return ctl.sigma;
  bool any_inside = false;
  bool all_beyond = true;
  for (double d : traj_mmd) {
    if (d <= ctl.epsilon) any_inside = true;
    if (d < 2.0 * ctl.epsilon) all_beyond = false;
  }
  if (any_inside)
    ctl.sigma *= ctl.up_factor;
  else if (all_beyond)
    ctl.sigma *= ctl.down_factor;
  if (reached_same_goal) ctl.sigma *= ctl.same_goal_factor;
  return ctl.sigma;
}

// Distance annotation for one batch: per-trajectory MMD^2 to memory,
// per-occurrence distances, batch normalization and the clipped reward.
// Leaves the batch untouched (all R_i = 0) when the memory is empty.
inline void annotate_intrinsic(OnPolicyBatch& batch,
                               const std::vector<TrajectoryFeatures>& refs,
                               const KernelSpec& kernel, double delta,
                               MmdEstimator estimator = MmdEstimator::biased) {
  batch.has_distances = false;
  batch.traj_mmd2.clear();
  for (auto& traj : batch.trajectories)
    for (auto& tr : traj.transitions) tr.intrinsic_reward = 0.0;
  if (refs.empty()) return;

  const std::size_t n_traj = batch.trajectories.size();
  batch.traj_mmd2.assign(n_traj, 0.0);
  const int threads =
      std::min<int>(tace_thread_cap(), static_cast<int>(n_traj));
  if (threads > 1) {
    std::vector<std::future<void>> jobs;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < threads; ++w) {
      jobs.push_back(std::async(std::launch::async, [&]() {
        for (std::size_t i = next.fetch_add(1); i < n_traj;
             i = next.fetch_add(1)) {
          batch.traj_mmd2[i] = *traj_distance_to_memory(
              batch.trajectories[i].features, refs, kernel, estimator);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < n_traj; ++i)
      batch.traj_mmd2[i] = *traj_distance_to_memory(
          batch.trajectories[i].features, refs, kernel, estimator);
  }

  std::vector<std::vector<std::string>> keys(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i)
    keys[i] = batch.trajectories[i].occurrence_keys;
  const auto per_occ = per_occurrence_distances(keys, batch.traj_mmd2);

  std::vector<double> raw;
  raw.reserve(batch.step_count());
  for (const auto& traj_vals : per_occ)
    raw.insert(raw.end(), traj_vals.begin(), traj_vals.end());
  batch.distances = normalize_distances(raw);
  batch.has_distances = true;

  std::size_t flat = 0;
  for (auto& traj : batch.trajectories)
    for (auto& tr : traj.transitions)
      tr.intrinsic_reward =
          intrinsic_reward(batch.distances.normalized[flat++], delta);
}

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.20;
  int episodes_per_iter = 8;
  int epochs_per_iter = 65;
  double policy_lr = 0.000018;
  double value_lr = 0.00012;
  double entropy_coef = 0.0;
  // log-barrier toward the uniform action distribution at visited states
  // (adds reg * sum_a log pi(a|s) to the objective); unlike the entropy
  // bonus its gradient does not vanish when an action probability dies
  double action_reg = 0.0;
  double explore_floor = 0.0;   // uniform mixture weight in the action head
  // extra entropy while the distance constraint is active, annealed within
  // the phase: keeps the repulsion fan wide before extrinsic lock-on
  double entropy_boost = 0.0;
  double entropy_boost_decay = 0.995;
  std::uint64_t seed = 1;
  int goal_count = 2;  // outer phase budget G
  int memory_capacity = 5;
  double sigma_init = 0.5;
  double delta = 0.5;
  double asm_up = 1.05;
  double asm_down = 0.98;
  double asm_same_goal = 1.2;
  double epsilon_override = 0.0;  // 0 = calibrate from data
  // epsilon ratchets to scale * (largest batch-median distance seen this
  // phase); the phase-start batch is generated by the very policy the
  // memory snapshot came from, so its median alone is degenerate (~0)
  double epsilon_scale = 0.6;
  KernelFamily kernel_family = KernelFamily::gaussian;
  double bandwidth_override = 0.0;  // 0 = median heuristic per iteration
  MmdEstimator estimator = MmdEstimator::biased;
  int convergence_window = 50;
  double convergence_threshold = 0.9;
  std::vector<int> hidden_dims = {64, 64};
  int max_iterations = 500;
  // fresh policy/value nets at each phase boundary; the converged policy
  // is what the stored demonstrations already encode
  bool reset_policy_per_phase = true;
  // restart a constrained phase from fresh networks when it has neither
  // converged nor found a new goal for this many iterations (0 = never);
  // the memory and phase index are kept, only the nets and sigma restart
  int stall_restart_iters = 0;

  void validate() const {
    TACE_REQUIRE(gamma >= 0.0 && gamma < 1.0, "config: gamma in [0,1)");
    TACE_REQUIRE(gae_lambda >= 0.0 && gae_lambda <= 1.0,
                 "config: gae_lambda in [0,1]");
    TACE_REQUIRE(clip_epsilon > 0.0, "config: clip_epsilon positive");
    TACE_REQUIRE(episodes_per_iter >= 1, "config: episodes_per_iter >= 1");
    TACE_REQUIRE(epochs_per_iter >= 1, "config: epochs_per_iter >= 1");
    TACE_REQUIRE(goal_count >= 1, "config: goal_count >= 1");
    TACE_REQUIRE(sigma_init > 0.0, "config: sigma_init positive");
    TACE_REQUIRE(memory_capacity >= 1, "config: memory_capacity >= 1");
  }
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate update on the combined advantage A_e + sigma * A_i,
// full batch per epoch; the value net regresses on extrinsic returns.
inline PpoStats ppo_update(CategoricalPolicy& policy, AdamState& policy_opt,
                           Mlp& value_net, AdamState& value_opt,
                           const OnPolicyBatch& batch, double sigma,
                           const TrainConfig& cfg) {
  TACE_REQUIRE(!batch.adv_extrinsic.empty(),
               "ppo_update: advantages not computed");
  const std::size_t n = batch.step_count();
  std::vector<double> advantage(n);
  for (std::size_t i = 0; i < n; ++i)
    advantage[i] = batch.adv_extrinsic[i] + sigma * batch.adv_intrinsic[i];

  PpoStats stats;
  const double clip_lo = 1.0 - cfg.clip_epsilon;
  const double clip_hi = 1.0 + cfg.clip_epsilon;

  for (int epoch = 0; epoch < cfg.epochs_per_iter; ++epoch) {
    MlpGrads policy_grads = zero_grads(policy.net);
    MlpGrads value_grads = zero_grads(value_net);
    double surrogate = 0.0, v_loss = 0.0, ent_sum = 0.0, kl_sum = 0.0;
    long clipped = 0;

    const double floor = policy.explore_floor;
    std::size_t flat = 0;
    for (const auto& traj : batch.trajectories) {
      for (const auto& tr : traj.transitions) {
        MlpActivations acts;
        const Vec logits = mlp_forward(policy.net, tr.state, &acts);
        const Vec q = softmax(logits);
        Vec probs = q;
        if (floor > 0.0) {
          probs = (1.0 - floor) * q;
          probs.array() += floor / q.size();
        }
        const Vec logp =
            floor > 0.0 ? Vec(probs.array().log()) : log_softmax(logits);
        const double log_ratio = logp[tr.action] - tr.log_prob;
        const double ratio = std::exp(log_ratio);
        const double adv = advantage[flat];

        const double unclipped = ratio * adv;
        const double clip_ratio = std::clamp(ratio, clip_lo, clip_hi);
        surrogate += std::min(unclipped, clip_ratio * adv);
        kl_sum += (ratio - 1.0) - log_ratio;
        if (clip_ratio != ratio) ++clipped;

        const double entropy = -(probs.array() * logp.array()).sum();
        ent_sum += entropy;

        // d(min(r A, clip(r) A))/d(logits): zero once the clipped branch
        // saturates on the active side
        const bool active =
            adv >= 0.0 ? (ratio <= clip_hi) : (ratio >= clip_lo);
        Vec upstream = Vec::Zero(logits.size());
        if (active) {
          Vec dlogp = -q;
          dlogp[tr.action] += 1.0;
          if (floor > 0.0)
            dlogp *= (1.0 - floor) * q[tr.action] / probs[tr.action];
          upstream += ratio * adv * dlogp;
        }
        if (cfg.entropy_coef != 0.0) {
          const double mean_logp = (q.array() * logp.array()).sum();
          const Vec dent = -(1.0 - floor) *
                           (q.array() * (logp.array() - mean_logp)).matrix();
          upstream += cfg.entropy_coef * dent;
        }
        if (cfg.action_reg != 0.0) {
          // d(sum_a log q_a)/d(logits_j) = 1 - |A| q_j
          Vec barrier = Vec::Ones(logits.size()) -
                        static_cast<double>(logits.size()) * q;
          upstream += cfg.action_reg * barrier;
        }
        // objective is maximized; Adam descends, so negate
        upstream *= -1.0 / static_cast<double>(n);
        mlp_backward(policy.net, acts, upstream, policy_grads);

        MlpActivations v_acts;
        const double v = mlp_forward(value_net, tr.state, &v_acts)[0];
        const double v_err = v - batch.q_extrinsic[flat];
        v_loss += v_err * v_err;
        Vec v_upstream(1);
        v_upstream[0] = 2.0 * v_err / static_cast<double>(n);
        mlp_backward(value_net, v_acts, v_upstream, value_grads);

        ++flat;
      }
    }

    stats.policy_loss = -surrogate / static_cast<double>(n);
    stats.value_loss = v_loss / static_cast<double>(n);
    stats.entropy = ent_sum / static_cast<double>(n);
    stats.approx_kl = kl_sum / static_cast<double>(n);
    stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
    TACE_NUMERIC(std::isfinite(stats.policy_loss) &&
                     std::isfinite(stats.value_loss),
                 "ppo_update: non-finite loss");

    adam_step(policy_opt, policy.net, policy_grads);
    adam_step(value_opt, value_net, value_grads);
  }
  return stats;
}

struct IterationStats {
  int iteration = 0;
  int phase = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;   // episodes ending at the optimal goal
  double mean_raw_mmd = 0.0;   // mean per-pair distance; 0 with empty memory
  bool has_mmd = false;
  double sigma = 0.0;
  bool degenerate_distances = false;
  PpoStats ppo;
};

enum class RunOutcome { converged_optimal, iteration_budget };

// Single-agent trainer: the constrained mode is TCPPO (Algorithm 1 outer
// goal-discovery loop included); unconstrained is the vanilla PPO baseline
// on exactly the same code path.
template <typename Env>
class TcppoTrainer {
 public:
  TcppoTrainer(Env env, TrainConfig cfg, bool constrained = true)
      : env_(std::move(env)),
        cfg_(cfg),
        constrained_(constrained),
        rng_(cfg.seed),
        memory_{cfg.memory_capacity},
        visitation_(env_.extent_y(), std::vector<long>(env_.extent_x(), 0)) {
    cfg_.validate();
    init_networks();
    sigma_ = make_sigma_controller();
  }

  const CategoricalPolicy& policy() const { return policy_; }
  const Mlp& value_net() const { return value_net_; }
  const ReplayMemory& memory() const { return memory_; }
  const SigmaController& sigma_controller() const { return sigma_; }
  int phase() const { return phase_; }
  const Env& env() const { return env_; }
  const std::vector<std::vector<long>>& visitation() const {
    return visitation_;
  }

  // One outer-loop iteration: rollouts, annotation, returns/advantages,
  // PPO update, sigma update, convergence bookkeeping.
  IterationStats iterate() {
    OnPolicyBatch batch = collect_rollouts(policy_, value_net_, env_,
                                           cfg_.episodes_per_iter, rng_);

    std::vector<TrajectoryFeatures> refs;
    if (constrained_ && !memory_.empty()) refs = memory_.reference_features();

    KernelSpec kernel{cfg_.kernel_family, 1.0};
    if (!refs.empty()) {
      kernel.bandwidth = cfg_.bandwidth_override > 0.0
                             ? cfg_.bandwidth_override
                             : median_bandwidth(batch, refs);
    }
    annotate_intrinsic(batch, refs, kernel, sigma_.delta, cfg_.estimator);

    std::vector<double> traj_mmd;  // unsquared, for the sigma rule
    if (batch.has_distances) {
      traj_mmd.reserve(batch.traj_mmd2.size());
      for (double d2 : batch.traj_mmd2)
        traj_mmd.push_back(std::sqrt(std::max(0.0, d2)));
      if (cfg_.epsilon_override <= 0.0) ratchet_epsilon(traj_mmd);
    }

    compute_returns(batch, cfg_.gamma);
    compute_advantages(batch, cfg_.gamma, cfg_.gae_lambda);

    IterationStats stats;
    TrainConfig update_cfg = cfg_;
    if (batch.has_distances && cfg_.entropy_boost > 0.0) {
      update_cfg.entropy_coef +=
          cfg_.entropy_boost *
          std::pow(cfg_.entropy_boost_decay,
                   static_cast<double>(iters_in_phase_));
    }
    stats.ppo = ppo_update(policy_, policy_opt_, value_net_, value_opt_,
                           batch, sigma_.sigma, update_cfg);
    iters_in_phase_ += 1;

    bool same_goal = false;
    for (const auto& traj : batch.trajectories)
      if (traj.terminal_goal && memory_.has_goal(*traj.terminal_goal))
        same_goal = true;
    if (constrained_) asm_update(sigma_, traj_mmd, same_goal);

    record_episodes(batch);

    stats.iteration = iteration_++;
    stats.phase = phase_;
    stats.sigma = sigma_.sigma;
    stats.mean_return = 0.0;
    int optimal_hits = 0;
    for (const auto& traj : batch.trajectories) {
      stats.mean_return += traj.extrinsic_return;
      if (traj.terminal_goal &&
          *traj.terminal_goal == env_.optimal_goal_id())
        ++optimal_hits;
    }
    stats.mean_return /= batch.trajectories.size();
    stats.success_rate =
        static_cast<double>(optimal_hits) / batch.trajectories.size();
    if (batch.has_distances) {
      stats.has_mmd = true;
      double sum = 0.0;
      for (double d : batch.distances.raw) sum += d;
      stats.mean_raw_mmd = sum / batch.distances.raw.size();
      stats.degenerate_distances = batch.distances.degenerate;
    }
    return stats;
  }

  // Share of the trailing episode window that ended at the optimal goal.
  double recent_optimal_share() const {
    if (recent_goals_.empty()) return 0.0;
    int hits = 0;
    for (int g : recent_goals_)
      if (g == env_.optimal_goal_id()) ++hits;
    return static_cast<double>(hits) / recent_goals_.size();
  }

  // Convergence test over the trailing episode window; pure in the
  // recorded statistics.
  std::optional<int> converged_goal() const {
    if (static_cast<int>(recent_goals_.size()) < cfg_.convergence_window)
      return std::nullopt;
    std::map<int, int> counts;
    for (int g : recent_goals_)
      if (g >= 0) counts[g] += 1;
    for (const auto& [goal, count] : counts) {
      if (count >= cfg_.convergence_threshold *
                       static_cast<double>(cfg_.convergence_window))
        return goal;
    }
    return std::nullopt;
  }

  // Ends the current phase after convergence to a suboptimal goal:
  // snapshots demonstrations into memory, resets sigma and epsilon, and
  // by default restarts from fresh networks (the converged behavior is
  // exactly what the stored demonstrations encode).
  void start_next_phase(int suboptimal_goal) {
    int stored = 0;
    for (auto it = episode_history_.rbegin();
         it != episode_history_.rend() && stored < cfg_.memory_capacity;
         ++it) {
      if (it->terminal_goal && *it->terminal_goal == suboptimal_goal) {
        memory_.add(suboptimal_goal, *it);
        ++stored;
      }
    }
    sigma_ = make_sigma_controller();
    if (cfg_.reset_policy_per_phase) init_networks();
    recent_goals_.clear();
    iters_in_phase_ = 0;
    phase_ += 1;
  }

  // The outer goal-discovery loop (up to cfg.goal_count phases).
  RunOutcome run(const std::function<void(const IterationStats&)>& on_iter =
                     nullptr) {
    for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
      IterationStats stats = iterate();
      if (on_iter) on_iter(stats);
      if (auto goal = converged_goal()) {
        if (*goal == env_.optimal_goal_id()) return RunOutcome::converged_optimal;
        // a goal already stored does not consume another phase; sigma keeps
        // growing until the policy escapes it
        if (constrained_ && phase_ + 1 < cfg_.goal_count &&
            !memory_.has_goal(*goal))
          start_next_phase(*goal);
      } else if (constrained_ && !memory_.empty() &&
                 cfg_.stall_restart_iters > 0 &&
                 iters_in_phase_ >= cfg_.stall_restart_iters &&
                 recent_optimal_share() < 0.2) {
        // stalled with no optimal-goal traction; try a fresh fan
        restart_phase();
      }
    }
    return RunOutcome::iteration_budget;
  }

  // Fresh nets and sigma within the same phase; the stored demonstrations
  // and the phase index are untouched.
  void restart_phase() {
    sigma_ = make_sigma_controller();
    if (cfg_.reset_policy_per_phase) init_networks();
    recent_goals_.clear();
    iters_in_phase_ = 0;
  }

 private:
  void init_networks() {
    std::vector<int> pol_dims{env_.observation_dim()};
    for (int h : cfg_.hidden_dims) pol_dims.push_back(h);
    pol_dims.push_back(env_.action_count());
    std::vector<int> val_dims{env_.observation_dim()};
    for (int h : cfg_.hidden_dims) val_dims.push_back(h);
    val_dims.push_back(1);
    policy_.net = make_mlp(pol_dims, rng_, 0.01);
    policy_.explore_floor = cfg_.explore_floor;
    value_net_ = make_mlp(val_dims, rng_, 1.0);
    policy_opt_ = make_adam(policy_.net, cfg_.policy_lr);
    value_opt_ = make_adam(value_net_, cfg_.value_lr);
  }

  SigmaController make_sigma_controller() const {
    SigmaController s;
    s.sigma = cfg_.sigma_init;
    s.epsilon = cfg_.epsilon_override;
    s.up_factor = cfg_.asm_up;
    s.down_factor = cfg_.asm_down;
    s.same_goal_factor = cfg_.asm_same_goal;
    s.delta = cfg_.delta;
    return s;
  }

  double median_bandwidth(const OnPolicyBatch& batch,
                          const std::vector<TrajectoryFeatures>& refs) const {
    std::vector<const TrajectoryFeatures*> sets;
    for (const auto& t : batch.trajectories) sets.push_back(&t.features);
    for (const auto& r : refs) sets.push_back(&r);
    return median_heuristic_bandwidth(sets, cfg_.kernel_family);
  }

  void ratchet_epsilon(std::vector<double> traj_mmd) {
    const std::size_t mid = traj_mmd.size() / 2;
    std::nth_element(traj_mmd.begin(), traj_mmd.begin() + mid, traj_mmd.end());
    sigma_.epsilon = std::max(
        {sigma_.epsilon, 1e-12, cfg_.epsilon_scale * traj_mmd[mid]});
  }

  void record_episodes(const OnPolicyBatch& batch) {
    for (const auto& traj : batch.trajectories) {
      recent_goals_.push_back(traj.terminal_goal ? *traj.terminal_goal : -1);
      while (static_cast<int>(recent_goals_.size()) > cfg_.convergence_window)
        recent_goals_.pop_front();
      for (const Cell& c : traj.cells)
        if (c.y >= 0 && c.y < env_.extent_y() && c.x >= 0 &&
            c.x < env_.extent_x())
          visitation_[c.y][c.x] += 1;
      episode_history_.push_back(traj);
      while (episode_history_.size() > 512) episode_history_.pop_front();
    }
  }

  Env env_;
  TrainConfig cfg_;
  bool constrained_;
  Rng rng_;
  CategoricalPolicy policy_;
  Mlp value_net_;
  AdamState policy_opt_;
  AdamState value_opt_;
  SigmaController sigma_;
  ReplayMemory memory_;
  std::deque<int> recent_goals_;
  std::deque<Trajectory> episode_history_;
  std::vector<std::vector<long>> visitation_;
  int iteration_ = 0;
  int phase_ = 0;
  int iters_in_phase_ = 0;
};

}  // namespace tace
