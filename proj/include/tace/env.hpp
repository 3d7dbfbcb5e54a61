#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tace/common.hpp"
#include "tace/mmd.hpp"

namespace tace {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct Goal {
  Cell cell;
  double reward = 0.0;
};

// Grid actions, counterclockwise from east. (0,0) is the bottom-left cell.
enum GridAction : int { kEast = 0, kSouth = 1, kWest = 2, kNorth = 3 };
constexpr int kGridActionCount = 4;

enum class FeatureMode { coords, coords_action };

struct GridState {
  Cell pos;
  int t = 0;
};

struct StepResult {
  GridState next;
  double reward = 0.0;
  bool terminal = false;
  std::optional<int> goal_id;
};

struct GridWorld;
inline FeaturePoint grid_features(const GridWorld& env, Cell c, int action);
inline StepResult grid_step(const GridWorld& env, const GridState& s,
                            int action);

// Deterministic sparse-reward gridworld. Blocked moves (wall or boundary)
// leave the position unchanged; stepping onto a goal terminates with its
// reward; otherwise the step budget terminates with reward zero.
struct GridWorld {
  std::string name = "grid";
  int width = 0;
  int height = 0;
  std::set<Cell> walls;
  Cell start;
  std::vector<Goal> goals;
  int max_steps = 0;
  FeatureMode feature_mode = FeatureMode::coords;

  using State = GridState;

  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
  }
  bool blocked(Cell c) const { return !in_bounds(c) || walls.count(c) > 0; }

  std::optional<int> goal_at(Cell c) const {
    for (std::size_t i = 0; i < goals.size(); ++i)
      if (goals[i].cell == c) return static_cast<int>(i);
    return std::nullopt;
  }

  int optimal_goal_id() const {
    int best = 0;
    for (std::size_t i = 1; i < goals.size(); ++i)
      if (goals[i].reward > goals[best].reward) best = static_cast<int>(i);
    return best;
  }

  State initial_state() const { return {start, 0}; }
  int action_count() const { return kGridActionCount; }
  int extent_x() const { return width; }
  int extent_y() const { return height; }

  // Policy input: coordinates relative to the start cell, scaled by the
  // grid extent.
  Vec observe(const State& s) const {
    Vec obs(2);
    obs << static_cast<double>(s.pos.x - start.x) / width,
        static_cast<double>(s.pos.y - start.y) / height;
    return obs;
  }

  int observation_dim() const { return 2; }

  FeaturePoint feature(const State& s, int action) const {
    return grid_features(*this, s.pos, action);
  }

  StepResult step(const State& s, int action) const {
    return grid_step(*this, s, action);
  }
};

inline Cell move(Cell c, int action) {
  switch (action) {
    case kEast:
      return {c.x + 1, c.y};
    case kSouth:
      return {c.x, c.y - 1};
    case kWest:
      return {c.x - 1, c.y};
    case kNorth:
      return {c.x, c.y + 1};
    default:
      throw InputError("move: invalid action id");
  }
}

inline StepResult grid_step(const GridWorld& env, const GridState& s,
                            int action) {
  TACE_REQUIRE(env.in_bounds(s.pos), "grid_step: state outside grid");
  Cell target = move(s.pos, action);
  if (env.blocked(target)) target = s.pos;
  StepResult out;
  out.next = {target, s.t + 1};
  out.goal_id = env.goal_at(target);
  if (out.goal_id) {
    out.reward = env.goals[*out.goal_id].reward;
    out.terminal = true;
  } else {
    out.terminal = out.next.t >= env.max_steps;
  }
  return out;
}

// g(s, a): normalized agent coordinates, optionally with a one-hot action.
inline FeaturePoint grid_features(const GridWorld& env, Cell c, int action) {
  if (env.feature_mode == FeatureMode::coords) {
    Vec f(2);
    f << static_cast<double>(c.x) / env.width,
        static_cast<double>(c.y) / env.height;
    return f;
  }
  Vec f(2 + kGridActionCount);
  f.setZero();
  f[0] = static_cast<double>(c.x) / env.width;
  f[1] = static_cast<double>(c.y) / env.height;
  f[2 + action] = 1.0;
  return f;
}

// Two-goal maze: start bottom-left, optimal goal top-right (reward 6),
// deceptive goal right of the start (reward 1).
inline GridWorld make_two_goal_grid(std::string name, int width, int height,
                                    int max_steps) {
  GridWorld g;
  g.name = std::move(name);
  g.width = width;
  g.height = height;
  g.start = {0, 0};
  g.goals = {{{width / 3, 0}, 1.0}, {{width - 1, height - 1}, 6.0}};
  g.max_steps = max_steps;
  return g;
}

inline GridWorld make_grid50() { return make_two_goal_grid("grid50", 50, 50, 160); }
inline GridWorld make_grid70() { return make_two_goal_grid("grid70", 70, 70, 220); }

// 70x70 variant with an extra deception goal of reward 2.
inline GridWorld make_grid70_three_goal() {
  GridWorld g = make_two_goal_grid("grid70_three_goal", 70, 70, 220);
  g.goals.push_back({{0, 2 * g.height / 3}, 2.0});
  return g;
}

// Two cooperating particles in one room; the team shares the reward and the
// episode ends as soon as any agent reaches any goal.
struct MpeGrid {
  GridWorld base;
  int agent_count = 2;
  std::vector<Cell> starts;
  bool shared_reward = true;

  struct State {
    std::vector<Cell> pos;
    int t = 0;
  };

  struct JointStepResult {
    State next;
    double reward = 0.0;
    bool terminal = false;
    std::optional<int> goal_id;
    int reaching_agent = -1;
  };

  State initial_state() const { return {starts, 0}; }
  int action_count() const { return kGridActionCount; }
  int extent_x() const { return base.width; }
  int extent_y() const { return base.height; }

  Vec observe(const State& s, int agent) const {
    Vec obs(2);
    obs << static_cast<double>(s.pos[agent].x - starts[agent].x) / base.width,
        static_cast<double>(s.pos[agent].y - starts[agent].y) / base.height;
    return obs;
  }

  int observation_dim() const { return 2; }

  FeaturePoint feature(const State& s, int agent, int action) const {
    return grid_features(base, s.pos[agent], action);
  }

  int optimal_goal_id() const { return base.optimal_goal_id(); }

  // All agents move simultaneously; if several land on goals in the same
  // step, the lowest agent id wins (fixed tie-break for reproducibility).
  JointStepResult step(const State& s, const std::vector<int>& actions) const {
    TACE_REQUIRE(static_cast<int>(actions.size()) == agent_count,
                 "MpeGrid::step: joint action arity mismatch");
    JointStepResult out;
    out.next.pos.resize(agent_count);
    out.next.t = s.t + 1;
    for (int k = 0; k < agent_count; ++k) {
      Cell target = move(s.pos[k], actions[k]);
      out.next.pos[k] = base.blocked(target) ? s.pos[k] : target;
    }
    for (int k = 0; k < agent_count; ++k) {
      if (auto gid = base.goal_at(out.next.pos[k])) {
        out.goal_id = gid;
        out.reaching_agent = k;
        out.reward = base.goals[*gid].reward;
        out.terminal = true;
        break;
      }
    }
    if (!out.terminal) out.terminal = out.next.t >= base.max_steps;
    return out;
  }
};

inline MpeGrid make_mpe_grid(std::string name, int width, int height,
                             int max_steps, int agents = 2) {
  MpeGrid m;
  m.base = make_two_goal_grid(std::move(name), width, height, max_steps);
  m.agent_count = agents;
  m.starts.assign(agents, m.base.start);
  return m;
}

inline MpeGrid make_mpe70() { return make_mpe_grid("mpe70", 70, 70, 240); }

// Single-agent view over a one-particle MpeGrid; lets the single-agent
// trainer run on the multi-agent dynamics unchanged.
struct MpeSingleView {
  MpeGrid env;

  using State = MpeGrid::State;

  MpeSingleView(MpeGrid e) : env(std::move(e)) {
    TACE_REQUIRE(env.agent_count == 1, "MpeSingleView: needs one agent");
  }

  State initial_state() const { return env.initial_state(); }
  int action_count() const { return env.action_count(); }
  int extent_x() const { return env.extent_x(); }
  int extent_y() const { return env.extent_y(); }
  Vec observe(const State& s) const { return env.observe(s, 0); }
  int observation_dim() const { return env.observation_dim(); }
  FeaturePoint feature(const State& s, int action) const {
    return env.feature(s, 0, action);
  }
  int optimal_goal_id() const { return env.optimal_goal_id(); }

  struct ViewStepResult {
    State next;
    double reward = 0.0;
    bool terminal = false;
    std::optional<int> goal_id;
  };

  ViewStepResult step(const State& s, int action) const {
    auto joint = env.step(s, {action});
    return {joint.next, joint.reward, joint.terminal, joint.goal_id};
  }
};

// Total visit count per cell over the provided state paths (every visited
// state counts, including starts and revisits).
inline std::vector<std::vector<long>> visitation_counts(
    int width, int height, const std::vector<std::vector<Cell>>& paths) {
  std::vector<std::vector<long>> counts(height, std::vector<long>(width, 0));
  for (const auto& path : paths)
    for (const Cell& c : path)
      if (c.x >= 0 && c.x < width && c.y >= 0 && c.y < height)
        counts[c.y][c.x] += 1;
  return counts;
}

}  // namespace tace
