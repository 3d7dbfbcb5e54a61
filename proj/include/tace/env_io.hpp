#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tace/env.hpp"

namespace tace {

// Text maze format, first line = top row: '#' wall, '.' free cell,
// 'S' start, digits 0-9 = goal ids. The JSON sidecar maps goal id to
// reward and carries max_steps.
inline GridWorld load_maze(const std::string& grid_path,
                           const std::string& sidecar_path) {
  std::ifstream in(grid_path);
  TACE_REQUIRE(in.good(), "load_maze: cannot open " + grid_path);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  TACE_REQUIRE(!rows.empty(), "load_maze: empty maze file");
  const int height = static_cast<int>(rows.size());
  const int width = static_cast<int>(rows.front().size());
  for (const auto& r : rows)
    TACE_REQUIRE(static_cast<int>(r.size()) == width,
                 "load_maze: ragged maze rows");

  std::ifstream side(sidecar_path);
  TACE_REQUIRE(side.good(), "load_maze: cannot open " + sidecar_path);
  nlohmann::json meta = nlohmann::json::parse(side);

  GridWorld g;
  g.name = meta.value("name", "maze");
  g.width = width;
  g.height = height;
  g.max_steps = meta.value("max_steps", 4 * (width + height));

  std::map<int, Cell> goal_cells;
  bool has_start = false;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const char ch = rows[r][c];
      const Cell cell{c, height - 1 - r};
      if (ch == '#') {
        g.walls.insert(cell);
      } else if (ch == 'S') {
        g.start = cell;
        has_start = true;
      } else if (ch >= '0' && ch <= '9') {
        goal_cells[ch - '0'] = cell;
      } else {
        TACE_REQUIRE(ch == '.', "load_maze: unknown cell character");
      }
    }
  }
  TACE_REQUIRE(has_start, "load_maze: no start cell");
  TACE_REQUIRE(!goal_cells.empty(), "load_maze: no goals");

  const auto& rewards = meta.at("goal_rewards");
  for (const auto& [id, cell] : goal_cells) {
    const std::string key = std::to_string(id);
    TACE_REQUIRE(rewards.contains(key),
                 "load_maze: missing reward for goal " + key);
    const int idx = static_cast<int>(g.goals.size());
    TACE_REQUIRE(idx == id, "load_maze: goal ids must be contiguous from 0");
    g.goals.push_back({cell, rewards.at(key).get<double>()});
  }
  return g;
}

inline void save_maze(const GridWorld& g, const std::string& grid_path,
                      const std::string& sidecar_path) {
  std::ofstream out(grid_path);
  TACE_REQUIRE(out.good(), "save_maze: cannot write " + grid_path);
  for (int r = 0; r < g.height; ++r) {
    const int y = g.height - 1 - r;
    for (int x = 0; x < g.width; ++x) {
      const Cell cell{x, y};
      char ch = '.';
      if (g.walls.count(cell)) ch = '#';
      if (cell == g.start) ch = 'S';
      if (auto gid = g.goal_at(cell)) ch = static_cast<char>('0' + *gid);
      out << ch;
    }
    out << '\n';
  }
  nlohmann::json meta;
  meta["name"] = g.name;
  meta["max_steps"] = g.max_steps;
  for (std::size_t i = 0; i < g.goals.size(); ++i)
    meta["goal_rewards"][std::to_string(i)] = g.goals[i].reward;
  std::ofstream side(sidecar_path);
  TACE_REQUIRE(side.good(), "save_maze: cannot write " + sidecar_path);
  side << meta.dump(2) << '\n';
}

// CSV matrix, one row per grid row, top row first.
inline void write_heatmap_csv(const std::vector<std::vector<long>>& counts,
                              std::ostream& out) {
  for (auto it = counts.rbegin(); it != counts.rend(); ++it) {
    const auto& row = *it;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << row[c];
    }
    out << '\n';
  }
}

inline void write_heatmap_csv(const std::vector<std::vector<long>>& counts,
                              const std::string& path) {
  std::ofstream out(path);
  TACE_REQUIRE(out.good(), "write_heatmap_csv: cannot write " + path);
  write_heatmap_csv(counts, out);
}

}  // namespace tace
