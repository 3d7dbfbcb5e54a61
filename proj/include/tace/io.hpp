#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tace/env.hpp"
#include "tace/mlp.hpp"
#include "tace/trainer.hpp"

namespace tace {

// ---------------------------------------------------------------------------
// Parameter checkpoints: one JSON header line with the layer shapes,
// followed by every weight matrix (column-major) and bias vector as raw
// little-endian 64-bit floats, in layer order.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const Mlp& net, const std::string& path) {
  nlohmann::json header;
  header["format"] = "tace-mlp-v1";
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    header["layers"].push_back(
        {{"rows", net.weights[l].rows()}, {"cols", net.weights[l].cols()}});
  }
  std::ofstream out(path, std::ios::binary);
  TACE_REQUIRE(out.good(), "save_checkpoint: cannot write " + path);
  out << header.dump() << '\n';
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    out.write(reinterpret_cast<const char*>(net.weights[l].data()),
              sizeof(double) * net.weights[l].size());
    out.write(reinterpret_cast<const char*>(net.biases[l].data()),
              sizeof(double) * net.biases[l].size());
  }
}

inline Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  TACE_REQUIRE(in.good(), "load_checkpoint: cannot open " + path);
  std::string header_line;
  std::getline(in, header_line);
  nlohmann::json header = nlohmann::json::parse(header_line);
  TACE_REQUIRE(header.value("format", "") == "tace-mlp-v1",
               "load_checkpoint: unknown format");
  Mlp net;
  for (const auto& layer : header.at("layers")) {
    const int rows = layer.at("rows").get<int>();
    const int cols = layer.at("cols").get<int>();
    Mat w(rows, cols);
    in.read(reinterpret_cast<char*>(w.data()), sizeof(double) * w.size());
    Vec b(rows);
    in.read(reinterpret_cast<char*>(b.data()), sizeof(double) * b.size());
    TACE_REQUIRE(in.good(), "load_checkpoint: truncated file");
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Metrics CSV. Single-agent schema:
//   iteration,mean_return,success_rate,mean_raw_mmd,sigma,phase,wall_seconds
// Multi-agent runs add agent_id before wall_seconds.
// ---------------------------------------------------------------------------

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, bool with_agent_id)
      : out_(path), with_agent_id_(with_agent_id) {
    TACE_REQUIRE(out_.good(), "MetricsWriter: cannot write " + path);
    out_ << "iteration,mean_return,success_rate,mean_raw_mmd,sigma,phase";
    if (with_agent_id_) out_ << ",agent_id";
    out_ << ",wall_seconds\n";
  }

  void row(const IterationStats& s, double wall_seconds) {
    TACE_REQUIRE(!with_agent_id_, "MetricsWriter: agent_id column expected");
    write_common(s.iteration, s.mean_return, s.success_rate, s.mean_raw_mmd,
                 s.sigma, s.phase);
    out_ << ',' << format(wall_seconds) << '\n';
  }

  void row(int iteration, double mean_return, double success_rate,
           double mean_raw_mmd, double sigma, int phase, int agent_id,
           double wall_seconds) {
    TACE_REQUIRE(with_agent_id_, "MetricsWriter: no agent_id column");
    write_common(iteration, mean_return, success_rate, mean_raw_mmd, sigma,
                 phase);
    out_ << ',' << agent_id << ',' << format(wall_seconds) << '\n';
  }

  void flush() { out_.flush(); }

 private:
  static std::string format(double v) {
    std::ostringstream ss;
    ss << std::setprecision(12) << v;
    return ss.str();
  }

  void write_common(int iteration, double mean_return, double success_rate,
                    double mean_raw_mmd, double sigma, int phase) {
    out_ << iteration << ',' << format(mean_return) << ','
         << format(success_rate) << ',' << format(mean_raw_mmd) << ','
         << format(sigma) << ',' << phase;
  }

  std::ofstream out_;
  bool with_agent_id_;
};

// ---------------------------------------------------------------------------
// Demonstration memory as JSON lines. One line per trajectory:
//   {"episode": n, "goal": g, "steps": [[x, y, action, reward], ...]}
// States are raw grid coordinates; features are recomputed on load.
// ---------------------------------------------------------------------------

inline void save_memory_jsonl(const ReplayMemory& memory,
                              const std::string& path) {
  std::ofstream out(path);
  TACE_REQUIRE(out.good(), "save_memory_jsonl: cannot write " + path);
  int episode = 0;
  for (const auto& [goal, trajs] : memory.store) {
    for (const auto& traj : trajs) {
      nlohmann::json line;
      line["episode"] = episode++;
      line["goal"] = goal;
      auto& steps = line["steps"];
      for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
        steps.push_back({traj.cells[t].x, traj.cells[t].y,
                         traj.transitions[t].action,
                         traj.transitions[t].extrinsic_reward});
      }
      out << line.dump() << '\n';
    }
  }
}

inline ReplayMemory load_memory_jsonl(const std::string& path,
                                      const GridWorld& env,
                                      int capacity_per_goal = 5) {
  std::ifstream in(path);
  TACE_REQUIRE(in.good(), "load_memory_jsonl: cannot open " + path);
  ReplayMemory memory{capacity_per_goal};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Trajectory traj;
    traj.terminal_goal = j.at("goal").get<int>();
    for (const auto& step : j.at("steps")) {
      const Cell cell{step.at(0).get<int>(), step.at(1).get<int>()};
      const int action = step.at(2).get<int>();
      Transition tr;
      tr.state = env.observe({cell, 0});
      tr.action = action;
      tr.extrinsic_reward = step.at(3).get<double>();
      traj.transitions.push_back(std::move(tr));
      traj.cells.push_back(cell);
      const FeaturePoint feat = grid_features(env, cell, action);
      traj.features.push_back(feat);
      traj.occurrence_keys.push_back(occurrence_key(feat, action));
      traj.extrinsic_return += step.at(3).get<double>();
    }
    memory.add(*traj.terminal_goal, std::move(traj));
  }
  return memory;
}

// ---------------------------------------------------------------------------
// Run manifest and config hashing.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string git_revision(const std::string& repo_root = ".") {
  namespace fs = std::filesystem;
  const fs::path head = fs::path(repo_root) / ".git" / "HEAD";
  std::ifstream in(head);
  if (!in.good()) return "unknown";
  std::string line;
  std::getline(in, line);
  if (line.rfind("ref: ", 0) == 0) {
    std::ifstream ref(fs::path(repo_root) / ".git" / line.substr(5));
    if (!ref.good()) return "unknown";
    std::string sha;
    std::getline(ref, sha);
    return sha.empty() ? "unknown" : sha;
  }
  return line.empty() ? "unknown" : line;
}

// ---------------------------------------------------------------------------
// Cross-seed aggregation: per-iteration mean and standard error (sample
// standard deviation over sqrt(n)) of every numeric column. Row count is
// the shortest run.
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  TACE_REQUIRE(in.good(), "read_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  TACE_REQUIRE(static_cast<bool>(std::getline(in, line)),
               "read_csv: empty file " + path);
  std::stringstream header(line);
  std::string col;
  while (std::getline(header, col, ',')) table.columns.push_back(col);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    TACE_REQUIRE(row.size() == table.columns.size(),
                 "read_csv: ragged row in " + path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void aggregate_csv(const std::vector<std::string>& inputs,
                          std::ostream& out) {
  TACE_REQUIRE(!inputs.empty(), "aggregate_csv: no inputs");
  std::vector<CsvTable> tables;
  for (const auto& path : inputs) tables.push_back(read_csv(path));
  for (const auto& t : tables)
    TACE_REQUIRE(t.columns == tables.front().columns,
                 "aggregate_csv: schema mismatch");
  std::size_t rows = tables.front().rows.size();
  for (const auto& t : tables) rows = std::min(rows, t.rows.size());

  const auto& cols = tables.front().columns;
  out << cols[0];
  for (std::size_t c = 1; c < cols.size(); ++c)
    out << ',' << cols[c] << "_mean," << cols[c] << "_stderr";
  out << '\n';
  out << std::setprecision(12);
  for (std::size_t r = 0; r < rows; ++r) {
    out << tables.front().rows[r][0];
    for (std::size_t c = 1; c < cols.size(); ++c) {
      double mean = 0.0;
      for (const auto& t : tables) mean += t.rows[r][c];
      mean /= tables.size();
      double var = 0.0;
      for (const auto& t : tables)
        var += (t.rows[r][c] - mean) * (t.rows[r][c] - mean);
      const double stderr_ =
          tables.size() > 1
              ? std::sqrt(var / (tables.size() - 1)) /
                    std::sqrt(static_cast<double>(tables.size()))
              : 0.0;
      out << ',' << mean << ',' << stderr_;
    }
    out << '\n';
  }
}

}  // namespace tace
