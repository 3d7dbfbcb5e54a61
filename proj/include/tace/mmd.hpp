#pragma once

#include <algorithm>
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tace/common.hpp"

namespace tace {

// One embedded state-action pair g(s, a).
using FeaturePoint = Vec;

// Empirical visitation sample of one trajectory in feature space.
using TrajectoryFeatures = std::vector<FeaturePoint>;

enum class KernelFamily { gaussian, laplace };
enum class MmdEstimator { biased, unbiased };

struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double bandwidth = 1.0;
};

inline double kernel_eval(const FeaturePoint& a, const FeaturePoint& b,
                          const KernelSpec& k) {
  TACE_REQUIRE(a.size() == b.size(), "kernel_eval: dimension mismatch");
  TACE_REQUIRE(k.bandwidth > 0.0, "kernel_eval: bandwidth must be positive");
  if (k.family == KernelFamily::gaussian) {
    const double d2 = (a - b).squaredNorm();
    return std::exp(-d2 / (2.0 * k.bandwidth * k.bandwidth));
  }
  const double d1 = (a - b).lpNorm<1>();
  return std::exp(-d1 / k.bandwidth);
}

namespace detail {

// Plain double sum over all index pairs. Identical loop order for the
// within- and cross-set sums so that identical inputs cancel exactly.
inline double kernel_sum(const TrajectoryFeatures& xs,
                         const TrajectoryFeatures& ys, const KernelSpec& k) {
  double s = 0.0;
  for (const auto& x : xs)
    for (const auto& y : ys) s += kernel_eval(x, y, k);
  return s;
}

inline double kernel_sum_offdiag(const TrajectoryFeatures& xs,
                                 const KernelSpec& k) {
  double s = 0.0;
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += kernel_eval(xs[i], xs[j], k);
  return s;
}

}  // namespace detail

// Squared MMD, V-statistic (diagonals included). Non-negative, exactly zero
// on identical point multisets; this is the estimator used for rewards.
inline double mmd2_biased(const TrajectoryFeatures& a,
                          const TrajectoryFeatures& b, const KernelSpec& k) {
  TACE_REQUIRE(!a.empty() && !b.empty(), "mmd2_biased: empty trajectory");
  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  const double t_aa = detail::kernel_sum(a, a, k) / (m * m);
  const double t_ab = detail::kernel_sum(a, b, k) / (m * n);
  const double t_bb = detail::kernel_sum(b, b, k) / (n * n);
  const double v = t_aa - 2.0 * t_ab + t_bb;
  return v < 0.0 ? 0.0 : v;
}

// Squared MMD, U-statistic (within-set diagonals excluded). May be negative;
// used for diagnostics and estimator cross-checks, not for rewards.
inline double mmd2_unbiased(const TrajectoryFeatures& a,
                            const TrajectoryFeatures& b, const KernelSpec& k) {
  TACE_REQUIRE(a.size() >= 2 && b.size() >= 2,
               "mmd2_unbiased: needs at least two points per side");
  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  const double t_aa = detail::kernel_sum_offdiag(a, k) / (m * (m - 1.0));
  const double t_ab = detail::kernel_sum(a, b, k) / (m * n);
  const double t_bb = detail::kernel_sum_offdiag(b, k) / (n * (n - 1.0));
  return t_aa - 2.0 * t_ab + t_bb;
}

inline double mmd2(const TrajectoryFeatures& a, const TrajectoryFeatures& b,
                   const KernelSpec& k, MmdEstimator est) {
  return est == MmdEstimator::biased ? mmd2_biased(a, b, k)
                                     : mmd2_unbiased(a, b, k);
}

// min over reference trajectories; absent when the memory is empty, in which
// case no constraint is active.
inline std::optional<double> traj_distance_to_memory(
    const TrajectoryFeatures& traj,
    const std::vector<TrajectoryFeatures>& memory, const KernelSpec& k,
    MmdEstimator est = MmdEstimator::biased) {
  if (memory.empty()) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ref : memory) best = std::min(best, mmd2(traj, ref, k, est));
  return best;
}

// Identity of a state-action occurrence: bit-equal feature bytes plus the
// action id. Occurrences with equal keys share one distance value.
inline std::string occurrence_key(const FeaturePoint& feat, int action) {
  std::string key(sizeof(int) + feat.size() * sizeof(double), '\0');
  std::memcpy(key.data(), &action, sizeof(int));
  std::memcpy(key.data() + sizeof(int), feat.data(),
              feat.size() * sizeof(double));
  return key;
}

// Mean trajectory distance over the batch trajectories that contain the key;
// a trajectory counts once no matter how often the key occurs in it.
// batch_keys[i] lists the occurrence keys of trajectory i, traj_distance[i]
// is that trajectory's distance to memory.
inline double pair_distance(const std::string& key,
                            const std::vector<std::vector<std::string>>& batch_keys,
                            const std::vector<double>& traj_distance) {
  TACE_REQUIRE(batch_keys.size() == traj_distance.size(),
               "pair_distance: batch annotation size mismatch");
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < batch_keys.size(); ++i) {
    if (std::find(batch_keys[i].begin(), batch_keys[i].end(), key) !=
        batch_keys[i].end()) {
      sum += traj_distance[i];
      ++count;
    }
  }
  TACE_REQUIRE(count > 0, "pair_distance: occurrence not present in batch");
  return sum / count;
}

// Batch version of pair_distance: one value per occurrence, grouped by key.
inline std::vector<std::vector<double>> per_occurrence_distances(
    const std::vector<std::vector<std::string>>& batch_keys,
    const std::vector<double>& traj_distance) {
  TACE_REQUIRE(batch_keys.size() == traj_distance.size(),
               "per_occurrence_distances: batch annotation size mismatch");
  struct Group {
    double sum = 0.0;
    int count = 0;
    int last_traj = -1;
  };
  std::unordered_map<std::string, Group> groups;
  for (std::size_t i = 0; i < batch_keys.size(); ++i) {
    for (const auto& key : batch_keys[i]) {
      auto& g = groups[key];
      if (g.last_traj != static_cast<int>(i)) {
        g.sum += traj_distance[i];
        g.count += 1;
        g.last_traj = static_cast<int>(i);
      }
    }
  }
  std::vector<std::vector<double>> out(batch_keys.size());
  for (std::size_t i = 0; i < batch_keys.size(); ++i) {
    out[i].reserve(batch_keys[i].size());
    for (const auto& key : batch_keys[i]) {
      const auto& g = groups.at(key);
      out[i].push_back(g.sum / g.count);
    }
  }
  return out;
}

struct DistanceBatch {
  std::vector<double> raw;
  std::vector<double> normalized;
  double mean = 0.0;
  double stddev = 0.0;
  bool degenerate = false;  // zero-variance guard fired
};

constexpr double kDegenerateStd = 1e-8;

// Per-batch standardization of the raw distances (population statistics).
// A zero-variance batch maps to all-zero normalized values with the flag set.
inline DistanceBatch normalize_distances(const std::vector<double>& raw) {
  TACE_REQUIRE(!raw.empty(), "normalize_distances: empty distance set");
  DistanceBatch out;
  out.raw = raw;
  const double n = static_cast<double>(raw.size());
  double mean = 0.0;
  for (double d : raw) mean += d;
  mean /= n;
  double var = 0.0;
  for (double d : raw) var += (d - mean) * (d - mean);
  var /= n;
  out.mean = mean;
  out.stddev = std::sqrt(var);
  out.normalized.resize(raw.size());
  if (out.stddev < kDegenerateStd) {
    out.degenerate = true;
    std::fill(out.normalized.begin(), out.normalized.end(), 0.0);
  } else {
    for (std::size_t i = 0; i < raw.size(); ++i)
      out.normalized[i] = (raw[i] - mean) / out.stddev;
  }
  return out;
}

// Clipped distance reward: zero inside the feasible region, linear penalty
// below the boundary. Never positive.
inline double intrinsic_reward(double normalized_distance, double delta) {
  return std::min(normalized_distance - delta, 0.0);
}

// Median pairwise distance between all given feature points, in the metric
// of the kernel family. Falls back to 1 when every point coincides.
inline double median_heuristic_bandwidth(
    const std::vector<const TrajectoryFeatures*>& sets, KernelFamily family) {
  std::vector<const FeaturePoint*> pts;
  for (const auto* s : sets)
    for (const auto& p : *s) pts.push_back(&p);
  const std::size_t n = pts.size();
  if (n < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dists.push_back(family == KernelFamily::gaussian
                          ? (*pts[i] - *pts[j]).norm()
                          : (*pts[i] - *pts[j]).lpNorm<1>());
    }
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  const double med = dists[mid];
  return med > 1e-12 ? med : 1.0;
}

}  // namespace tace
