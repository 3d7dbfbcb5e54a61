#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Thrown on contract violations at module boundaries (bad dimensions,
// empty inputs, invalid action ids, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when training produces values that cannot be recovered from
// (non-finite losses or gradients).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define TACE_REQUIRE(cond, msg) \
  do {                          \
    if (!(cond)) throw ::tace::InputError(msg); \
  } while (0)

#define TACE_NUMERIC(cond, msg) \
  do {                          \
    if (!(cond)) throw ::tace::NumericError(msg); \
  } while (0)

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace tace
