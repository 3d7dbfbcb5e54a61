#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tace/common.hpp"
#include "tace/rng.hpp"

namespace tace {

// Exactly solvable MDP for the performance-bound suite. The intrinsic
// reward is supplied directly as a non-positive table; the bounds hold for
// any such table, which keeps the checks free of estimator noise.
struct TabularMDP {
  int states = 0;
  int actions = 0;
  std::vector<Mat> transition;  // transition[a](s, s') = P(s' | s, a)
  Mat reward_e;                 // states x actions
  Mat reward_i;                 // states x actions, <= 0
  Vec start;                    // initial distribution
  double gamma = 0.9;

  void validate() const {
    TACE_REQUIRE(states >= 1 && actions >= 1, "TabularMDP: empty spaces");
    TACE_REQUIRE(gamma >= 0.0 && gamma < 1.0, "TabularMDP: gamma in [0,1)");
    TACE_REQUIRE(static_cast<int>(transition.size()) == actions,
                 "TabularMDP: transition tensor arity");
    for (const auto& p : transition) {
      TACE_REQUIRE(p.rows() == states && p.cols() == states,
                   "TabularMDP: transition shape");
      for (int s = 0; s < states; ++s)
        TACE_REQUIRE(std::abs(p.row(s).sum() - 1.0) < 1e-12,
                     "TabularMDP: transition rows must sum to 1");
    }
    TACE_REQUIRE(std::abs(start.sum() - 1.0) < 1e-12,
                 "TabularMDP: start distribution must sum to 1");
    TACE_REQUIRE(reward_i.maxCoeff() <= 0.0,
                 "TabularMDP: intrinsic rewards must be non-positive");
  }

  Mat combined_reward(double sigma) const {
    return reward_e + sigma * reward_i;
  }
};

struct TabularPolicy {
  Mat probs;  // states x actions, row-stochastic

  void validate() const {
    TACE_REQUIRE(probs.minCoeff() >= 0.0, "TabularPolicy: negative entry");
    for (int s = 0; s < probs.rows(); ++s)
      TACE_REQUIRE(std::abs(probs.row(s).sum() - 1.0) < 1e-10,
                   "TabularPolicy: rows must sum to 1");
  }
};

namespace detail {

inline Mat policy_transition(const TabularMDP& mdp, const TabularPolicy& pi) {
  Mat p = Mat::Zero(mdp.states, mdp.states);
  for (int a = 0; a < mdp.actions; ++a)
    p += pi.probs.col(a).asDiagonal() * mdp.transition[a];
  return p;
}

inline Vec policy_reward(const TabularPolicy& pi, const Mat& reward) {
  return (pi.probs.array() * reward.array()).rowwise().sum();
}

// Solve (I - gamma P) x = b with a residual check.
inline Vec discounted_solve(const Mat& p_pi, double gamma, const Vec& b) {
  const Mat lhs = Mat::Identity(p_pi.rows(), p_pi.rows()) - gamma * p_pi;
  const Vec x = lhs.partialPivLu().solve(b);
  const double residual = (lhs * x - b).lpNorm<Eigen::Infinity>();
  TACE_NUMERIC(residual <= 1e-10 * std::max(1.0, b.lpNorm<Eigen::Infinity>()),
               "discounted_solve: residual too large");
  return x;
}

}  // namespace detail

// d^pi = (1 - gamma) rho0^T (I - gamma P_pi)^{-1}, exactly.
inline Vec exact_visitation(const TabularMDP& mdp, const TabularPolicy& pi) {
  const Mat p_pi = detail::policy_transition(mdp, pi);
  const Vec d =
      (1.0 - mdp.gamma) *
      detail::discounted_solve(p_pi.transpose(), mdp.gamma, mdp.start);
  TACE_NUMERIC(std::abs(d.sum() - 1.0) < 1e-10,
               "exact_visitation: distribution does not normalize");
  return d;
}

// State values under an arbitrary reward table.
inline Vec exact_values(const TabularMDP& mdp, const TabularPolicy& pi,
                        const Mat& reward) {
  const Mat p_pi = detail::policy_transition(mdp, pi);
  return detail::discounted_solve(p_pi, mdp.gamma,
                                  detail::policy_reward(pi, reward));
}

inline Mat exact_q_values(const TabularMDP& mdp, const TabularPolicy& pi,
                          const Mat& reward) {
  const Vec v = exact_values(mdp, pi, reward);
  Mat q(mdp.states, mdp.actions);
  for (int a = 0; a < mdp.actions; ++a)
    q.col(a) = reward.col(a) + mdp.gamma * (mdp.transition[a] * v);
  return q;
}

inline double exact_return(const TabularMDP& mdp, const TabularPolicy& pi,
                           const Mat& reward) {
  return mdp.start.dot(exact_values(mdp, pi, reward));
}

// L(theta, sigma): discounted return of the combined reward R_e + sigma R_i.
inline double exact_objective(const TabularMDP& mdp, const TabularPolicy& pi,
                              double sigma) {
  return exact_return(mdp, pi, mdp.combined_reward(sigma));
}

inline double tv_distance(const Vec& p, const Vec& q) {
  return 0.5 * (p - q).lpNorm<1>();
}

inline double kl_divergence(const Vec& p, const Vec& q) {
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    TACE_REQUIRE(q[i] > 0.0, "kl_divergence: q must dominate p");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

struct BoundReport {
  double surrogate = 0.0;       // T_{pi,f}(pi')
  double eps_f = 0.0;           // max_s |E_{a~pi'} delta_f|
  double mean_tv = 0.0;         // E_{s~d^pi} TV(pi'||pi)[s]
  double d_plus = 0.0;
  double d_minus = 0.0;
  double delta_l = 0.0;         // L(pi', sigma) - L(pi, sigma)
  bool holds = false;
};

// Two-sided performance bound with an arbitrary state function f:
//   delta_f(s,a) = R(s,a) + gamma E[f(s')] - f(s),  R = R_e + sigma R_i
//   D+- = T/(1-gamma) +- 2 gamma eps_f / (1-gamma)^2 * E_{d^pi}[TV]
// and D+ >= L' - L >= D- must hold.
inline BoundReport check_theorem1(const TabularMDP& mdp,
                                  const TabularPolicy& pi,
                                  const TabularPolicy& pi_new, double sigma,
                                  const Vec& f) {
  const Mat r = mdp.combined_reward(sigma);
  Mat delta_f(mdp.states, mdp.actions);
  for (int a = 0; a < mdp.actions; ++a)
    delta_f.col(a) =
        r.col(a) + mdp.gamma * (mdp.transition[a] * f) - f;

  const Vec d_pi = exact_visitation(mdp, pi);

  BoundReport rep;
  for (int s = 0; s < mdp.states; ++s) {
    const double expect_new = pi_new.probs.row(s).dot(delta_f.row(s));
    rep.eps_f = std::max(rep.eps_f, std::abs(expect_new));
    const Vec diff = (pi_new.probs.row(s) - pi.probs.row(s)).transpose();
    rep.surrogate += d_pi[s] * diff.dot(delta_f.row(s).transpose());
    rep.mean_tv += d_pi[s] * 0.5 * diff.lpNorm<1>();
  }
  const double spread = 2.0 * mdp.gamma * rep.eps_f /
                        ((1.0 - mdp.gamma) * (1.0 - mdp.gamma)) * rep.mean_tv;
  rep.d_plus = rep.surrogate / (1.0 - mdp.gamma) + spread;
  rep.d_minus = rep.surrogate / (1.0 - mdp.gamma) - spread;
  rep.delta_l =
      exact_objective(mdp, pi_new, sigma) - exact_objective(mdp, pi, sigma);
  rep.holds = rep.d_plus + 1e-9 >= rep.delta_l && rep.delta_l >= rep.d_minus - 1e-9;
  return rep;
}

// The f = V special case: value function of pi under the combined reward.
inline Vec combined_value_function(const TabularMDP& mdp,
                                   const TabularPolicy& pi, double sigma) {
  return exact_values(mdp, pi, mdp.combined_reward(sigma));
}

struct Corollary1Report {
  double delta_l = 0.0;
  double rhs = 0.0;      // the advantage-based lower bound
  double eps = 0.0;      // max_s |E_{a~pi'} A(s,a)|
  bool holds = false;
};

// One-sided bound with the total-reward advantage:
//   L' - L >= 1/(1-gamma) E_{s~d^pi, a~pi'}[A(s,a) - 2 gamma eps/(1-gamma) TV[s]]
inline Corollary1Report check_corollary1(const TabularMDP& mdp,
                                         const TabularPolicy& pi,
                                         const TabularPolicy& pi_new,
                                         double sigma) {
  const Mat r = mdp.combined_reward(sigma);
  const Mat q = exact_q_values(mdp, pi, r);
  const Vec v = exact_values(mdp, pi, r);
  Mat adv = q;
  for (int a = 0; a < mdp.actions; ++a) adv.col(a) -= v;

  const Vec d_pi = exact_visitation(mdp, pi);
  Corollary1Report rep;
  for (int s = 0; s < mdp.states; ++s)
    rep.eps = std::max(rep.eps,
                       std::abs(pi_new.probs.row(s).dot(adv.row(s))));
  double accum = 0.0;
  for (int s = 0; s < mdp.states; ++s) {
    const double adv_term = pi_new.probs.row(s).dot(adv.row(s));
    const double tv = tv_distance(pi_new.probs.row(s).transpose(),
                                  pi.probs.row(s).transpose());
    accum += d_pi[s] *
             (adv_term - 2.0 * mdp.gamma * rep.eps / (1.0 - mdp.gamma) * tv);
  }
  rep.rhs = accum / (1.0 - mdp.gamma);
  rep.delta_l =
      exact_objective(mdp, pi_new, sigma) - exact_objective(mdp, pi, sigma);
  rep.holds = rep.delta_l >= rep.rhs - 1e-9;
  return rep;
}

struct Lemma3Report {
  double l1_gap = 0.0;   // || d^pi' - d^pi ||_1
  double bound = 0.0;    // 2 gamma / (1-gamma) E_{d^pi}[TV]
  bool holds = false;
};

inline Lemma3Report check_lemma3(const TabularMDP& mdp,
                                 const TabularPolicy& pi,
                                 const TabularPolicy& pi_new) {
  const Vec d_old = exact_visitation(mdp, pi);
  const Vec d_new = exact_visitation(mdp, pi_new);
  Lemma3Report rep;
  rep.l1_gap = (d_new - d_old).lpNorm<1>();
  double mean_tv = 0.0;
  for (int s = 0; s < mdp.states; ++s)
    mean_tv += d_old[s] * tv_distance(pi_new.probs.row(s).transpose(),
                                      pi.probs.row(s).transpose());
  rep.bound = 2.0 * mdp.gamma / (1.0 - mdp.gamma) * mean_tv;
  rep.holds = rep.l1_gap <= rep.bound + 1e-9;
  return rep;
}

struct SigmaBoundReport {
  double bound = 0.0;             // appendix form: + sqrt(2 eta) term
  double main_text_variant = 0.0; // printed form with the - sign
  bool positivity_condition = false;  // the corollary's stated side condition
};

// Lower bound on sigma that forces an improvement of at least Delta.
// The derivation's rearranged form carries + sqrt(2 eta) gamma eps/(1-gamma);
// the printed main-text form flips that sign, so both values are reported.
// Requires a strictly positive mean intrinsic advantage.
inline SigmaBoundReport sigma_lower_bound_report(double a_e_mean,
                                                 double a_i_mean, double eta,
                                                 double delta_threshold,
                                                 double gamma, double eps_pi) {
  TACE_REQUIRE(a_i_mean > 0.0,
               "sigma_lower_bound: mean intrinsic advantage must be positive");
  TACE_REQUIRE(eta >= 0.0, "sigma_lower_bound: eta must be non-negative");
  TACE_REQUIRE(gamma >= 0.0 && gamma < 1.0,
               "sigma_lower_bound: gamma in [0,1)");
  const double divergence_term =
      std::sqrt(2.0 * eta) * gamma * eps_pi / (1.0 - gamma);
  SigmaBoundReport rep;
  rep.bound = ((1.0 - gamma) * delta_threshold - a_e_mean + divergence_term) /
              a_i_mean;
  rep.main_text_variant =
      ((1.0 - gamma) * delta_threshold - a_e_mean - divergence_term) /
      a_i_mean;
  rep.positivity_condition =
      (1.0 - gamma) * delta_threshold - a_e_mean - divergence_term > 0.0;
  return rep;
}

inline double sigma_lower_bound(double a_e_mean, double a_i_mean, double eta,
                                double delta_threshold, double gamma,
                                double eps_pi) {
  return sigma_lower_bound_report(a_e_mean, a_i_mean, eta, delta_threshold,
                                  gamma, eps_pi)
      .bound;
}

// Uniformly random instance with strictly positive transition and policy
// probabilities (keeps every KL term finite).
inline TabularMDP random_mdp(Rng& rng, int states, int actions, double gamma) {
  TabularMDP mdp;
  mdp.states = states;
  mdp.actions = actions;
  mdp.gamma = gamma;
  for (int a = 0; a < actions; ++a) {
    Mat p(states, states);
    for (int s = 0; s < states; ++s) {
      double sum = 0.0;
      for (int t = 0; t < states; ++t) {
        p(s, t) = 0.05 + rng.uniform();
        sum += p(s, t);
      }
      p.row(s) /= sum;
    }
    mdp.transition.push_back(p);
  }
  mdp.reward_e = Mat::Zero(states, actions);
  mdp.reward_i = Mat::Zero(states, actions);
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a) {
      mdp.reward_e(s, a) = rng.uniform(-1.0, 1.0);
      mdp.reward_i(s, a) = -rng.uniform();
    }
  mdp.start = Vec(states);
  double sum = 0.0;
  for (int s = 0; s < states; ++s) {
    mdp.start[s] = 0.05 + rng.uniform();
    sum += mdp.start[s];
  }
  mdp.start /= sum;
  return mdp;
}

inline TabularPolicy random_policy(Rng& rng, int states, int actions) {
  TabularPolicy pi;
  pi.probs = Mat(states, actions);
  for (int s = 0; s < states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < actions; ++a) {
      pi.probs(s, a) = 0.05 + rng.uniform();
      sum += pi.probs(s, a);
    }
    pi.probs.row(s) /= sum;
  }
  return pi;
}

// A nearby policy (mixture toward another random policy); small
// perturbations keep the bounds informative rather than vacuous.
inline TabularPolicy perturbed_policy(Rng& rng, const TabularPolicy& pi,
                                      double mix) {
  TabularPolicy other =
      random_policy(rng, static_cast<int>(pi.probs.rows()),
                    static_cast<int>(pi.probs.cols()));
  TabularPolicy out;
  out.probs = (1.0 - mix) * pi.probs + mix * other.probs;
  return out;
}

}  // namespace tace
