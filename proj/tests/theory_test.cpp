#include "tace/theory.hpp"

#include <gtest/gtest.h>

#include "tace/rng.hpp"

using namespace tace;

namespace {

TabularMDP two_state_cycle(double gamma) {
  TabularMDP mdp;
  mdp.states = 2;
  mdp.actions = 1;
  mdp.gamma = gamma;
  Mat p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  mdp.transition = {p};
  mdp.reward_e = Mat::Zero(2, 1);
  mdp.reward_i = Mat::Zero(2, 1);
  mdp.start = Vec(2);
  mdp.start << 1.0, 0.0;
  return mdp;
}

TabularPolicy single_action_policy(int states) {
  TabularPolicy pi;
  pi.probs = Mat::Ones(states, 1);
  return pi;
}

}  // namespace

TEST(Visitation, SingleAbsorbingState) {
  TabularMDP mdp;
  mdp.states = 1;
  mdp.actions = 1;
  mdp.gamma = 0.7;
  mdp.transition = {Mat::Ones(1, 1)};
  mdp.reward_e = Mat::Zero(1, 1);
  mdp.reward_i = Mat::Zero(1, 1);
  mdp.start = Vec::Ones(1);
  mdp.validate();
  Vec d = exact_visitation(mdp, single_action_policy(1));
  EXPECT_NEAR(d[0], 1.0, 1e-12);
}

TEST(Visitation, TwoStateCycleHandOracle) {
  // linear system solved by hand: d = (2/3, 1/3)
  TabularMDP mdp = two_state_cycle(0.5);
  Vec d = exact_visitation(mdp, single_action_policy(2));
  EXPECT_NEAR(d[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(d[1], 1.0 / 3.0, 1e-12);
}

TEST(Visitation, MatchesTruncatedPowerSeries) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    TabularMDP mdp = random_mdp(rng, 6, 3, 0.9);
    TabularPolicy pi = random_policy(rng, 6, 3);
    Vec d = exact_visitation(mdp, pi);

    Mat p_pi = Mat::Zero(6, 6);
    for (int a = 0; a < 3; ++a)
      p_pi += pi.probs.col(a).asDiagonal() * mdp.transition[a];
    Vec rho = mdp.start;
    Vec series = Vec::Zero(6);
    double scale = 1.0;
    for (int t = 0; t <= 200; ++t) {
      series += scale * rho;
      rho = p_pi.transpose() * rho;
      scale *= mdp.gamma;
    }
    series *= (1.0 - mdp.gamma);
    EXPECT_LT((series - d).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_GE(d.minCoeff(), 0.0);
    EXPECT_NEAR(d.sum(), 1.0, 1e-10);
  }
}

TEST(Objective, ZeroIntrinsicMakesSigmaIrrelevant) {
  Rng rng(2);
  TabularMDP mdp = random_mdp(rng, 4, 2, 0.8);
  mdp.reward_i.setZero();
  TabularPolicy pi = random_policy(rng, 4, 2);
  const double j = exact_return(mdp, pi, mdp.reward_e);
  EXPECT_NEAR(exact_objective(mdp, pi, 0.0), j, 1e-12);
  EXPECT_NEAR(exact_objective(mdp, pi, 5.0), j, 1e-12);
}

TEST(Objective, SingleStateGeometricSeries) {
  TabularMDP mdp;
  mdp.states = 1;
  mdp.actions = 1;
  mdp.gamma = 0.9;
  mdp.transition = {Mat::Ones(1, 1)};
  mdp.reward_e = Mat::Ones(1, 1) * 0.4;
  mdp.reward_i = Mat::Zero(1, 1);
  mdp.start = Vec::Ones(1);
  EXPECT_NEAR(exact_objective(mdp, single_action_policy(1), 0.0),
              0.4 / (1.0 - 0.9), 1e-12);
}

TEST(Objective, VisitationIdentityRoute) {
  // second algebraic route: J = E_{d^pi}[r_pi] / (1 - gamma)
  Rng rng(3);
  TabularMDP mdp = random_mdp(rng, 5, 3, 0.85);
  TabularPolicy pi = random_policy(rng, 5, 3);
  const double sigma = 0.7;
  const Mat r = mdp.combined_reward(sigma);
  const Vec d = exact_visitation(mdp, pi);
  double j_route2 = 0.0;
  for (int s = 0; s < 5; ++s) j_route2 += d[s] * pi.probs.row(s).dot(r.row(s));
  j_route2 /= (1.0 - mdp.gamma);
  EXPECT_NEAR(exact_objective(mdp, pi, sigma), j_route2, 1e-10);
}

TEST(Objective, MatchesMonteCarloWithinThreeSigma) {
  Rng rng(4);
  TabularMDP mdp = random_mdp(rng, 5, 2, 0.9);
  TabularPolicy pi = random_policy(rng, 5, 2);
  const double sigma = 0.5;
  const double exact = exact_objective(mdp, pi, sigma);
  const Mat r = mdp.combined_reward(sigma);

  const int episodes = 2000;
  const int horizon = 500;  // gamma^500 ~ 1e-23, truncation negligible
  std::vector<double> returns(episodes);
  Rng sim(5);
  for (int e = 0; e < episodes; ++e) {
    int s = sim.categorical(mdp.start);
    double g = 0.0, scale = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = sim.categorical(pi.probs.row(s).transpose());
      g += scale * r(s, a);
      scale *= mdp.gamma;
      s = sim.categorical(mdp.transition[a].row(s).transpose());
    }
    returns[e] = g;
  }
  double mean = 0.0;
  for (double g : returns) mean += g;
  mean /= episodes;
  double var = 0.0;
  for (double g : returns) var += (g - mean) * (g - mean);
  var /= (episodes - 1);
  const double sem = std::sqrt(var / episodes);
  EXPECT_NEAR(exact, mean, 3.0 * sem);
}

TEST(Theorem1, IdenticalPoliciesCollapseToZero) {
  Rng rng(6);
  TabularMDP mdp = random_mdp(rng, 5, 3, 0.9);
  TabularPolicy pi = random_policy(rng, 5, 3);
  const Vec f = combined_value_function(mdp, pi, 0.6);
  BoundReport rep = check_theorem1(mdp, pi, pi, 0.6, f);
  EXPECT_LE(std::abs(rep.d_plus), 1e-10);
  EXPECT_LE(std::abs(rep.d_minus), 1e-10);
  EXPECT_LE(std::abs(rep.delta_l), 1e-10);
  EXPECT_TRUE(rep.holds);
}

TEST(Theorem1, SigmaZeroDegeneratesToPlainReturnBound) {
  Rng rng(7);
  TabularMDP mdp = random_mdp(rng, 4, 2, 0.8);
  TabularPolicy pi = random_policy(rng, 4, 2);
  TabularPolicy pi_new = perturbed_policy(rng, pi, 0.2);
  BoundReport rep = check_theorem1(mdp, pi, pi_new, 0.0, Vec::Zero(4));
  const double dj = exact_return(mdp, pi_new, mdp.reward_e) -
                    exact_return(mdp, pi, mdp.reward_e);
  EXPECT_NEAR(rep.delta_l, dj, 1e-12);
  EXPECT_TRUE(rep.holds);
}

TEST(Theorem1, HoldsOnRandomInstances) {
  Rng rng(8);
  int checked = 0;
  for (double gamma : {0.5, 0.9, 0.99}) {
    for (int trial = 0; trial < 60; ++trial) {
      const int s = 2 + rng.uniform_int(6);
      const int a = 2 + rng.uniform_int(3);
      TabularMDP mdp = random_mdp(rng, s, a, gamma);
      TabularPolicy pi = random_policy(rng, s, a);
      TabularPolicy pi_new = perturbed_policy(rng, pi, rng.uniform());
      const double sigma = rng.uniform(0.0, 2.0);
      // zero f and the combined value function of pi
      BoundReport rep0 = check_theorem1(mdp, pi, pi_new, sigma, Vec::Zero(s));
      BoundReport repv = check_theorem1(mdp, pi, pi_new, sigma,
                                        combined_value_function(mdp, pi, sigma));
      EXPECT_TRUE(rep0.holds) << "zero-f instance failed at gamma " << gamma;
      EXPECT_TRUE(repv.holds) << "value-f instance failed at gamma " << gamma;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 180);
}

TEST(Corollary1, TightAtEqualPolicies) {
  Rng rng(9);
  TabularMDP mdp = random_mdp(rng, 4, 3, 0.9);
  TabularPolicy pi = random_policy(rng, 4, 3);
  Corollary1Report rep = check_corollary1(mdp, pi, pi, 0.4);
  EXPECT_LE(std::abs(rep.delta_l), 1e-10);
  EXPECT_LE(std::abs(rep.rhs), 1e-10);
  EXPECT_TRUE(rep.holds);
}

TEST(Corollary1, HoldsOnRandomInstances) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const int s = 2 + rng.uniform_int(6);
    const int a = 2 + rng.uniform_int(3);
    TabularMDP mdp = random_mdp(rng, s, a, 0.9);
    TabularPolicy pi = random_policy(rng, s, a);
    TabularPolicy pi_new = perturbed_policy(rng, pi, rng.uniform());
    Corollary1Report rep =
        check_corollary1(mdp, pi, pi_new, rng.uniform(0.0, 2.0));
    EXPECT_TRUE(rep.holds);
  }
}

TEST(Corollary1, DeterministicTwoStateHandComputation) {
  // two states, two actions; action 0 stays, action 1 swaps; rewards
  // depend only on the action. pi always stays, pi' always swaps.
  TabularMDP mdp;
  mdp.states = 2;
  mdp.actions = 2;
  mdp.gamma = 0.5;
  Mat stay = Mat::Identity(2, 2);
  Mat swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  mdp.transition = {stay, swap};
  mdp.reward_e = Mat(2, 2);
  mdp.reward_e << 1.0, 0.0, 1.0, 0.0;  // staying pays 1, swapping pays 0
  mdp.reward_i = Mat::Zero(2, 2);
  mdp.start = Vec(2);
  mdp.start << 1.0, 0.0;

  TabularPolicy stay_pi, swap_pi;
  stay_pi.probs = Mat(2, 2);
  stay_pi.probs << 1.0, 0.0, 1.0, 0.0;
  swap_pi.probs = Mat(2, 2);
  swap_pi.probs << 0.0, 1.0, 0.0, 1.0;

  // Hand computation: V_pi = 1/(1-1/2) = 2 everywhere; Q(s,stay) = 1 + .5*2
  // = 2, Q(s,swap) = 0 + .5*2 = 1; A(stay) = 0, A(swap) = -1.
  // eps = |E_{a~pi'}A| = 1. d^pi = (1, 0) (start state absorbs under stay).
  // TV per state = 1. RHS = 1/(1-g) * (-1 - 2*0.5*1/(0.5) * 1)
  //              = 2 * (-1 - 2) = -6.
  Corollary1Report rep = check_corollary1(mdp, stay_pi, swap_pi, 0.0);
  EXPECT_NEAR(rep.eps, 1.0, 1e-10);
  EXPECT_NEAR(rep.rhs, -6.0, 1e-10);
  // delta_l = 0 - 2 = -2 >= -6
  EXPECT_NEAR(rep.delta_l, -2.0, 1e-10);
  EXPECT_TRUE(rep.holds);
}

TEST(Lemma3, HoldsOnRandomInstances) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int s = 2 + rng.uniform_int(6);
    const int a = 2 + rng.uniform_int(3);
    TabularMDP mdp = random_mdp(rng, s, a, 0.9);
    TabularPolicy pi = random_policy(rng, s, a);
    TabularPolicy pi_new = perturbed_policy(rng, pi, rng.uniform());
    Lemma3Report rep = check_lemma3(mdp, pi, pi_new);
    EXPECT_TRUE(rep.holds);
  }
}

TEST(TvKl, PinskersInequalityOnRandomPairs) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + rng.uniform_int(6);
    Vec p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = 0.02 + rng.uniform();
      q[i] = 0.02 + rng.uniform();
      sp += p[i];
      sq += q[i];
    }
    p /= sp;
    q /= sq;
    EXPECT_LE(tv_distance(p, q), std::sqrt(kl_divergence(p, q) / 2.0) + 1e-12);
  }
}

TEST(SigmaBound, DegenerateThresholdIsZero) {
  EXPECT_NEAR(sigma_lower_bound(0.0, 0.3, 0.0, 0.0, 0.9, 0.5), 0.0, 1e-12);
}

TEST(SigmaBound, DirectSubstitution) {
  // (1-g)Delta = 0.1, sqrt(2 eta) g eps/(1-g) = 0.2*0.9*0.5/0.1 = 0.9
  // appendix form: (0.1 - 0.05 + 0.9)/0.2 = 4.75
  SigmaBoundReport rep =
      sigma_lower_bound_report(0.05, 0.2, 0.02, 1.0, 0.9, 0.5);
  EXPECT_NEAR(rep.bound, 4.75, 1e-12);
  EXPECT_NEAR(rep.main_text_variant, (0.1 - 0.05 - 0.9) / 0.2, 1e-12);
  EXPECT_FALSE(rep.positivity_condition);
}

TEST(SigmaBound, NonPositiveIntrinsicAdvantageRejected) {
  EXPECT_THROW(sigma_lower_bound(0.0, 0.0, 0.1, 1.0, 0.9, 0.5), InputError);
  EXPECT_THROW(sigma_lower_bound(0.0, -0.2, 0.1, 1.0, 0.9, 0.5), InputError);
}

// Instantiated guarantee: whenever the mean intrinsic advantage is positive
// and sigma matches the bound computed from the instance's own statistics,
// the exact improvement reaches the threshold.
TEST(SigmaBound, GuaranteeHoldsOnMatchingInstances) {
  Rng rng(13);
  int verified = 0;
  for (int trial = 0; trial < 400 && verified < 25; ++trial) {
    const int s = 2 + rng.uniform_int(4);
    const int a = 2 + rng.uniform_int(3);
    TabularMDP mdp = random_mdp(rng, s, a, 0.8);
    TabularPolicy pi = random_policy(rng, s, a);
    TabularPolicy pi_new = perturbed_policy(rng, pi, 0.3 * rng.uniform());
    const double sigma = rng.uniform(0.2, 1.5);

    const Vec d_pi = exact_visitation(mdp, pi);
    const Mat q_e = exact_q_values(mdp, pi, mdp.reward_e);
    const Vec v_e = exact_values(mdp, pi, mdp.reward_e);
    const Mat q_i = exact_q_values(mdp, pi, mdp.reward_i);
    const Vec v_i = exact_values(mdp, pi, mdp.reward_i);
    const Mat r_tot = mdp.combined_reward(sigma);
    const Mat q_tot = exact_q_values(mdp, pi, r_tot);
    const Vec v_tot = exact_values(mdp, pi, r_tot);

    double a_e_mean = 0.0, a_i_mean = 0.0, eta = 0.0, eps = 0.0;
    for (int st = 0; st < s; ++st) {
      double ae = 0.0, ai = 0.0, atot = 0.0;
      for (int ac = 0; ac < a; ++ac) {
        ae += pi_new.probs(st, ac) * (q_e(st, ac) - v_e[st]);
        ai += pi_new.probs(st, ac) * (q_i(st, ac) - v_i[st]);
        atot += pi_new.probs(st, ac) * (q_tot(st, ac) - v_tot[st]);
      }
      a_e_mean += d_pi[st] * ae;
      a_i_mean += d_pi[st] * ai;
      eta += d_pi[st] * kl_divergence(pi_new.probs.row(st).transpose(),
                                      pi.probs.row(st).transpose());
      eps = std::max(eps, std::abs(atot));
    }
    if (a_i_mean <= 1e-4) continue;

    // the largest threshold this sigma still guarantees
    const double divergence_term =
        std::sqrt(2.0 * eta) * mdp.gamma * eps / (1.0 - mdp.gamma);
    const double delta_star =
        (sigma * a_i_mean + a_e_mean - divergence_term) / (1.0 - mdp.gamma);

    // round trip through the bound formula
    EXPECT_NEAR(sigma_lower_bound(a_e_mean, a_i_mean, eta, delta_star,
                                  mdp.gamma, eps),
                sigma, 1e-9);

    const double delta_l =
        exact_objective(mdp, pi_new, sigma) - exact_objective(mdp, pi, sigma);
    EXPECT_GE(delta_l, delta_star - 1e-9);
    ++verified;
  }
  EXPECT_GE(verified, 25) << "not enough instances with positive A_i mean";
}
