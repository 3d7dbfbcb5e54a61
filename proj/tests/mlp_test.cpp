#include "tace/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "tace/rng.hpp"

using namespace tace;

namespace {

// Straight-line matrix arithmetic, independent of Mlp internals.
Vec oracle_forward(const Mlp& net, const Vec& x) {
  Vec a = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Vec z(net.weights[l].rows());
    for (int r = 0; r < net.weights[l].rows(); ++r) {
      double acc = net.biases[l][r];
      for (int c = 0; c < net.weights[l].cols(); ++c)
        acc += net.weights[l](r, c) * a[c];
      z[r] = acc;
    }
    if (l + 1 < net.weights.size())
      for (int r = 0; r < z.size(); ++r) z[r] = std::tanh(z[r]);
    a = z;
  }
  return a;
}

double scalar_objective(const Mlp& net, const Vec& x, const Vec& upstream) {
  return oracle_forward(net, x).dot(upstream);
}

// Central finite differences of the scalar objective against every
// parameter coordinate; returns the max relative error vs analytic grads.
double max_rel_error_fd(Mlp net, const Vec& x, const Vec& upstream) {
  MlpActivations acts;
  mlp_forward(net, x, &acts);
  MlpGrads grads = zero_grads(net);
  mlp_backward(net, acts, upstream, grads);

  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = scalar_objective(net, x, upstream);
    param = keep - h;
    const double dn = scalar_objective(net, x, upstream);
    param = keep;
    const double fd = (up - dn) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  };
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (int r = 0; r < net.weights[l].rows(); ++r)
      for (int c = 0; c < net.weights[l].cols(); ++c)
        check(net.weights[l](r, c), grads.weights[l](r, c));
    for (int r = 0; r < net.biases[l].size(); ++r)
      check(net.biases[l][r], grads.biases[l][r]);
  }
  return worst;
}

}  // namespace

TEST(Forward, ZeroWeightsYieldBias) {
  Rng rng(1);
  Mlp net = make_mlp({3, 4, 2}, rng);
  for (auto& w : net.weights) w.setZero();
  net.biases.back() << 0.25, -1.5;
  Vec x = rng.normal_vec(3);
  Vec y = mlp_forward(net, x);
  EXPECT_DOUBLE_EQ(y[0], 0.25);
  EXPECT_DOUBLE_EQ(y[1], -1.5);
}

TEST(Forward, SingleLinearIdentity) {
  Mlp net;
  net.weights.push_back(Mat::Identity(2, 2));
  net.biases.push_back(Vec::Zero(2));
  Vec x(2);
  x << 1.0, 2.0;
  Vec y = mlp_forward(net, x);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Forward, MatchesMatrixOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Mlp net = make_mlp({3, 8, 8, 2}, rng);
    Vec x = rng.normal_vec(3);
    Vec got = mlp_forward(net, x);
    Vec want = oracle_forward(net, x);
    for (int i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Forward, InputErrors) {
  Rng rng(3);
  Mlp net = make_mlp({3, 4, 2}, rng);
  EXPECT_THROW(mlp_forward(net, Vec::Zero(5)), InputError);
  Vec bad(3);
  bad << 1.0, std::nan(""), 0.0;
  EXPECT_THROW(mlp_forward(net, bad), InputError);
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(4);
  Mlp net = make_mlp({2, 5, 3}, rng);
  MlpActivations acts;
  mlp_forward(net, rng.normal_vec(2), &acts);
  MlpGrads grads = zero_grads(net);
  mlp_backward(net, acts, Vec::Zero(3), grads);
  for (const auto& w : grads.weights) EXPECT_DOUBLE_EQ(w.norm(), 0.0);
  for (const auto& b : grads.biases) EXPECT_DOUBLE_EQ(b.norm(), 0.0);
}

TEST(Backward, SingleLinearOuterProduct) {
  Rng rng(5);
  Mlp net;
  net.weights.push_back(rng.normal_mat(3, 2));
  net.biases.push_back(rng.normal_vec(3));
  Vec x = rng.normal_vec(2);
  Vec g = rng.normal_vec(3);
  MlpActivations acts;
  mlp_forward(net, x, &acts);
  MlpGrads grads = zero_grads(net);
  mlp_backward(net, acts, g, grads);
  Mat expect = g * x.transpose();
  EXPECT_NEAR((grads.weights[0] - expect).norm(), 0.0, 1e-12);
  EXPECT_NEAR((grads.biases[0] - g).norm(), 0.0, 1e-12);
}

TEST(Backward, FiniteDifferenceCheckTwentyConfigs) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int in = 1 + rng.uniform_int(4);
    const int hidden = 2 + rng.uniform_int(6);
    const int out = 1 + rng.uniform_int(4);
    Mlp net = make_mlp({in, hidden, hidden, out}, rng, 0.7);
    Vec x = rng.normal_vec(in);
    Vec upstream = rng.normal_vec(out);
    EXPECT_LT(max_rel_error_fd(net, x, upstream), 1e-4);
  }
}

TEST(Softmax, UniformLogits) {
  Vec logits = Vec::Zero(4);
  auto [logp, entropy] = log_prob_and_entropy(logits, 2);
  EXPECT_NEAR(logp, std::log(0.25), 1e-12);
  EXPECT_NEAR(entropy, std::log(4.0), 1e-12);
}

TEST(Softmax, NearDeterministicLimit) {
  Vec logits(4);
  logits << 10.0, 0.0, 0.0, 0.0;
  auto [logp, entropy] = log_prob_and_entropy(logits, 0);
  EXPECT_NEAR(std::exp(logp), 0.9998638187585689, 1e-12);
  EXPECT_GT(std::exp(logp), 0.999);
  EXPECT_LT(entropy, 0.01);
}

TEST(Softmax, MatchesHighPrecisionOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Vec logits = 5.0 * rng.normal_vec(6);
    // long-double recomputation
    long double denom = 0.0L;
    for (int i = 0; i < 6; ++i) denom += expl(static_cast<long double>(logits[i]));
    Vec p = softmax(logits);
    Vec lp = log_softmax(logits);
    for (int i = 0; i < 6; ++i) {
      const long double pi = expl(static_cast<long double>(logits[i])) / denom;
      EXPECT_NEAR(p[i], static_cast<double>(pi), 1e-10);
      EXPECT_NEAR(lp[i], static_cast<double>(logl(pi)), 1e-10);
    }
  }
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Vec logits = 3.0 * rng.normal_vec(5);
    Vec p = softmax(logits);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GT(p.minCoeff(), 0.0);
    Vec shifted = logits.array() + 123.5;
    EXPECT_NEAR((softmax(shifted) - p).lpNorm<Eigen::Infinity>(), 0.0, 1e-12);
  }
}

TEST(Softmax, InvalidActionThrows) {
  EXPECT_THROW(log_prob_and_entropy(Vec::Zero(4), 4), InputError);
  EXPECT_THROW(log_prob_and_entropy(Vec::Zero(4), -1), InputError);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Mlp net;
  net.weights.push_back(Mat::Zero(1, 1));
  net.biases.push_back(Vec::Zero(1));
  AdamState opt = make_adam(net, 0.1);
  MlpGrads g = zero_grads(net);
  g.weights[0](0, 0) = 2.5;
  adam_step(opt, net, g);
  EXPECT_NEAR(net.weights[0](0, 0), -0.1, 1e-7);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Rng rng(9);
  Mlp net = make_mlp({2, 4, 2}, rng);
  Mlp before = net;
  AdamState opt = make_adam(net, 0.1);
  adam_step(opt, net, zero_grads(net));
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    EXPECT_DOUBLE_EQ((net.weights[l] - before.weights[l]).norm(), 0.0);
}

TEST(Adam, QuadraticLossDecreases) {
  // minimize x^2 starting from x=1
  Mlp net;
  net.weights.push_back(Mat::Zero(1, 1));
  net.biases.push_back(Vec::Ones(1));
  AdamState opt = make_adam(net, 0.1);
  double prev = 1.0;
  for (int step = 0; step < 3; ++step) {
    MlpGrads g = zero_grads(net);
    g.biases[0][0] = 2.0 * net.biases[0][0];
    adam_step(opt, net, g);
    EXPECT_LT(std::abs(net.biases[0][0]), std::abs(prev));
    prev = net.biases[0][0];
  }
}

TEST(Adam, NonFiniteGradientThrows) {
  Rng rng(10);
  Mlp net = make_mlp({2, 3, 1}, rng);
  AdamState opt = make_adam(net, 0.1);
  MlpGrads g = zero_grads(net);
  g.weights[0](0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_step(opt, net, g), NumericError);
}

TEST(Policy, SampleIsDeterministicGivenSeed) {
  Rng init(42);
  CategoricalPolicy policy{make_mlp({2, 8, 4}, init, 0.01)};
  Vec obs(2);
  obs << 0.3, 0.7;
  Rng a(7), b(7);
  for (int i = 0; i < 20; ++i) {
    auto [act_a, lp_a] = policy.sample(obs, a);
    auto [act_b, lp_b] = policy.sample(obs, b);
    EXPECT_EQ(act_a, act_b);
    EXPECT_DOUBLE_EQ(lp_a, lp_b);
  }
}

TEST(Policy, InitIsDeterministicGivenSeed) {
  Rng a(5), b(5);
  Mlp m1 = make_mlp({2, 64, 64, 4}, a, 0.01);
  Mlp m2 = make_mlp({2, 64, 64, 4}, b, 0.01);
  for (std::size_t l = 0; l < m1.weights.size(); ++l)
    EXPECT_DOUBLE_EQ((m1.weights[l] - m2.weights[l]).norm(), 0.0);
}

TEST(Policy, ExploreFloorBoundsProbabilities) {
  Rng init(77);
  CategoricalPolicy policy{make_mlp({2, 8, 4}, init, 1.0), 0.1};
  Vec obs(2);
  obs << 0.2, -0.4;
  Vec l = policy.logits(obs);
  l[0] += 200.0;  // saturate the head
  Vec p = policy.action_probs(l);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  for (int a = 0; a < 4; ++a) EXPECT_GE(p[a], 0.1 / 4 - 1e-15);
  EXPECT_NEAR(policy.log_prob(l, 1), std::log(p[1]), 1e-15);
}

TEST(Policy, ZeroFloorMatchesPlainSoftmax) {
  Rng init(78);
  CategoricalPolicy policy{make_mlp({2, 8, 4}, init, 0.5)};
  Vec obs(2);
  obs << 0.1, 0.9;
  const Vec l = policy.logits(obs);
  EXPECT_DOUBLE_EQ(policy.log_prob(l, 2), log_softmax(l)[2]);
  EXPECT_NEAR((policy.action_probs(l) - softmax(l)).lpNorm<Eigen::Infinity>(),
              0.0, 1e-15);
}
