#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "tace/common.hpp"
#include "tace/rng.hpp"

namespace tace {

// Fully connected net: tanh hidden layers, linear output. Gradients are
// hand-written; finite-difference checks live in the tests.
struct Mlp {
  std::vector<Mat> weights;  // weights[l] maps layer l-1 activations up
  std::vector<Vec> biases;

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  std::size_t layer_count() const { return weights.size(); }
};

struct MlpGrads {
  std::vector<Mat> weights;
  std::vector<Vec> biases;
};

inline MlpGrads zero_grads(const Mlp& net) {
  MlpGrads g;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    g.weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Vec::Zero(net.biases[l].size()));
  }
  return g;
}

inline void scale_grads(MlpGrads& g, double s) {
  for (auto& w : g.weights) w *= s;
  for (auto& b : g.biases) b *= s;
}

inline void add_grads(MlpGrads& acc, const MlpGrads& g, double s = 1.0) {
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    acc.weights[l] += s * g.weights[l];
    acc.biases[l] += s * g.biases[l];
  }
}

// Semi-orthogonal init scaled by gain; biases start at zero.
inline Mat orthogonal_matrix(int rows, int cols, double gain, Rng& rng) {
  Mat m = rng.normal_mat(std::max(rows, cols), std::min(rows, cols));
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ() * Mat::Identity(std::max(rows, cols),
                                            std::min(rows, cols));
  Mat r = qr.matrixQR().topRows(std::min(rows, cols));
  for (int c = 0; c < q.cols(); ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  if (rows < cols) return gain * q.transpose();
  return gain * q;
}

// dims = {input, hidden..., output}; hidden layers use gain sqrt(2),
// the output layer uses output_gain (0.01 keeps a policy near uniform).
inline Mlp make_mlp(const std::vector<int>& dims, Rng& rng,
                    double output_gain = 1.0) {
  TACE_REQUIRE(dims.size() >= 2, "make_mlp: need at least input and output");
  Mlp net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = (l + 2 == dims.size());
    const double gain = last ? output_gain : std::sqrt(2.0);
    net.weights.push_back(orthogonal_matrix(dims[l + 1], dims[l], gain, rng));
    net.biases.push_back(Vec::Zero(dims[l + 1]));
  }
  return net;
}

// Post-activation values per layer, kept for the backward pass.
struct MlpActivations {
  Vec input;
  std::vector<Vec> post;
};

inline Vec mlp_forward(const Mlp& net, const Vec& x,
                       MlpActivations* acts = nullptr) {
  TACE_REQUIRE(x.size() == net.input_dim(), "mlp_forward: input dim mismatch");
  TACE_REQUIRE(x.allFinite(), "mlp_forward: non-finite input");
  if (acts) {
    acts->input = x;
    acts->post.clear();
  }
  Vec a = x;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Vec z = net.weights[l] * a + net.biases[l];
    if (l + 1 < net.layer_count()) z = z.array().tanh();
    if (acts) acts->post.push_back(z);
    a = std::move(z);
  }
  return a;
}

// Accumulates d(output . upstream)/d(params) into grads.
inline void mlp_backward(const Mlp& net, const MlpActivations& acts,
                         const Vec& upstream, MlpGrads& grads) {
  TACE_REQUIRE(upstream.size() == net.output_dim(),
               "mlp_backward: upstream dim mismatch");
  const int layers = static_cast<int>(net.layer_count());
  Vec delta = upstream;
  for (int l = layers - 1; l >= 0; --l) {
    const Vec& below = (l == 0) ? acts.input : acts.post[l - 1];
    grads.weights[l] += delta * below.transpose();
    grads.biases[l] += delta;
    if (l > 0) {
      delta = net.weights[l].transpose() * delta;
      delta.array() *= 1.0 - acts.post[l - 1].array().square();
    }
  }
}

inline Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

inline Vec log_softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  const double lse = std::log((logits.array() - m).exp().sum()) + m;
  return logits.array() - lse;
}

// (log pi(a|s), entropy of pi(.|s)) from raw logits.
inline std::pair<double, double> log_prob_and_entropy(const Vec& logits,
                                                      int action) {
  TACE_REQUIRE(action >= 0 && action < logits.size(),
               "log_prob_and_entropy: invalid action index");
  const Vec logp = log_softmax(logits);
  const Vec p = logp.array().exp();
  const double entropy = -(p.array() * logp.array()).sum();
  return {logp[action], entropy};
}

// Categorical policy over a discrete action set, logits from an Mlp.
// A nonzero exploration floor mixes a uniform component into the head:
// pi(a|s) = (1 - floor) softmax(l)[a] + floor / |A|, which keeps every
// action probability bounded away from zero no matter how peaked the
// logits become.
struct CategoricalPolicy {
  Mlp net;
  double explore_floor = 0.0;

  int action_count() const { return net.output_dim(); }

  Vec logits(const Vec& obs, MlpActivations* acts = nullptr) const {
    return mlp_forward(net, obs, acts);
  }

  Vec action_probs(const Vec& l) const {
    Vec p = softmax(l);
    if (explore_floor > 0.0) {
      p = (1.0 - explore_floor) * p;
      p.array() += explore_floor / p.size();
    }
    return p;
  }

  double log_prob(const Vec& l, int action) const {
    if (explore_floor <= 0.0) return log_softmax(l)[action];
    return std::log(action_probs(l)[action]);
  }

  // Returns (action, log_prob) sampled from pi(.|obs).
  std::pair<int, double> sample(const Vec& obs, Rng& rng) const {
    const Vec l = logits(obs);
    const Vec p = action_probs(l);
    const int a = rng.categorical(p);
    return {a, explore_floor > 0.0 ? std::log(p[a]) : log_softmax(l)[a]};
  }
};

// First-order adaptive-moment optimizer with bias correction.
struct AdamState {
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam(const Mlp& net, double lr) {
  AdamState s;
  s.lr = lr;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    s.m_w.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.v_w.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.m_b.push_back(Vec::Zero(net.biases[l].size()));
    s.v_b.push_back(Vec::Zero(net.biases[l].size()));
  }
  return s;
}

// Descent step: callers hand in loss gradients.
inline void adam_step(AdamState& s, Mlp& net, const MlpGrads& grads) {
  for (const auto& g : grads.weights)
    TACE_NUMERIC(g.allFinite(), "adam_step: non-finite weight gradient");
  for (const auto& g : grads.biases)
    TACE_NUMERIC(g.allFinite(), "adam_step: non-finite bias gradient");
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    s.m_w[l] = s.beta1 * s.m_w[l] + (1.0 - s.beta1) * grads.weights[l];
    s.v_w[l] = s.beta2 * s.v_w[l].array() +
               (1.0 - s.beta2) * grads.weights[l].array().square();
    net.weights[l].array() -= s.lr * (s.m_w[l].array() / bc1) /
                              ((s.v_w[l].array() / bc2).sqrt() + s.eps);
    s.m_b[l] = s.beta1 * s.m_b[l] + (1.0 - s.beta1) * grads.biases[l];
    s.v_b[l] = s.beta2 * s.v_b[l].array() +
               (1.0 - s.beta2) * grads.biases[l].array().square();
    net.biases[l].array() -= s.lr * (s.m_b[l].array() / bc1) /
                             ((s.v_b[l].array() / bc2).sqrt() + s.eps);
  }
}

}  // namespace tace
