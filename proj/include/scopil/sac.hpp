#pragma once

// Discrete soft actor-critic: twin critics with soft value targets, the
// entropy-regularized policy objective, entropy-coefficient adaptation and
// Polyak target averaging. Losses are templated on the scalar type so the
// same code serves float training and double gradient checks.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "scopil/env.hpp"
#include "scopil/mlp.hpp"

namespace scopil {

using net::Matrix;
using net::Vector;

/// 0.4 * ln|A|.
inline double default_target_entropy(int num_actions = kNumActions) { return 0.4 * std::log(static_cast<double>(num_actions)); }

template <typename T>
struct SacNets {
  net::MlpParams<T> policy;
  net::MlpParams<T> q1, q2;
  net::MlpParams<T> q1_target, q2_target;
  T log_alpha = T(0);
  T target_entropy = static_cast<T>(default_target_entropy());

  T alpha() const { return std::exp(log_alpha); }

  /// 8 -> hidden... -> 9 for the policy logits and each critic. Targets start
  /// as copies of their critics.
  static SacNets init(std::mt19937_64& rng, std::span<const int> hidden = std::array<int, 2>{32, 32},
                      T initial_alpha = T(1)) {
    std::vector<int> sizes{kStateDim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(kNumActions);
    SacNets n;
    n.policy = net::MlpParams<T>::init(sizes, rng);
    n.q1 = net::MlpParams<T>::init(sizes, rng);
    n.q2 = net::MlpParams<T>::init(sizes, rng);
    n.q1_target = n.q1;
    n.q2_target = n.q2;
    n.log_alpha = std::log(initial_alpha);
    return n;
  }

  template <typename U>
  SacNets<U> cast() const {
    SacNets<U> o;
    o.policy = policy.template cast<U>();
    o.q1 = q1.template cast<U>();
    o.q2 = q2.template cast<U>();
    o.q1_target = q1_target.template cast<U>();
    o.q2_target = q2_target.template cast<U>();
    o.log_alpha = static_cast<U>(log_alpha);
    o.target_entropy = static_cast<U>(target_entropy);
    return o;
  }
};

struct Transition {
  State s{};
  int a = 0;
  double r = 0.0;
  State s2{};
  bool done = false;
};

template <typename T>
struct ReplayBatch {
  Matrix<T> s;   // 8 x B
  std::vector<int> a;
  Vector<T> r;
  Matrix<T> s2;  // 8 x B
  Vector<T> done;

  Eigen::Index size() const { return s.cols(); }
};

template <typename T>
Matrix<T> states_to_matrix(std::span<const State> states) {
  Matrix<T> m(kStateDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t j = 0; j < states.size(); ++j)
    for (int i = 0; i < kStateDim; ++i) m(i, static_cast<Eigen::Index>(j)) = static_cast<T>(states[j][i]);
  return m;
}

template <typename T>
ReplayBatch<T> make_batch(std::span<const Transition> ts) {
  ReplayBatch<T> b;
  const auto n = static_cast<Eigen::Index>(ts.size());
  b.s.resize(kStateDim, n);
  b.s2.resize(kStateDim, n);
  b.r.resize(n);
  b.done.resize(n);
  b.a.resize(ts.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = ts[static_cast<std::size_t>(j)];
    for (int i = 0; i < kStateDim; ++i) {
      b.s(i, j) = static_cast<T>(t.s[i]);
      b.s2(i, j) = static_cast<T>(t.s2[i]);
    }
    b.a[static_cast<std::size_t>(j)] = t.a;
    b.r[j] = static_cast<T>(t.r);
    b.done[j] = t.done ? T(1) : T(0);
  }
  return b;
}

/// Fixed-capacity ring of transitions stored in single precision.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  Transition at(std::size_t i) const;

  /// Uniform with replacement. Requires size() >= n.
  ReplayBatch<float> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  using Row = std::array<float, kStateDim>;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::vector<Row> s_, s2_;
  std::vector<std::uint8_t> a_;
  std::vector<float> r_;
  std::vector<std::uint8_t> done_;
};

template <typename T>
struct PolicyEval {
  Matrix<T> logp;      // 9 x B
  Matrix<T> p;         // 9 x B
  Vector<T> entropy;   // B
};

template <typename T>
PolicyEval<T> policy_from_logits(const Matrix<T>& logits) {
  PolicyEval<T> e;
  e.logp = net::log_softmax(logits);
  e.p = e.logp.array().exp().matrix();
  e.entropy = -(e.p.array() * e.logp.array()).colwise().sum().transpose();
  return e;
}

template <typename T>
PolicyEval<T> evaluate_policy(const net::MlpParams<T>& policy, const Matrix<T>& states) {
  return policy_from_logits<T>(net::forward(policy, states));
}

template <typename T>
PolicyEval<T> evaluate_policy(const net::MlpParams<T>& policy, const Matrix<T>& states, net::ForwardCache<T>& cache) {
  return policy_from_logits<T>(net::forward(policy, states, cache));
}

/// d H / d logits for each column.
template <typename T>
Matrix<T> entropy_logit_grad(const PolicyEval<T>& e) {
  Matrix<T> g = e.logp;
  g.rowwise() += e.entropy.transpose();
  return -(e.p.array() * g.array()).matrix();
}

/// d (p^T q) / d logits for each column.
template <typename T>
Matrix<T> expectation_logit_grad(const PolicyEval<T>& e, const Matrix<T>& q) {
  const Vector<T> expected = (e.p.array() * q.array()).colwise().sum().transpose();
  Matrix<T> centred = q;
  centred.rowwise() -= expected.transpose();
  return (e.p.array() * centred.array()).matrix();
}

/// pi(s)^T min(Q_target1(s), Q_target2(s)) + alpha * H(pi(.|s)), per column.
template <typename T>
Vector<T> soft_value(const SacNets<T>& nets, const Matrix<T>& states) {
  const auto pe = evaluate_policy(nets.policy, states);
  const Matrix<T> qmin = net::forward(nets.q1_target, states).cwiseMin(net::forward(nets.q2_target, states));
  return (pe.p.array() * qmin.array()).colwise().sum().transpose() + nets.alpha() * pe.entropy.array();
}

template <typename T>
struct QLossResult {
  T loss1 = 0, loss2 = 0;
  net::GradientBundle<T> grad1, grad2;
  Vector<T> target;
};

/// Bellman targets r + gamma (1 - done) V(s'); treated as constants.
template <typename T>
Vector<T> q_targets(const SacNets<T>& nets, const ReplayBatch<T>& b, T gamma) {
  const Vector<T> v = soft_value(nets, b.s2);
  return b.r.array() + gamma * (T(1) - b.done.array()) * v.array();
}

template <typename T>
QLossResult<T> q_loss(const SacNets<T>& nets, const ReplayBatch<T>& b, T gamma) {
  if (b.size() == 0) throw std::invalid_argument("q_loss on an empty batch");
  QLossResult<T> out;
  out.target = q_targets(nets, b, gamma);
  const T inv_n = T(1) / static_cast<T>(b.size());
  auto critic = [&](const net::MlpParams<T>& q, T& loss, net::GradientBundle<T>& grad) {
    net::ForwardCache<T> cache;
    const Matrix<T> values = net::forward(q, b.s, cache);
    Matrix<T> tail = Matrix<T>::Zero(values.rows(), values.cols());
    T sum = 0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const int a = b.a[static_cast<std::size_t>(j)];
      const T err = values(a, j) - out.target[j];
      tail(a, j) = err;
      sum += err * err;
    }
    loss = T(0.5) * sum * inv_n;
    grad = net::backward(q, cache, tail);
  };
  critic(nets.q1, out.loss1, out.grad1);
  critic(nets.q2, out.loss2, out.grad2);
  return out;
}

template <typename T>
struct PolicyTermResult {
  T value = 0;           // mean of alpha*H + pi^T min Q (to be maximized)
  T mean_entropy = 0;
  net::GradientBundle<T> grad;  // gradient of -value
};

/// Entropy-regularized policy objective over replay states; critics and
/// alpha are constants.
template <typename T>
PolicyTermResult<T> sac_policy_term(const SacNets<T>& nets, const Matrix<T>& states) {
  net::ForwardCache<T> cache;
  const auto pe = evaluate_policy(nets.policy, states, cache);
  const Matrix<T> qmin = net::forward(nets.q1, states).cwiseMin(net::forward(nets.q2, states));
  const T alpha = nets.alpha();
  PolicyTermResult<T> out;
  const Vector<T> per = alpha * pe.entropy.array() + (pe.p.array() * qmin.array()).colwise().sum().transpose();
  out.value = per.mean();
  out.mean_entropy = pe.entropy.mean();
  const Matrix<T> tail = -(alpha * entropy_logit_grad(pe) + expectation_logit_grad(pe, qmin));
  out.grad = net::backward(nets.policy, cache, tail);
  return out;
}

/// J(alpha) = alpha * mean(target_entropy - H) and its derivative in alpha.
template <typename T>
struct AlphaObjective {
  T value = 0;
  T d_alpha = 0;
  T mean_entropy = 0;
};

template <typename T>
AlphaObjective<T> alpha_objective(const SacNets<T>& nets, const Matrix<T>& states, T alpha) {
  if (states.cols() == 0) throw std::invalid_argument("alpha objective on an empty batch");
  const auto pe = evaluate_policy(nets.policy, states);
  AlphaObjective<T> o;
  o.mean_entropy = pe.entropy.mean();
  o.d_alpha = nets.target_entropy - o.mean_entropy;
  o.value = alpha * o.d_alpha;
  return o;
}

/// Ascent step on J(alpha) applied to log(alpha) so alpha stays positive.
/// Returns the mean batch entropy used.
template <typename T>
T alpha_update(SacNets<T>& nets, const Matrix<T>& states, T kappa) {
  const auto o = alpha_objective(nets, states, nets.alpha());
  nets.log_alpha += kappa * o.d_alpha;
  return o.mean_entropy;
}

/// psi <- eps * phi + (1 - eps) * psi for both critics.
template <typename T>
void target_update(SacNets<T>& nets, T eps) {
  auto blend = [eps](net::MlpParams<T>& target, const net::MlpParams<T>& online) {
    for (std::size_t k = 0; k < target.layers.size(); ++k) {
      target.layers[k].weight = eps * online.layers[k].weight + (T(1) - eps) * target.layers[k].weight;
      target.layers[k].bias = eps * online.layers[k].bias + (T(1) - eps) * target.layers[k].bias;
    }
  };
  blend(nets.q1_target, nets.q1);
  blend(nets.q2_target, nets.q2);
}

template <typename T>
struct SacOptimizers {
  net::OptState<T> policy, q1, q2;

  static SacOptimizers for_nets(const SacNets<T>& n, T lr) {
    return {net::OptState<T>::for_params(n.policy, lr), net::OptState<T>::for_params(n.q1, lr),
            net::OptState<T>::for_params(n.q2, lr)};
  }
};

struct SacHyper {
  double gamma = 0.99;
  double kappa = 0.002;
  double tau = 0.005;  // target averaging rate
  bool learn_alpha = true;
};

template <typename T>
struct SacStepLog {
  T q_loss1 = 0, q_loss2 = 0, policy_value = 0, entropy = 0, alpha = 0;
};

/// Plain SAC gradient step: critics, policy, alpha, targets.
template <typename T>
SacStepLog<T> sac_gradient_step(SacNets<T>& nets, SacOptimizers<T>& opt, const ReplayBatch<T>& b, const SacHyper& h) {
  SacStepLog<T> log;
  const auto ql = q_loss(nets, b, static_cast<T>(h.gamma));
  net::opt_step(nets.q1, ql.grad1, opt.q1);
  net::opt_step(nets.q2, ql.grad2, opt.q2);
  const auto pt = sac_policy_term(nets, b.s);
  net::opt_step(nets.policy, pt.grad, opt.policy);
  if (h.learn_alpha)
    log.entropy = alpha_update(nets, b.s, static_cast<T>(h.kappa));
  else
    log.entropy = pt.mean_entropy;
  target_update(nets, static_cast<T>(h.tau));
  log.q_loss1 = ql.loss1;
  log.q_loss2 = ql.loss2;
  log.policy_value = pt.value;
  log.alpha = nets.alpha();
  return log;
}

}  // namespace scopil
