#include "scopil/policy.hpp"

#include <stdexcept>

namespace scopil {

namespace {

net::Vector<float> to_input(const State& s) {
  net::Vector<float> x(kStateDim);
  for (int i = 0; i < kStateDim; ++i) x[i] = static_cast<float>(s[i]);
  return x;
}

}  // namespace

NetworkPolicy::NetworkPolicy(net::MlpParams<float> params, bool greedy, std::uint64_t seed)
    : params_(std::move(params)), greedy_(greedy), rng_(seed) {
  if (params_.input_dim() != kStateDim || params_.output_dim() != kNumActions)
    throw net::ShapeError("policy network must map 8 state components to 9 action logits");
}

ActionId NetworkPolicy::act(const State& s, const RawState&) {
  return ActionId(greedy_ ? argmax_action(params_, s) : sample_action(params_, s, rng_));
}

int argmax_action(const net::MlpParams<float>& policy, const State& s) {
  const net::Vector<float> logits = net::forward(policy, to_input(s));
  int best = 0;
  for (int i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

net::Vector<float> action_log_probs(const net::MlpParams<float>& policy, const State& s) {
  return net::log_softmax<float>(net::forward(policy, to_input(s)));
}

int sample_action(const net::MlpParams<float>& policy, const State& s, std::mt19937_64& rng) {
  return sample_from_log_probs(action_log_probs(policy, s), rng);
}

int sample_from_log_probs(const net::Vector<float>& logp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (int i = 0; i < logp.size(); ++i) {
    r -= std::exp(static_cast<double>(logp[i]));
    if (r <= 0.0) return i;
  }
  return static_cast<int>(logp.size()) - 1;
}

}  // namespace scopil
