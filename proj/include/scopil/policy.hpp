#pragma once

#include <cstdint>
#include <random>

#include "scopil/env.hpp"
#include "scopil/mlp.hpp"

namespace scopil {

/// Anything that picks board commands: trained networks, the scripted
/// expert, test doubles.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Called before each game with a seed derived from (experiment, game).
  virtual void begin_episode(std::uint64_t /*episode_seed*/) {}
  virtual ActionId act(const State& s, const RawState& raw) = 0;
};

/// Categorical policy over the 9 actions given by a logits network.
class NetworkPolicy : public Policy {
 public:
  explicit NetworkPolicy(net::MlpParams<float> params, bool greedy = true, std::uint64_t seed = 0);

  void begin_episode(std::uint64_t episode_seed) override { rng_.seed(episode_seed); }
  ActionId act(const State& s, const RawState& raw) override;
  const net::MlpParams<float>& params() const { return params_; }

 private:
  net::MlpParams<float> params_;
  bool greedy_;
  std::mt19937_64 rng_;
};

/// Index of the largest logit; ties resolve to the lowest id.
int argmax_action(const net::MlpParams<float>& policy, const State& s);

/// log softmax(logits) for a single state.
net::Vector<float> action_log_probs(const net::MlpParams<float>& policy, const State& s);

/// Samples an action from softmax(logits).
int sample_action(const net::MlpParams<float>& policy, const State& s, std::mt19937_64& rng);
int sample_from_log_probs(const net::Vector<float>& logp, std::mt19937_64& rng);

}  // namespace scopil
