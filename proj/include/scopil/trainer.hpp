#pragma once

// SCOPIL: discrete SAC whose policy loss carries a Lagrangian-weighted
// demonstration term, with the multiplier ascended on that term.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "scopil/checkpoint.hpp"
#include "scopil/demo.hpp"
#include "scopil/env.hpp"
#include "scopil/sac.hpp"

namespace scopil {

enum class Ablation { Full, FixedLambda, NoEntropyInConstraint, Both };

/// CLI names: none, fixed-lambda, no-entropy-constraint, both.
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
inline bool fixes_lambda(Ablation a) { return a == Ablation::FixedLambda || a == Ablation::Both; }
inline bool drops_constraint_entropy(Ablation a) { return a == Ablation::NoEntropyInConstraint || a == Ablation::Both; }

enum class Stage { Critics, Policy, Alpha, Lambda, Targets };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct TrainerConfig {
  double lambda0 = 1.05;
  double delta = 0.0;
  double lr = 3e-4;         // networks
  double lambda_lr = 3e-4;  // multiplier
  double kappa = 0.002;
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 256;
  int demo_batch_size = 256;
  std::size_t buffer_capacity = 1'000'000;
  std::int64_t total_steps = 1'000'000;
  int grad_steps_per_env_step = 1;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::Full;
  double lambda_min = 1e-6;
  double lambda_max = 1e3;
  std::vector<int> hidden{32, 32};
  double initial_alpha = 1.0;
  std::int64_t checkpoint_every = 10'000;
  std::vector<Stage> stage_order{Stage::Critics, Stage::Policy, Stage::Alpha, Stage::Lambda, Stage::Targets};

  void validate() const;
};

nlohmann::json trainer_config_to_json(const TrainerConfig& c);
/// Keys absent from `j` keep their defaults; unknown keys are an error.
TrainerConfig trainer_config_from_json(const nlohmann::json& j);
TrainerConfig load_trainer_config(const std::filesystem::path& path);

/// Demo-constraint value and d/dlogits (per column, before batch averaging).
template <typename T>
struct ConstraintEval {
  T value = 0;  // mean NLL - alpha * mean H - delta (entropy dropped when excluded)
  T nll = 0;
  T entropy = 0;
  Matrix<T> logit_grad;
};

template <typename T>
ConstraintEval<T> constraint_from_logits(const Matrix<T>& logits, const std::vector<int>& actions, T alpha, T delta,
                                         bool with_entropy) {
  if (logits.cols() == 0) throw std::invalid_argument("constraint term on an empty demonstration batch");
  const auto pe = policy_from_logits<T>(logits);
  ConstraintEval<T> c;
  Matrix<T> nll_grad = pe.p;
  T nll = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int a = actions[static_cast<std::size_t>(j)];
    nll -= pe.logp(a, j);
    nll_grad(a, j) -= T(1);
  }
  c.nll = nll / static_cast<T>(logits.cols());
  c.entropy = pe.entropy.mean();
  c.value = c.nll - delta;
  c.logit_grad = std::move(nll_grad);
  if (with_entropy) {
    c.value -= alpha * c.entropy;
    c.logit_grad -= alpha * entropy_logit_grad(pe);
  }
  return c;
}

template <typename T>
T constraint_term(const net::MlpParams<T>& policy, T alpha, const DemoBatch<T>& demos, T delta, bool with_entropy) {
  return constraint_from_logits<T>(net::forward(policy, demos.s), demos.a, alpha, delta, with_entropy).value;
}

template <typename T>
struct LagrangianResult {
  T loss = 0;
  T sac_value = 0;
  T constraint = 0;
  T demo_nll = 0;
  T entropy = 0;  // mean over replay states
  net::GradientBundle<T> grad;
};

/// L = -mean_replay[alpha H + pi^T min Q] + lambda * constraint; gradient in
/// the policy parameters only.
template <typename T>
LagrangianResult<T> lagrangian_loss(const SacNets<T>& nets, T lambda, const Matrix<T>& replay_states,
                                    const DemoBatch<T>& demos, T delta, bool with_entropy) {
  LagrangianResult<T> out;
  auto sac = sac_policy_term(nets, replay_states);
  net::ForwardCache<T> cache;
  const Matrix<T> logits = net::forward(nets.policy, demos.s, cache);
  auto con = constraint_from_logits<T>(logits, demos.a, nets.alpha(), delta, with_entropy);
  auto demo_grad = net::backward(nets.policy, cache, con.logit_grad);
  demo_grad *= lambda;
  out.grad = std::move(sac.grad);
  out.grad += demo_grad;
  out.sac_value = sac.value;
  out.constraint = con.value;
  out.demo_nll = con.nll;
  out.entropy = sac.mean_entropy;
  out.loss = -sac.value + lambda * con.value;
  return out;
}

/// Ascent on g(lambda) = lambda * constraint, clamped.
inline double lambda_update(double lambda, double constraint, double lr, double lo, double hi) {
  return std::clamp(lambda + lr * constraint, lo, hi);
}

/// Mean -log pi(a|s) over every demonstration pair.
double demo_nll(const net::MlpParams<float>& policy, const DemoSet& demos);

struct StepLog {
  double q_loss1 = 0, q_loss2 = 0;
  double policy_loss = 0;
  double sac_value = 0;
  double constraint = 0;         // at the policy stage
  double lambda_constraint = 0;  // re-evaluated at the multiplier stage
  double demo_nll = 0;           // batch
  double entropy = 0;
  double alpha = 0;
  double lambda = 0;
};

struct EpisodeLog {
  std::int64_t step = 0;  // environment steps after this episode
  std::int64_t episode = 0;
  double reward = 0.0;    // de-normalized return
  int steps = 0;
  int h_viol = 0, v_viol = 0, c_viol = 0;
  double f_all = 0.0;
  double demo_nll = 0.0;  // full set, NaN without demos
  double alpha = 0.0;
  double lambda = 0.0;
  double entropy = 0.0;   // mean policy entropy over visited states
  DoneKind done = DoneKind::Running;
  int grad_steps = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One run of the method. Without demonstrations the demo term and the
/// multiplier stage are skipped and lambda reads 0; each gradient step then
/// performs exactly the plain SAC update.
class Trainer {
 public:
  Trainer(TrainerConfig cfg, EnvConfig env, DemoSet demos = {});

  const TrainerConfig& config() const { return cfg_; }
  const SacNets<float>& nets() const { return nets_; }
  SacNets<float>& mutable_nets() { return nets_; }
  const SacOptimizers<float>& optimizers() const { return opt_; }
  double lambda() const { return lambda_; }
  std::int64_t step() const { return step_; }
  std::int64_t episode() const { return episode_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  bool has_demos() const { return !demos_.empty(); }
  const DemoSet& demos() const { return demos_; }

  /// One gradient step on the given batches in the configured stage order.
  StepLog gradient_step(const ReplayBatch<float>& replay, const DemoBatch<float>* demo);
  /// Samples batches from the buffer and demos, then calls gradient_step.
  StepLog gradient_step();

  /// Rolls out one episode with the sampling policy (stopping early at
  /// total_steps), then runs the gradient steps owed for it.
  EpisodeLog run_episode();

  double full_demo_nll() const;
  Checkpoint checkpoint() const;

  struct Outputs {
    std::filesystem::path dir;  // checkpoints/ and metrics.csv go here; empty = in-memory only
    std::function<void(const EpisodeLog&)> on_episode;
    std::function<void(const StepLog&)> on_step;
  };

  struct Summary {
    std::int64_t steps = 0;
    std::int64_t episodes = 0;
    std::int64_t grad_steps = 0;
    std::vector<std::pair<std::int64_t, double>> checkpoint_nll;  // (step, full-demo NLL)
    std::vector<std::filesystem::path> checkpoints;
  };

  /// Runs to total_steps. Checkpoints at step 0, every checkpoint_every steps
  /// and at the end; on divergence writes checkpoints/diverged.json and throws
  /// TrainingDiverged.
  Summary train(const Outputs& out = {});

 private:
  void stage_critics(const ReplayBatch<float>& b, StepLog& log);
  void stage_policy(const ReplayBatch<float>& b, const DemoBatch<float>* d, StepLog& log);
  void stage_alpha(const ReplayBatch<float>& b, StepLog& log);
  void stage_lambda(const DemoBatch<float>* d, StepLog& log);

  TrainerConfig cfg_;
  EnvConfig env_cfg_;
  DemoSet demos_;
  MazeEnv env_;
  SacNets<float> nets_;
  SacOptimizers<float> opt_;
  ReplayBuffer buffer_;
  double lambda_ = 0.0;
  std::int64_t step_ = 0;
  std::int64_t episode_ = 0;
  std::int64_t grad_steps_ = 0;
  std::mt19937_64 init_rng_, act_rng_, sample_rng_;
};

inline constexpr const char* kMetricsHeader =
    "step,episode,reward,H_viol,V_viol,C_viol,F_all,demo_nll,alpha,lambda,entropy";
std::string metrics_row(const EpisodeLog& e);

}  // namespace scopil
