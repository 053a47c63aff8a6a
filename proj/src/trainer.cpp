#include "scopil/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "scopil/policy.hpp"
#include "scopil/seeding.hpp"

namespace scopil {

using nlohmann::json;

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "none";
    case Ablation::FixedLambda: return "fixed-lambda";
    case Ablation::NoEntropyInConstraint: return "no-entropy-constraint";
    case Ablation::Both: return "both";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none" || s == "full") return Ablation::Full;
  if (s == "fixed-lambda" || s == "fixed_lambda") return Ablation::FixedLambda;
  if (s == "no-entropy-constraint" || s == "no_entropy_in_constraint") return Ablation::NoEntropyInConstraint;
  if (s == "both") return Ablation::Both;
  throw std::invalid_argument("unknown ablation '" + s + "' (expected none, fixed-lambda, no-entropy-constraint, both)");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Critics: return "critics";
    case Stage::Policy: return "policy";
    case Stage::Alpha: return "alpha";
    case Stage::Lambda: return "lambda";
    case Stage::Targets: return "targets";
  }
  return "critics";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Critics, Stage::Policy, Stage::Alpha, Stage::Lambda, Stage::Targets})
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown update stage: " + s);
}

void TrainerConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid trainer config: " + m); };
  if (!(lr > 0) || !(lambda_lr > 0) || !(kappa > 0) || !(tau > 0) || tau > 1) fail("rates must be positive (tau <= 1)");
  if (!(gamma > 0) || gamma > 1) fail("gamma must lie in (0, 1]");
  if (!(delta >= 0)) fail("delta must be >= 0");
  if (!(lambda0 > 0)) fail("lambda0 must be > 0");
  if (!(lambda_min > 0) || !(lambda_max > lambda_min)) fail("lambda clamp needs 0 < lambda_min < lambda_max");
  if (lambda0 < lambda_min || lambda0 > lambda_max) fail("lambda0 outside the clamp interval");
  if (batch_size <= 0 || demo_batch_size <= 0) fail("batch sizes must be positive");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) fail("buffer capacity below batch size");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (grad_steps_per_env_step < 0) fail("grad_steps_per_env_step must be >= 0");
  if (!(initial_alpha > 0)) fail("initial_alpha must be > 0");
  if (checkpoint_every <= 0) fail("checkpoint_every must be positive");
  for (int h : hidden)
    if (h <= 0) fail("hidden sizes must be positive");
  std::set<Stage> seen(stage_order.begin(), stage_order.end());
  if (seen.size() != 5 || stage_order.size() != 5) fail("stage_order must list each of the five stages once");
}

json trainer_config_to_json(const TrainerConfig& c) {
  json order = json::array();
  for (Stage s : c.stage_order) order.push_back(to_string(s));
  return {{"lambda0", c.lambda0},
          {"delta", c.delta},
          {"lr", c.lr},
          {"lambda_lr", c.lambda_lr},
          {"kappa", c.kappa},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"batch_size", c.batch_size},
          {"demo_batch_size", c.demo_batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"total_steps", c.total_steps},
          {"grad_steps_per_env_step", c.grad_steps_per_env_step},
          {"seed", c.seed},
          {"ablation", to_string(c.ablation)},
          {"lambda_min", c.lambda_min},
          {"lambda_max", c.lambda_max},
          {"hidden", c.hidden},
          {"initial_alpha", c.initial_alpha},
          {"checkpoint_every", c.checkpoint_every},
          {"stage_order", order}};
}

TrainerConfig trainer_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("trainer config must be a JSON object");
  TrainerConfig c;
  const json defaults = trainer_config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!defaults.contains(key)) throw std::invalid_argument("unknown trainer config key: " + key);
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get("lambda0", c.lambda0);
    get("delta", c.delta);
    get("lr", c.lr);
    get("lambda_lr", c.lambda_lr);
    get("kappa", c.kappa);
    get("gamma", c.gamma);
    get("tau", c.tau);
    get("batch_size", c.batch_size);
    get("demo_batch_size", c.demo_batch_size);
    get("buffer_capacity", c.buffer_capacity);
    get("total_steps", c.total_steps);
    get("grad_steps_per_env_step", c.grad_steps_per_env_step);
    get("seed", c.seed);
    get("lambda_min", c.lambda_min);
    get("lambda_max", c.lambda_max);
    get("hidden", c.hidden);
    get("initial_alpha", c.initial_alpha);
    get("checkpoint_every", c.checkpoint_every);
    if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
    if (j.contains("stage_order")) {
      c.stage_order.clear();
      for (const auto& s : j.at("stage_order")) c.stage_order.push_back(stage_from_string(s.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("invalid trainer config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainerConfig load_trainer_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open trainer config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("malformed trainer config " + path.string() + ": " + e.what());
  }
  return trainer_config_from_json(j);
}

double demo_nll(const net::MlpParams<float>& policy, const DemoSet& demos) {
  if (demos.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto b = all_pairs<double>(demos);
  const auto logp = net::log_softmax(net::forward(policy.cast<double>(), b.s));
  double sum = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) sum -= logp(b.a[static_cast<std::size_t>(j)], j);
  return sum / static_cast<double>(b.size());
}

Trainer::Trainer(TrainerConfig cfg, EnvConfig env, DemoSet demos)
    : cfg_(std::move(cfg)),
      env_cfg_(std::move(env)),
      demos_(std::move(demos)),
      env_(env_cfg_),
      buffer_(cfg_.buffer_capacity),
      init_rng_(derive_seed(cfg_.seed, 0)),
      act_rng_(derive_seed(cfg_.seed, 1)),
      sample_rng_(derive_seed(cfg_.seed, 2)) {
  cfg_.validate();
  nets_ = SacNets<float>::init(init_rng_, cfg_.hidden, static_cast<float>(cfg_.initial_alpha));
  opt_ = SacOptimizers<float>::for_nets(nets_, static_cast<float>(cfg_.lr));
  lambda_ = has_demos() ? cfg_.lambda0 : 0.0;
  for (const auto& r : demos_.records)
    if (r.viol.size() != env_cfg_.constraints.size())
      throw std::invalid_argument("demonstrations carry " + std::to_string(r.viol.size()) +
                                  " violation flags but the environment has " +
                                  std::to_string(env_cfg_.constraints.size()) + " constraints");
}

void Trainer::stage_critics(const ReplayBatch<float>& b, StepLog& log) {
  const auto ql = q_loss(nets_, b, static_cast<float>(cfg_.gamma));
  if (!std::isfinite(ql.loss1) || !std::isfinite(ql.loss2)) throw net::NonFiniteError("non-finite critic loss");
  net::opt_step(nets_.q1, ql.grad1, opt_.q1);
  net::opt_step(nets_.q2, ql.grad2, opt_.q2);
  log.q_loss1 = ql.loss1;
  log.q_loss2 = ql.loss2;
}

void Trainer::stage_policy(const ReplayBatch<float>& b, const DemoBatch<float>* d, StepLog& log) {
  if (d == nullptr) {
    const auto pt = sac_policy_term(nets_, b.s);
    if (!std::isfinite(pt.value)) throw net::NonFiniteError("non-finite policy objective");
    net::opt_step(nets_.policy, pt.grad, opt_.policy);
    log.sac_value = pt.value;
    log.policy_loss = -pt.value;
    log.entropy = pt.mean_entropy;
    return;
  }
  const auto lag = lagrangian_loss(nets_, static_cast<float>(lambda_), b.s, *d, static_cast<float>(cfg_.delta),
                                   !drops_constraint_entropy(cfg_.ablation));
  if (!std::isfinite(lag.loss)) throw net::NonFiniteError("non-finite Lagrangian");
  net::opt_step(nets_.policy, lag.grad, opt_.policy);
  log.policy_loss = lag.loss;
  log.sac_value = lag.sac_value;
  log.constraint = lag.constraint;
  log.demo_nll = lag.demo_nll;
  log.entropy = lag.entropy;
}

void Trainer::stage_alpha(const ReplayBatch<float>& b, StepLog& log) {
  log.entropy = alpha_update(nets_, b.s, static_cast<float>(cfg_.kappa));
  if (!std::isfinite(nets_.log_alpha)) throw net::NonFiniteError("non-finite entropy coefficient");
}

void Trainer::stage_lambda(const DemoBatch<float>* d, StepLog& log) {
  if (d == nullptr) return;
  const float c = constraint_term(nets_.policy, nets_.alpha(), *d, static_cast<float>(cfg_.delta),
                                  !drops_constraint_entropy(cfg_.ablation));
  if (!std::isfinite(c)) throw net::NonFiniteError("non-finite constraint term");
  log.lambda_constraint = c;
  if (!fixes_lambda(cfg_.ablation)) lambda_ = lambda_update(lambda_, c, cfg_.lambda_lr, cfg_.lambda_min, cfg_.lambda_max);
}

StepLog Trainer::gradient_step(const ReplayBatch<float>& replay, const DemoBatch<float>* demo) {
  StepLog log;
  for (Stage s : cfg_.stage_order) {
    switch (s) {
      case Stage::Critics: stage_critics(replay, log); break;
      case Stage::Policy: stage_policy(replay, demo, log); break;
      case Stage::Alpha: stage_alpha(replay, log); break;
      case Stage::Lambda: stage_lambda(demo, log); break;
      case Stage::Targets: target_update(nets_, static_cast<float>(cfg_.tau)); break;
    }
  }
  log.alpha = nets_.alpha();
  log.lambda = lambda_;
  ++grad_steps_;
  return log;
}

StepLog Trainer::gradient_step() {
  const auto replay = buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), sample_rng_);
  if (!has_demos()) return gradient_step(replay, nullptr);
  const auto demo = sample_batch(demos_, static_cast<std::size_t>(cfg_.demo_batch_size), sample_rng_);
  return gradient_step(replay, &demo);
}

EpisodeLog Trainer::run_episode() {
  EpisodeLog e;
  State s = env_.reset(derive_seed(cfg_.seed ^ 0x5eedULL, static_cast<std::uint64_t>(episode_)));
  std::vector<int> counts(env_cfg_.constraints.size(), 0);
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += env_.initial_events()[i] ? 1 : 0;
  double entropy_sum = 0.0;
  while (!env_.finished() && step_ < cfg_.total_steps) {
    const auto logp = action_log_probs(nets_.policy, s);
    for (int k = 0; k < kNumActions; ++k) entropy_sum -= std::exp(static_cast<double>(logp[k])) * logp[k];
    const int a = sample_from_log_probs(logp, act_rng_);
    const StepResult r = env_.step(ActionId(a));
    buffer_.push({s, a, r.reward, r.next_state, r.done != DoneKind::Running});
    e.reward += denormalize_reward(r.reward, env_cfg_);
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += r.violation_events[i] ? 1 : 0;
    s = r.next_state;
    ++e.steps;
    ++step_;
  }
  e.done = env_.done();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    switch (env_cfg_.constraints[i].label) {
      case 'H': e.h_viol += counts[i]; break;
      case 'V': e.v_viol += counts[i]; break;
      default: e.c_viol += counts[i]; break;
    }
  }
  e.f_all = e.steps > 0 ? static_cast<double>(e.h_viol + e.v_viol + e.c_viol) / e.steps : 0.0;
  e.entropy = e.steps > 0 ? entropy_sum / e.steps : 0.0;

  if (buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
    const int n = e.steps * cfg_.grad_steps_per_env_step;
    for (int k = 0; k < n; ++k) gradient_step();
    e.grad_steps = n;
  }
  ++episode_;
  e.step = step_;
  e.episode = episode_;
  e.demo_nll = full_demo_nll();
  e.alpha = nets_.alpha();
  e.lambda = lambda_;
  return e;
}

double Trainer::full_demo_nll() const { return demo_nll(nets_.policy, demos_); }

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.nets = nets_;
  c.opt = opt_;
  c.lambda = lambda_;
  c.step = step_;
  c.episode = episode_;
  c.demo_nll = full_demo_nll();
  return c;
}

std::string metrics_row(const EpisodeLog& e) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << e.step << ',' << e.episode << ',' << e.reward << ',' << e.h_viol << ',' << e.v_viol << ',' << e.c_viol << ','
     << e.f_all << ',';
  if (std::isfinite(e.demo_nll)) os << e.demo_nll;
  os << ',' << e.alpha << ',' << e.lambda << ',' << e.entropy;
  return os.str();
}

namespace {

std::string checkpoint_name(std::int64_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(8) << std::setfill('0') << step << ".json";
  return os.str();
}

}  // namespace

Trainer::Summary Trainer::train(const Outputs& out) {
  Summary sum;
  const bool persist = !out.dir.empty();
  std::ofstream metrics;
  std::filesystem::path ckdir;
  if (persist) {
    ckdir = out.dir / "checkpoints";
    std::filesystem::create_directories(ckdir);
    metrics.open(out.dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("cannot write " + (out.dir / "metrics.csv").string());
    metrics << kMetricsHeader << '\n' << std::flush;
  }
  auto snapshot = [&](const std::string& name) {
    const Checkpoint c = checkpoint();
    sum.checkpoint_nll.emplace_back(c.step, c.demo_nll);
    if (persist) {
      save_checkpoint(ckdir / name, c);
      sum.checkpoints.push_back(ckdir / name);
    }
  };

  snapshot(checkpoint_name(step_));
  std::int64_t next_ck = step_ + cfg_.checkpoint_every;
  try {
    while (step_ < cfg_.total_steps) {
      const EpisodeLog e = run_episode();
      sum.grad_steps += e.grad_steps;
      if (persist) metrics << metrics_row(e) << '\n' << std::flush;
      if (out.on_episode) out.on_episode(e);
      if (step_ >= next_ck && step_ < cfg_.total_steps) {
        snapshot(checkpoint_name(step_));
        while (next_ck <= step_) next_ck += cfg_.checkpoint_every;
      }
    }
  } catch (const net::NonFiniteError& err) {
    if (persist) save_checkpoint(ckdir / "diverged.json", checkpoint());
    throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step_) + ": " + err.what());
  }
  if (sum.checkpoint_nll.empty() || sum.checkpoint_nll.back().first != step_ || step_ == 0) {
    if (step_ > 0) snapshot(checkpoint_name(step_));
  }
  if (persist) {
    save_checkpoint(ckdir / "final.json", checkpoint());
    sum.checkpoints.push_back(ckdir / "final.json");
  }
  sum.steps = step_;
  sum.episodes = episode_;
  return sum;
}

}  // namespace scopil
