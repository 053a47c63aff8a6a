// scopil: train, eval, collect, stats, serve.

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "scopil/checkpoint.hpp"
#include "scopil/demo.hpp"
#include "scopil/eval.hpp"
#include "scopil/manifest.hpp"
#include "scopil/presets.hpp"
#include "scopil/service.hpp"
#include "scopil/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scopil;

namespace {

/// Bad input from the user: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& what, const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

EnvConfig resolve_setting(const std::string& s) {
  try {
    if (fs::is_regular_file(s)) return load_env_config(s);
    return make_preset(s);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

DemoSet read_demos(const fs::path& p) {
  require_file("demonstration file", p);
  try {
    return load_demos(p);
  } catch (const DemoLoadError& e) {
    throw UsageError(e.what());
  }
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return digest_hex(os.str());
}

void warn_setting(const DemoSet& d, const EnvConfig& env) {
  if (d.setting != env.setting)
    spdlog::warn("demonstrations were recorded for setting '{}' but the environment is '{}'", d.setting, env.setting);
  if (d.constraints_digest != constraints_digest(env.constraints))
    spdlog::warn("demonstration constraints digest {} differs from the environment's {}", d.constraints_digest,
                 constraints_digest(env.constraints));
}

struct TrainArgs {
  std::string config, setting = "simple", demos, ablation, out = "runs/train";
  std::int64_t steps = -1;
  std::int64_t seed = -1;
  int grad_steps = -1;
};

int cmd_train(const TrainArgs& a) {
  TrainerConfig cfg;
  if (!a.config.empty()) {
    require_file("trainer config", a.config);
    try {
      cfg = load_trainer_config(a.config);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (a.steps >= 0) cfg.total_steps = a.steps;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.grad_steps >= 0) cfg.grad_steps_per_env_step = a.grad_steps;
  try {
    if (!a.ablation.empty()) cfg.ablation = ablation_from_string(a.ablation);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const EnvConfig env = resolve_setting(a.setting);
  DemoSet demos;
  json demo_info = nullptr;
  if (!a.demos.empty()) {
    demos = read_demos(a.demos);
    warn_setting(demos, env);
    demo_info = {{"path", a.demos}, {"digest", file_digest(a.demos)}, {"pairs", demos.size()}};
  } else {
    spdlog::info("no demonstrations given: training plain SAC");
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  auto manifest = RunManifest::begin(
      "train", {{"trainer", trainer_config_to_json(cfg)}, {"env", env_config_to_json(env)}, {"demos", demo_info}},
      {cfg.seed});
  manifest.outputs = {{"metrics", (out / "metrics.csv").string()},
                      {"checkpoints", (out / "checkpoints").string()},
                      {"final", (out / "checkpoints" / "final.json").string()}};
  write_manifest(out / "manifest.json", manifest);

  Trainer trainer(cfg, env, std::move(demos));
  Trainer::Outputs o;
  o.dir = out;
  std::int64_t next_log = 0;
  o.on_episode = [&](const EpisodeLog& e) {
    if (e.step < next_log) return;
    next_log = e.step + cfg.checkpoint_every;
    spdlog::info("step {} episode {} reward {:.2f} F {:.3f} demo_nll {:.4f} alpha {:.4f} lambda {:.4f}", e.step,
                 e.episode, e.reward, e.f_all, e.demo_nll, e.alpha, e.lambda);
  };
  try {
    const auto sum = trainer.train(o);
    spdlog::info("finished: {} steps, {} episodes, {} gradient steps", sum.steps, sum.episodes, sum.grad_steps);
  } catch (const TrainingDiverged& e) {
    manifest.finish("diverged");
    write_manifest(out / "manifest.json", manifest);
    throw;
  }
  manifest.finish("ok");
  write_manifest(out / "manifest.json", manifest);
  return 0;
}

struct EvalArgs {
  std::vector<std::string> policies;
  std::string setting = "simple", demos, out = "runs/eval";
  int games = 40;
  std::vector<std::uint64_t> seeds{0};
  bool sample = false;
};

int cmd_eval(const EvalArgs& a) {
  const EnvConfig env = resolve_setting(a.setting);
  DemoSet demos;
  if (!a.demos.empty()) {
    demos = read_demos(a.demos);
    warn_setting(demos, env);
  }
  if (a.games < 0) throw UsageError("--games must be >= 0");
  std::vector<net::MlpParams<float>> nets;
  json policy_info = json::array();
  for (const auto& p : a.policies) {
    require_file("policy checkpoint", p);
    try {
      nets.push_back(load_policy(p));
    } catch (const std::exception& e) {
      throw UsageError(std::string("cannot use policy ") + p + ": " + e.what());
    }
    policy_info.push_back({{"path", p}, {"digest", file_digest(p)}});
  }
  const fs::path out = a.out;
  auto manifest = RunManifest::begin("eval",
                                     {{"env", env_config_to_json(env)},
                                      {"policies", policy_info},
                                      {"games", a.games},
                                      {"sample", a.sample},
                                      {"demos", a.demos.empty() ? json(nullptr) : json(file_digest(a.demos))}},
                                     a.seeds);
  manifest.outputs = {{"report", (out / "report.csv").string()},
                      {"trajectories", (out / "trajectories.csv").string()},
                      {"summary", (out / "summary.json").string()}};
  write_manifest(out / "manifest.json", manifest);

  EvalOptions opt;
  opt.n_games = a.games;
  opt.seeds = a.seeds;
  opt.demos = demos.empty() ? nullptr : &demos;
  std::vector<EvalReport> reports;
  for (auto& n : nets) {
    NetworkPolicy pol(n, !a.sample);
    reports.push_back(evaluate(pol, env, opt));
  }
  EvalReport report = reports.size() == 1 ? reports.front() : merge_reports(reports);
  if (env.setting == "two-modes") {
    for (const auto& c : env.constraints)
      if (c.kind == ConstraintKind::Circle) {
        report.mode_coverage = mode_coverage(report, c, env.hole_center);
        break;
      }
  }
  export_report(report, out);
  std::cout << format_report_table(report);
  manifest.finish("ok");
  write_manifest(out / "manifest.json", manifest);
  return 0;
}

int cmd_collect(const std::string& setting, int games, std::uint64_t seed, const std::string& out_file) {
  const EnvConfig env = resolve_setting(setting);
  if (games <= 0) throw UsageError("--games must be positive");
  const fs::path out = out_file;
  const fs::path manifest_path = fs::path(out).replace_extension(".manifest.json");
  auto manifest = RunManifest::begin("collect", {{"env", env_config_to_json(env)}, {"games", games}}, {seed});
  manifest.outputs = {{"demos", out.string()}};
  write_manifest(manifest_path, manifest);
  const DemoSet d = scripted_demos(env, games, seed);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_demos(out, d);
  std::cout << format_stats_table(out.stem().string(), demo_stats(d, env.reward_min, env.reward_max));
  manifest.finish("ok");
  write_manifest(manifest_path, manifest);
  return 0;
}

int cmd_stats(const std::string& path) {
  const DemoSet d = read_demos(path);
  if (d.empty()) throw UsageError("demonstration file has no records");
  std::cout << format_stats_table(fs::path(path).stem().string(), demo_stats(d));
  return 0;
}

int cmd_serve(const std::string& setting, const std::string& address, unsigned short port, const std::string& out) {
  const EnvConfig env = resolve_setting(setting);
  // Route SIGINT/SIGTERM to sigwait below instead of the server threads.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  DemoServer server(env, out, address, port);
  server.start();
  spdlog::info("serving setting '{}' on ws://{}:{} (GET /config), writing {}", env.setting, address, server.port(),
               out);
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {} received, shutting down", sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained imitation learning on the tilting-board maze"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a policy (plain SAC when --demos is omitted)");
  train->add_option("--config", ta.config, "Trainer config JSON");
  train->add_option("--setting", ta.setting, "Preset name (simple, multi, two-modes) or env JSON file");
  train->add_option("--demos", ta.demos, "Demonstration JSONL");
  train->add_option("--steps", ta.steps, "Total environment steps");
  train->add_option("--seed", ta.seed, "Run seed");
  train->add_option("--grad-steps", ta.grad_steps, "Gradient steps per environment step");
  train->add_option("--ablation", ta.ablation, "none, fixed-lambda, no-entropy-constraint or both");
  train->add_option("--out", ta.out, "Output directory");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate one or more policies");
  eval->add_option("--policy", ea.policies, "Checkpoint JSON (repeat for several runs)")->required();
  eval->add_option("--setting", ea.setting, "Preset name or env JSON file");
  eval->add_option("--games", ea.games, "Games per seed");
  eval->add_option("--seeds", ea.seeds, "Comma-separated experiment seeds")->delimiter(',');
  eval->add_option("--demos", ea.demos, "Start from these demonstrations' initial states");
  eval->add_option("--out", ea.out, "Output directory");
  eval->add_flag("--sample", ea.sample, "Sample actions instead of taking the argmax");

  std::string c_setting = "simple", c_out;
  int c_games = 40;
  std::uint64_t c_seed = 0;
  auto* collect = app.add_subcommand("collect", "Generate scripted demonstrations");
  collect->add_option("--setting", c_setting, "Preset name or env JSON file");
  collect->add_option("--games", c_games, "Successful games to record");
  collect->add_option("--seed", c_seed, "Spawn seed");
  collect->add_option("--out", c_out, "Output JSONL")->required();

  std::string s_demos;
  auto* stats = app.add_subcommand("stats", "Summarize a demonstration file");
  stats->add_option("--demos", s_demos, "Demonstration JSONL")->required();

  std::string v_setting = "simple", v_out = "demos.jsonl", v_address = "127.0.0.1";
  unsigned short v_port = 8765;
  auto* serve = app.add_subcommand("serve", "Run the demonstration recording service");
  serve->add_option("--setting", v_setting, "Preset name or env JSON file");
  serve->add_option("--address", v_address, "Bind address");
  serve->add_option("--port", v_port, "TCP port");
  serve->add_option("--out", v_out, "Demonstration JSONL to append to");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << " (see --help)\n";
    return 2;
  }

  spdlog::set_default_logger(spdlog::default_logger()->clone("scopil"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  try {
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*collect) return cmd_collect(c_setting, c_games, c_seed, c_out);
    if (*stats) return cmd_stats(s_demos);
    if (*serve) return cmd_serve(v_setting, v_address, v_port, v_out);
  } catch (const UsageError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "usage error: " << msg << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
