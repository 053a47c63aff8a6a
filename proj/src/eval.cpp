#include "scopil/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "scopil/expert.hpp"
#include "scopil/seeding.hpp"

namespace scopil {

using nlohmann::json;

namespace {

GameResult play_game(Policy& policy, MazeEnv& env, Vec2 start, std::uint64_t policy_seed) {
  GameResult g;
  const EnvConfig& cfg = env.config();
  policy.begin_episode(policy_seed);
  env.reset_to(start);
  g.start = start;
  std::vector<int> counts(cfg.constraints.size(), 0);
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += env.initial_events()[i] ? 1 : 0;
  g.trajectory.push_back({0, env.raw().bx, env.raw().by, env.violation_active()});
  while (!env.finished()) {
    const Vec2 before = env.raw().ball();
    const StepResult r = env.step(policy.act(env.state(), env.raw()));
    g.reward += denormalize_reward(r.reward, cfg);
    g.length += std::hypot(r.raw.bx - before.x, r.raw.by - before.y);
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += r.violation_events[i] ? 1 : 0;
    g.trajectory.push_back({r.raw.t, r.raw.bx, r.raw.by, r.violation_active});
    ++g.steps;
  }
  g.done = env.done();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    switch (cfg.constraints[i].label) {
      case 'H': g.h += counts[i]; break;
      case 'V': g.v += counts[i]; break;
      default: g.c += counts[i]; break;
    }
  }
  return g;
}

Vec2 spawn_for(const EnvConfig& cfg, std::uint64_t seed) {
  MazeEnv env(cfg);
  env.reset(seed);
  return env.raw().ball();
}

MeanStd mean_over(const std::vector<const GameResult*>& games, double (*f)(const GameResult&)) {
  std::vector<double> xs;
  xs.reserve(games.size());
  for (const auto* g : games) xs.push_back(f(*g));
  return mean_std(xs);
}

}  // namespace

MetricSummary summarize_games(const std::vector<const GameResult*>& games) {
  MetricSummary s;
  s.reward = mean_over(games, [](const GameResult& g) { return g.reward; });
  s.h = mean_over(games, [](const GameResult& g) { return double(g.h); });
  s.v = mean_over(games, [](const GameResult& g) { return double(g.v); });
  s.c = mean_over(games, [](const GameResult& g) { return double(g.c); });
  s.combined = mean_over(games, [](const GameResult& g) { return double(g.combined()); });
  s.f_h = mean_over(games, [](const GameResult& g) { return g.freq(g.h); });
  s.f_v = mean_over(games, [](const GameResult& g) { return g.freq(g.v); });
  s.f_c = mean_over(games, [](const GameResult& g) { return g.freq(g.c); });
  s.f_combined = mean_over(games, [](const GameResult& g) { return g.freq(g.combined()); });
  s.length = mean_over(games, [](const GameResult& g) { return g.length; });
  s.steps = mean_over(games, [](const GameResult& g) { return double(g.steps); });
  s.goal_rate = mean_over(games, [](const GameResult& g) { return g.done == DoneKind::Goal ? 1.0 : 0.0; });
  return s;
}

void summarize(EvalReport& report, std::size_t n_experiments) {
  report.per_experiment.clear();
  std::vector<const GameResult*> all;
  for (const auto& g : report.games) all.push_back(&g);
  for (std::size_t e = 0; e < n_experiments; ++e) {
    std::vector<const GameResult*> mine;
    for (const auto& g : report.games)
      if (g.experiment == e) mine.push_back(&g);
    report.per_experiment.push_back(summarize_games(mine));
  }
  if (n_experiments <= 1) {
    report.summary = summarize_games(all);
    return;
  }
  // Macro average: mean and spread of the per-experiment means.
  auto across = [&](MeanStd MetricSummary::*m) {
    std::vector<double> xs;
    for (const auto& s : report.per_experiment) xs.push_back((s.*m).mean);
    return mean_std(xs);
  };
  MetricSummary& s = report.summary;
  for (auto m : {&MetricSummary::reward, &MetricSummary::h, &MetricSummary::v, &MetricSummary::c,
                 &MetricSummary::combined, &MetricSummary::f_h, &MetricSummary::f_v, &MetricSummary::f_c,
                 &MetricSummary::f_combined, &MetricSummary::length, &MetricSummary::steps,
                 &MetricSummary::goal_rate})
    s.*m = across(m);
}

EvalReport evaluate(Policy& policy, const EnvConfig& cfg, const EvalOptions& opt) {
  if (opt.n_games < 0) throw std::invalid_argument("n_games must be >= 0");
  if (opt.seeds.empty()) throw std::invalid_argument("at least one evaluation seed is required");
  std::vector<Vec2> demo_starts;
  if (opt.demos != nullptr) {
    demo_starts = episode_starts(*opt.demos);
    if (demo_starts.empty()) throw std::invalid_argument("demonstration set has no episodes");
  }
  EvalReport report;
  report.setting = cfg.setting;
  MazeEnv env(cfg);
  for (std::size_t e = 0; e < opt.seeds.size(); ++e) {
    const std::uint64_t seed = opt.seeds[e];
    for (int k = 0; k < opt.n_games; ++k) {
      const auto game = static_cast<std::uint64_t>(k);
      const std::uint64_t spawn_seed = derive_seed(seed, game);
      const Vec2 start = demo_starts.empty() ? spawn_for(cfg, spawn_seed) : demo_starts[game % demo_starts.size()];
      GameResult g = play_game(policy, env, start, derive_seed(seed ^ 0xa11ce5ULL, game));
      g.experiment = e;
      g.game = game;
      g.seed = demo_starts.empty() ? spawn_seed : seed;
      report.games.push_back(std::move(g));
    }
  }
  summarize(report, opt.seeds.size());
  return report;
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  if (reports.empty()) return out;
  out.setting = reports.front().setting;
  for (std::size_t e = 0; e < reports.size(); ++e) {
    if (reports[e].setting != out.setting) throw std::invalid_argument("cannot merge reports from different settings");
    for (GameResult g : reports[e].games) {
      g.experiment = e;
      out.games.push_back(std::move(g));
    }
  }
  summarize(out, reports.size());
  if (reports.front().mode_coverage) {
    ModeCoverage m;
    for (const auto& r : reports)
      if (r.mode_coverage) {
        m.left += r.mode_coverage->left;
        m.right += r.mode_coverage->right;
        m.unclassified += r.mode_coverage->unclassified;
      }
    out.mode_coverage = m;
  }
  return out;
}

ModeCoverage mode_coverage(const std::vector<std::vector<Vec2>>& paths, const ConstraintSpec& circle, Vec2 hole) {
  ModeCoverage m;
  for (const auto& path : paths) {
    double best = std::numeric_limits<double>::infinity();
    const Vec2* closest = nullptr;
    for (const auto& p : path) {
      if (std::abs(p.y - circle.center.y) > circle.radius) continue;
      const double d = std::hypot(p.x - circle.center.x, p.y - circle.center.y);
      if (d < best) {
        best = d;
        closest = &p;
      }
    }
    if (closest == nullptr) {
      ++m.unclassified;
    } else if (detour_side(*closest, circle.center, hole) < 0) {
      ++m.left;
    } else {
      ++m.right;
    }
  }
  return m;
}

ModeCoverage mode_coverage(const EvalReport& report, const ConstraintSpec& circle, Vec2 hole) {
  std::vector<std::vector<Vec2>> paths;
  for (const auto& g : report.games) {
    std::vector<Vec2> path;
    for (const auto& p : g.trajectory) path.push_back({p.bx, p.by});
    paths.push_back(std::move(path));
  }
  return mode_coverage(paths, circle, hole);
}

ModeCoverage mode_coverage(const DemoSet& demos, const ConstraintSpec& circle, Vec2 hole) {
  std::vector<std::vector<Vec2>> paths;
  for (const auto& [b, e] : demos.episodes()) {
    std::vector<Vec2> path;
    for (std::size_t i = b; i < e; ++i) path.push_back({demos.records[i].bx, demos.records[i].by});
    paths.push_back(std::move(path));
  }
  return mode_coverage(paths, circle, hole);
}

namespace {

const char* kReportHeader =
    "row,experiment,game,seed,start_x,start_y,done,reward,steps,length,H,V,C,combined,F_H,F_V,F_C,F_combined";

void write_summary_row(std::ostream& os, const std::string& kind, const std::string& exp, const MetricSummary& s,
                       bool stds) {
  auto v = [&](const MeanStd& m) { return stds ? m.std : m.mean; };
  os << kind << ',' << exp << ",,,,,," << v(s.reward) << ',' << v(s.steps) << ',' << v(s.length) << ',' << v(s.h)
     << ',' << v(s.v) << ',' << v(s.c) << ',' << v(s.combined) << ',' << v(s.f_h) << ',' << v(s.f_v) << ','
     << v(s.f_c) << ',' << v(s.f_combined) << '\n';
}

json ms(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }
MeanStd ms_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

json metric_json(const MetricSummary& s) {
  return {{"reward", ms(s.reward)},   {"H", ms(s.h)},           {"V", ms(s.v)},           {"C", ms(s.c)},
          {"combined", ms(s.combined)}, {"F_H", ms(s.f_h)},     {"F_V", ms(s.f_v)},       {"F_C", ms(s.f_c)},
          {"F_combined", ms(s.f_combined)}, {"length", ms(s.length)}, {"steps", ms(s.steps)},
          {"goal_rate", ms(s.goal_rate)}};
}

}  // namespace

MetricSummary summary_from_json(const json& j) {
  const json& m = j.contains("summary") ? j.at("summary") : j;
  MetricSummary s;
  s.reward = ms_from(m.at("reward"));
  s.h = ms_from(m.at("H"));
  s.v = ms_from(m.at("V"));
  s.c = ms_from(m.at("C"));
  s.combined = ms_from(m.at("combined"));
  s.f_h = ms_from(m.at("F_H"));
  s.f_v = ms_from(m.at("F_V"));
  s.f_c = ms_from(m.at("F_C"));
  s.f_combined = ms_from(m.at("F_combined"));
  s.length = ms_from(m.at("length"));
  s.steps = ms_from(m.at("steps"));
  s.goal_rate = ms_from(m.at("goal_rate"));
  return s;
}

json summary_to_json(const EvalReport& report) {
  json per = json::array();
  for (const auto& s : report.per_experiment) per.push_back(metric_json(s));
  json j = {{"setting", report.setting},
            {"games", report.games.size()},
            {"experiments", report.per_experiment.size()},
            {"summary", metric_json(report.summary)},
            {"per_experiment", per}};
  if (report.mode_coverage)
    j["mode_coverage"] = {{"left", report.mode_coverage->left},
                          {"right", report.mode_coverage->right},
                          {"unclassified", report.mode_coverage->unclassified},
                          {"left_share", report.mode_coverage->left_share()},
                          {"right_share", report.mode_coverage->right_share()}};
  return j;
}

MetricSummary read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return summary_from_json(json::parse(in));
}

void export_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << std::setprecision(17);
    return f;
  };
  {
    auto f = open("report.csv");
    f << kReportHeader << '\n';
    for (const auto& g : report.games)
      f << "game," << g.experiment << ',' << g.game << ',' << g.seed << ',' << g.start.x << ',' << g.start.y << ','
        << to_string(g.done) << ',' << g.reward << ',' << g.steps << ',' << g.length << ',' << g.h << ',' << g.v << ','
        << g.c << ',' << g.combined() << ',' << g.freq(g.h) << ',' << g.freq(g.v) << ',' << g.freq(g.c) << ','
        << g.freq(g.combined()) << '\n';
    if (!report.games.empty()) {
      for (std::size_t e = 0; e < report.per_experiment.size() && report.per_experiment.size() > 1; ++e) {
        write_summary_row(f, "experiment_mean", std::to_string(e), report.per_experiment[e], false);
        write_summary_row(f, "experiment_std", std::to_string(e), report.per_experiment[e], true);
      }
      write_summary_row(f, "mean", "", report.summary, false);
      write_summary_row(f, "std", "", report.summary, true);
    }
    if (!f) throw std::runtime_error("write failed: report.csv");
  }
  {
    auto f = open("trajectories.csv");
    std::size_t n_flags = 0;
    for (const auto& g : report.games)
      if (!g.trajectory.empty()) n_flags = std::max(n_flags, g.trajectory.front().viol.size());
    f << "experiment,ep,t,bx,by";
    for (std::size_t i = 0; i < n_flags; ++i) f << ",viol_" << i;
    f << '\n';
    for (const auto& g : report.games)
      for (const auto& p : g.trajectory) {
        f << g.experiment << ',' << g.game << ',' << p.t << ',' << p.bx << ',' << p.by;
        for (bool v : p.viol) f << ',' << (v ? 1 : 0);
        f << '\n';
      }
    if (!f) throw std::runtime_error("write failed: trajectories.csv");
  }
  {
    auto f = open("summary.json");
    f << summary_to_json(report).dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed: summary.json");
  }
}

std::string format_report_table(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  const auto& s = r.summary;
  auto cell = [](const MeanStd& m) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(3) << m.mean << "+-" << m.std;
    return c.str();
  };
  os << "setting " << r.setting << ", " << r.games.size() << " games, " << r.per_experiment.size()
     << " experiment(s)\n";
  const std::pair<const char*, const MeanStd*> rows[] = {
      {"Rwd", &s.reward},   {"H", &s.h},         {"V", &s.v},         {"C", &s.c},
      {"combined", &s.combined}, {"F(H)", &s.f_h}, {"F(V)", &s.f_v}, {"F(C)", &s.f_c},
      {"F(combined)", &s.f_combined}, {"Length", &s.length}, {"Steps", &s.steps}, {"goal rate", &s.goal_rate}};
  for (const auto& [name, m] : rows) os << std::left << std::setw(12) << name << ' ' << cell(*m) << '\n';
  if (r.mode_coverage)
    os << std::left << std::setw(12) << "modes" << " left " << r.mode_coverage->left_share() << " right "
       << r.mode_coverage->right_share() << " (unclassified " << r.mode_coverage->unclassified << ")\n";
  return os.str();
}

}  // namespace scopil
