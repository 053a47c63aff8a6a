#include "scopil/demo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "scopil/expert.hpp"
#include "scopil/presets.hpp"
#include "scopil/seeding.hpp"

namespace scopil {

using nlohmann::json;

std::vector<std::pair<std::size_t, std::size_t>> DemoSet::episodes() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].ep != records[begin].ep) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

namespace {

std::string join_errors(const std::vector<DemoLineError>& errors) {
  std::ostringstream os;
  os << "invalid demonstration file (" << errors.size() << " error" << (errors.size() == 1 ? "" : "s") << ")";
  for (const auto& e : errors) os << "\n  line " << e.line << ": " << e.message;
  return os.str();
}

}  // namespace

DemoLoadError::DemoLoadError(std::vector<DemoLineError> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

namespace {

// Structural checks on a single record; appends messages to `why`.
bool parse_record(const json& j, DemoRecord& r, std::vector<std::string>& why) {
  if (!j.is_object()) {
    why.push_back("record is not a JSON object");
    return false;
  }
  auto int_field = [&](const char* key, int& out) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) {
      why.push_back(std::string("missing or non-integer \"") + key + "\"");
      return;
    }
    out = j.at(key).get<int>();
  };
  auto num_field = [&](const char* key, double& out) {
    if (!j.contains(key) || !j.at(key).is_number()) {
      why.push_back(std::string("missing or non-numeric \"") + key + "\"");
      return;
    }
    out = j.at(key).get<double>();
  };
  const std::size_t before = why.size();
  int_field("ep", r.ep);
  int_field("t", r.t);
  int_field("a", r.a);
  num_field("r", r.r);
  num_field("bx", r.bx);
  num_field("by", r.by);
  if (!j.contains("s") || !j.at("s").is_array() || j.at("s").size() != kStateDim) {
    why.push_back("\"s\" must be an array of 8 numbers");
  } else {
    for (int i = 0; i < kStateDim; ++i) {
      if (!j.at("s").at(i).is_number()) {
        why.push_back("\"s\" must be an array of 8 numbers");
        break;
      }
      r.s[i] = j.at("s").at(i).get<double>();
    }
  }
  if (!j.contains("viol") || !j.at("viol").is_array()) {
    why.push_back("\"viol\" must be an array of booleans");
  } else {
    r.viol.clear();
    for (const auto& v : j.at("viol")) {
      if (!v.is_boolean()) {
        why.push_back("\"viol\" must be an array of booleans");
        break;
      }
      r.viol.push_back(v.get<bool>());
    }
  }
  return why.size() == before;
}

void check_record_values(const DemoRecord& r, std::vector<std::string>& why) {
  if (r.a < 0 || r.a >= kNumActions) why.push_back("action id " + std::to_string(r.a) + " outside 0..8");
  for (int i = 0; i < kStateDim; ++i)
    if (!std::isfinite(r.s[i]) || r.s[i] < -1.0 || r.s[i] > 1.0) {
      why.push_back("state component " + std::to_string(i) + " outside [-1,1]");
      break;
    }
  if (!std::isfinite(r.r) || r.r < -1.0 || r.r > 0.0) why.push_back("reward outside [-1,0]");
  if (!std::isfinite(r.bx) || !std::isfinite(r.by)) why.push_back("non-finite ball position");
  if (r.t < 0) why.push_back("negative timestep");
}

// Cross-record checks: contiguity, monotone t, consistent violation arity.
void check_sequence(const std::vector<DemoRecord>& recs, const std::vector<std::size_t>& lines,
                    std::vector<DemoLineError>& errors) {
  std::vector<int> seen_eps;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    const bool same_ep = i > 0 && recs[i - 1].ep == r.ep;
    if (!same_ep) {
      if (std::find(seen_eps.begin(), seen_eps.end(), r.ep) != seen_eps.end())
        errors.push_back({lines[i], "episode " + std::to_string(r.ep) + " is not contiguous"});
      seen_eps.push_back(r.ep);
    } else if (r.t <= recs[i - 1].t) {
      errors.push_back({lines[i], "timestep " + std::to_string(r.t) + " does not increase within episode " +
                                      std::to_string(r.ep)});
    }
    if (i > 0 && r.viol.size() != recs[0].viol.size())
      errors.push_back({lines[i], "violation flag count differs from the first record"});
  }
}

}  // namespace

DemoSet parse_demos(std::istream& in) {
  DemoSet d;
  std::vector<DemoLineError> errors;
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      errors.push_back({lineno, std::string("malformed JSON: ") + e.what()});
      if (!have_header) have_header = true;
      continue;
    }
    if (!have_header) {
      have_header = true;
      const bool ok = j.is_object() && j.contains("setting") && j.at("setting").is_string() &&
                      j.contains("provenance") && j.at("provenance").is_string() && j.contains("seed") &&
                      j.at("seed").is_number_unsigned() && j.contains("constraints_digest") &&
                      j.at("constraints_digest").is_string();
      if (!ok) {
        errors.push_back({lineno, "header must carry setting, provenance, seed and constraints_digest"});
        continue;
      }
      d.setting = j.at("setting").get<std::string>();
      d.provenance = j.at("provenance").get<std::string>();
      d.seed = j.at("seed").get<std::uint64_t>();
      d.constraints_digest = j.at("constraints_digest").get<std::string>();
      continue;
    }
    DemoRecord r;
    std::vector<std::string> why;
    if (parse_record(j, r, why)) check_record_values(r, why);
    for (auto& w : why) errors.push_back({lineno, std::move(w)});
    if (why.empty()) {
      d.records.push_back(std::move(r));
      lines.push_back(lineno);
    }
  }
  if (!have_header) errors.push_back({1, "empty file: missing header"});
  check_sequence(d.records, lines, errors);
  if (!errors.empty()) {
    std::stable_sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) { return a.line < b.line; });
    throw DemoLoadError(std::move(errors));
  }
  return d;
}

DemoSet load_demos(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demonstration file: " + path.string());
  return parse_demos(in);
}

std::string demo_header_line(const DemoSet& d) {
  json h = {{"setting", d.setting}, {"provenance", d.provenance}, {"seed", d.seed},
            {"constraints_digest", d.constraints_digest}};
  return h.dump();
}

std::string demo_record_line(const DemoRecord& r) {
  json j = {{"ep", r.ep}, {"t", r.t}, {"s", r.s}, {"a", r.a}, {"r", r.r}, {"bx", r.bx}, {"by", r.by}, {"viol", r.viol}};
  return j.dump();
}

void write_demos(std::ostream& out, const DemoSet& d) {
  out << demo_header_line(d) << '\n';
  for (const auto& r : d.records) out << demo_record_line(r) << '\n';
}

void save_demos(const std::filesystem::path& path, const DemoSet& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write demonstration file: " + path.string());
  write_demos(out, d);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<DemoLineError> validate_demos(const DemoSet& d) {
  std::vector<DemoLineError> errors;
  std::vector<std::size_t> lines(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    lines[i] = i + 2;
    std::vector<std::string> why;
    check_record_values(d.records[i], why);
    for (auto& w : why) errors.push_back({i + 2, std::move(w)});
  }
  check_sequence(d.records, lines, errors);
  return errors;
}

DemoBatch<float> sample_batch(const DemoSet& demos, std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw std::invalid_argument("sample_batch: n must be positive");
  if (demos.empty()) throw std::invalid_argument("sample_batch: empty demonstration set");
  std::uniform_int_distribution<std::size_t> pick(0, demos.size() - 1);
  DemoBatch<float> b;
  b.s.resize(kStateDim, static_cast<Eigen::Index>(n));
  b.a.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& r = demos.records[pick(rng)];
    for (int i = 0; i < kStateDim; ++i) b.s(i, static_cast<Eigen::Index>(j)) = static_cast<float>(r.s[i]);
    b.a[j] = r.a;
  }
  return b;
}

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

DemoStats demo_stats(const DemoSet& demos, double reward_min, double reward_max) {
  DemoStats st;
  st.pairs = demos.size();
  std::vector<double> rewards, lengths, steps;
  for (const auto& [b, e] : demos.episodes()) {
    double reward = 0.0;
    double length = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      reward += demos.records[i].r * (reward_max - reward_min) + reward_max;
      if (i > b)
        length += std::hypot(demos.records[i].bx - demos.records[i - 1].bx, demos.records[i].by - demos.records[i - 1].by);
    }
    rewards.push_back(reward);
    lengths.push_back(length);
    steps.push_back(static_cast<double>(e - b));
  }
  st.episodes = rewards.size();
  st.reward = mean_std(rewards);
  st.length = mean_std(lengths);
  st.steps = mean_std(steps);
  return st;
}

std::string format_stats_table(const std::string& name, const DemoStats& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(28) << "Demonstrations set" << " | " << std::setw(8) << "Pairs" << " | "
     << std::setw(16) << "Reward" << " | " << std::setw(16) << "Length" << " | " << "Steps\n";
  os << std::string(28, '-') << "-+-" << std::string(8, '-') << "-+-" << std::string(16, '-') << "-+-"
     << std::string(16, '-') << "-+-" << std::string(16, '-') << '\n';
  auto cell = [](const MeanStd& m) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(2) << m.mean << "+-" << m.std;
    return c.str();
  };
  os << std::setw(28) << name << " | " << std::setw(8) << s.pairs << " | " << std::setw(16) << cell(s.reward) << " | "
     << std::setw(16) << cell(s.length) << " | " << cell(s.steps) << '\n';
  return os.str();
}

namespace {

struct PlayedGame {
  std::vector<DemoRecord> records;
  bool goal = false;
};

PlayedGame play(MazeEnv& env, ScriptedExpert& expert, Vec2 spawn) {
  PlayedGame g;
  env.reset_to(spawn);
  while (!env.finished()) {
    DemoRecord r;
    r.t = env.raw().t;
    r.s = env.state();
    r.bx = env.raw().bx;
    r.by = env.raw().by;
    r.viol = env.violation_active();
    const ActionId a = expert.act(r.s, env.raw());
    r.a = a.value();
    const StepResult res = env.step(a);
    r.r = res.reward;
    g.records.push_back(std::move(r));
  }
  g.goal = env.done() == DoneKind::Goal;
  return g;
}

Vec2 sample_spawn(const EnvConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(cfg.start_region.x_min, cfg.start_region.x_max);
  std::uniform_real_distribution<double> uy(cfg.start_region.y_min, cfg.start_region.y_max);
  const double x = ux(rng);
  return {x, uy(rng)};
}

}  // namespace

DemoSet scripted_demos(const EnvConfig& cfg, int n_games, std::uint64_t seed) {
  if (n_games <= 0) throw std::invalid_argument("scripted_demos: n_games must be positive");
  DemoSet d;
  d.setting = cfg.setting;
  d.provenance = "scripted";
  d.seed = seed;
  d.constraints_digest = constraints_digest(cfg.constraints);
  MazeEnv env(cfg);
  ScriptedExpert expert(cfg);
  const bool two_modes = cfg.setting == "two-modes";
  const int max_attempts = 10 * n_games;
  int games = 0;
  int attempts = 0;
  auto append = [&](PlayedGame& g) {
    for (auto& r : g.records) {
      r.ep = games;
      d.records.push_back(std::move(r));
    }
    ++games;
  };
  while (games < n_games) {
    if (attempts >= max_attempts)
      throw std::runtime_error("scripted expert produced only " + std::to_string(games) + " of " +
                               std::to_string(n_games) + " successful games in " + std::to_string(max_attempts) +
                               " attempts");
    const Vec2 spawn = sample_spawn(cfg, derive_seed(seed, static_cast<std::uint64_t>(attempts)));
    if (two_modes) {
      attempts += 2;
      expert.set_side(DetourSide::Left);
      PlayedGame left = play(env, expert, spawn);
      expert.set_side(DetourSide::Right);
      PlayedGame right = play(env, expert, spawn);
      if (!left.goal || !right.goal) continue;
      append(left);
      if (games < n_games) append(right);
    } else {
      attempts += 1;
      PlayedGame g = play(env, expert, spawn);
      if (g.goal) append(g);
    }
  }
  return d;
}

std::vector<Vec2> episode_starts(const DemoSet& demos) {
  std::vector<Vec2> out;
  for (const auto& [b, e] : demos.episodes()) out.push_back({demos.records[b].bx, demos.records[b].by});
  (void)0;
  return out;
}

}  // namespace scopil
