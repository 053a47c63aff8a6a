#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scopil/demo.hpp"
#include "scopil/env.hpp"
#include "scopil/policy.hpp"

namespace scopil {

struct TrajectoryPoint {
  int t = 0;
  double bx = 0.0, by = 0.0;
  std::vector<bool> viol;  // active flags
};

struct GameResult {
  std::size_t experiment = 0;
  std::size_t game = 0;
  std::uint64_t seed = 0;  // spawn seed, or the experiment seed when starting from demos
  Vec2 start;
  DoneKind done = DoneKind::Running;
  double reward = 0.0;  // de-normalized return
  int steps = 0;
  double length = 0.0;
  int h = 0, v = 0, c = 0;  // violation events per label
  std::vector<TrajectoryPoint> trajectory;  // steps + 1 points

  int combined() const { return h + v + c; }
  double freq(int count) const { return steps > 0 ? static_cast<double>(count) / steps : 0.0; }
};

/// Mean +- population std of each metric.
struct MetricSummary {
  MeanStd reward, h, v, c, combined, f_h, f_v, f_c, f_combined, length, steps, goal_rate;

  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

struct ModeCoverage {
  int left = 0, right = 0, unclassified = 0;
  double left_share() const { return left + right > 0 ? static_cast<double>(left) / (left + right) : 0.0; }
  double right_share() const { return left + right > 0 ? static_cast<double>(right) / (left + right) : 0.0; }
};

struct EvalReport {
  std::string setting;
  std::vector<GameResult> games;
  /// One entry per experiment, each macro-averaged over its games.
  std::vector<MetricSummary> per_experiment;
  /// Mean over experiments; the std is across experiment means when there
  /// are several experiments and across games otherwise.
  MetricSummary summary;
  std::optional<ModeCoverage> mode_coverage;
};

struct EvalOptions {
  int n_games = 40;
  std::vector<std::uint64_t> seeds{0};  // one experiment per seed
  const DemoSet* demos = nullptr;       // start from demo initial states when set
};

/// Plays n_games per seed. The policy receives begin_episode(derive_seed(seed,
/// game)) before each game, so sampling policies are reproducible.
EvalReport evaluate(Policy& policy, const EnvConfig& cfg, const EvalOptions& opt = {});

/// Treats every report as one experiment (e.g. independently trained runs).
EvalReport merge_reports(const std::vector<EvalReport>& reports);

/// Rebuilds per_experiment and summary from the games.
void summarize(EvalReport& report, std::size_t n_experiments);

MetricSummary summarize_games(const std::vector<const GameResult*>& games);

/// Side of the circle each ball path passes, judged at its closest approach
/// to the centre (left/right as seen with the hole beyond the circle). Paths
/// that never enter the circle's y-band are unclassified.
ModeCoverage mode_coverage(const std::vector<std::vector<Vec2>>& paths, const ConstraintSpec& circle, Vec2 hole);
ModeCoverage mode_coverage(const EvalReport& report, const ConstraintSpec& circle, Vec2 hole);
ModeCoverage mode_coverage(const DemoSet& demos, const ConstraintSpec& circle, Vec2 hole);

/// Writes report.csv, trajectories.csv and summary.json into dir.
void export_report(const EvalReport& report, const std::filesystem::path& dir);
nlohmann::json summary_to_json(const EvalReport& report);
MetricSummary summary_from_json(const nlohmann::json& j);
MetricSummary read_summary(const std::filesystem::path& summary_json);

std::string format_report_table(const EvalReport& report);

}  // namespace scopil
