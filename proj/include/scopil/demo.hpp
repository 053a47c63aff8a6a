#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scopil/env.hpp"
#include "scopil/mlp.hpp"

namespace scopil {

struct DemoRecord {
  int ep = 0;
  int t = 0;
  State s{};
  int a = 0;
  double r = 0.0;
  double bx = 0.0;
  double by = 0.0;
  std::vector<bool> viol;

  friend bool operator==(const DemoRecord&, const DemoRecord&) = default;
};

struct DemoSet {
  std::string setting;
  std::string provenance = "scripted";  // "human" or "scripted"
  std::uint64_t seed = 0;
  std::string constraints_digest;
  std::vector<DemoRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  /// [begin, end) record ranges, one per episode, in file order.
  std::vector<std::pair<std::size_t, std::size_t>> episodes() const;

  friend bool operator==(const DemoSet&, const DemoSet&) = default;
};

struct DemoLineError {
  std::size_t line = 0;  // 1-based; line 1 is the header
  std::string message;
};

class DemoLoadError : public std::runtime_error {
 public:
  explicit DemoLoadError(std::vector<DemoLineError> errors);
  const std::vector<DemoLineError>& errors() const { return errors_; }

 private:
  std::vector<DemoLineError> errors_;
};

/// JSONL: one header object, then one record object per line. Every
/// offending line is reported, not just the first.
DemoSet parse_demos(std::istream& in);
DemoSet load_demos(const std::filesystem::path& path);
void write_demos(std::ostream& out, const DemoSet& demos);
void save_demos(const std::filesystem::path& path, const DemoSet& demos);
std::string demo_header_line(const DemoSet& demos);
std::string demo_record_line(const DemoRecord& r);

/// Returns the invariant breaches as line errors (empty when valid). Line
/// numbers assume the layout written by write_demos.
std::vector<DemoLineError> validate_demos(const DemoSet& demos);

template <typename T>
struct DemoBatch {
  net::Matrix<T> s;  // 8 x n
  std::vector<int> a;

  Eigen::Index size() const { return s.cols(); }
};

/// n pairs drawn uniformly with replacement.
DemoBatch<float> sample_batch(const DemoSet& demos, std::size_t n, std::mt19937_64& rng);

template <typename T>
DemoBatch<T> all_pairs(const DemoSet& demos) {
  DemoBatch<T> b;
  b.s.resize(kStateDim, static_cast<Eigen::Index>(demos.size()));
  b.a.resize(demos.size());
  for (std::size_t j = 0; j < demos.size(); ++j) {
    for (int i = 0; i < kStateDim; ++i) b.s(i, static_cast<Eigen::Index>(j)) = static_cast<T>(demos.records[j].s[i]);
    b.a[j] = demos.records[j].a;
  }
  return b;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

MeanStd mean_std(const std::vector<double>& xs);

struct DemoStats {
  std::size_t pairs = 0;
  std::size_t episodes = 0;
  MeanStd reward;  // per-episode sum of de-normalized step rewards
  MeanStd length;  // per-episode path length over recorded ball positions
  MeanStd steps;
};

DemoStats demo_stats(const DemoSet& demos, double reward_min = -5.0, double reward_max = 10.0);
std::string format_stats_table(const std::string& name, const DemoStats& s);

/// Machine demonstrations from the scripted expert. For "two-modes" every
/// spawn is played twice, detouring left then right. Failed games are
/// discarded and resampled; gives up after 10 * n_games attempts.
DemoSet scripted_demos(const EnvConfig& cfg, int n_games, std::uint64_t seed);

/// Raw spawn positions (first record of every episode).
std::vector<Vec2> episode_starts(const DemoSet& demos);

}  // namespace scopil
