#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "scopil/env.hpp"
#include "scopil/policy.hpp"

namespace scopil {

enum class DetourSide { Auto, Left, Right };

struct ExpertTuning {
  double waypoint_margin = 30.0;  // waypoint offset beyond a circle's radius
  double clear_margin = 15.0;     // a segment is clear if it stays this far outside every circle
  int ring_points = 12;           // detour points per circle
  double wall_margin = 10.0;
  int horizon = 8;                // lookahead steps (chosen action, then zero commands)
  double violation_penalty = 1000.0;
};

/// Waypoint controller standing in for a human demonstrator.
///
/// The target is the hole whenever the straight segment to it is clear of
/// every constraint; otherwise it is the first point of the shortest clear
/// polyline through detour points placed on a ring around each circle.
/// Forcing a side drops the ring points on the other side of each circle
/// (relative to the line from the circle centre to the hole). Each action is the
/// one of the 9 whose simulated lookahead keeps the ball closest (on average)
/// to the current target without entering a constraint region. Actions are a
/// pure function of the raw state and the forced side.
class ScriptedExpert : public Policy {
 public:
  explicit ScriptedExpert(EnvConfig cfg, ExpertTuning tuning = {});

  void set_side(DetourSide side);
  DetourSide side() const { return side_; }

  Vec2 waypoint(const RawState& raw) const;
  ActionId act(const State& s, const RawState& raw) override;

 private:
  double rollout_cost(const RawState& start, Commands first, Vec2 target, bool target_is_hole) const;
  bool segment_clear(Vec2 a, Vec2 b) const;
  void build_graph();

  EnvConfig cfg_;
  ExpertTuning tuning_;
  DetourSide side_ = DetourSide::Auto;
  std::vector<Vec2> nodes_;     // detour points on rings around the circles
  std::vector<double> to_hole_;  // shortest clear-path length from each node
};

/// Signed side of `p` relative to the line from `center` towards `hole`:
/// -1 for left, +1 for right (ties count as left).
int detour_side(Vec2 p, Vec2 center, Vec2 hole);

}  // namespace scopil
