#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scopil {

inline constexpr int kStateDim = 8;
inline constexpr int kNumActions = 9;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }

enum class ConstraintKind { HLine, VLine, Circle };

/// Geometric constraint. A ball position on the violating side (strictly) or
/// strictly inside the circle is a violation.
struct ConstraintSpec {
  enum class Side { Above, Below, Left, Right };

  ConstraintKind kind = ConstraintKind::Circle;
  double level = 0.0;  // y for HLine, x for VLine
  Side side = Side::Below;
  Vec2 center;  // Circle
  double radius = 0.0;
  char label = 'C';  // 'H', 'V' or 'C'

  static ConstraintSpec hline(double y, Side violating_side);
  static ConstraintSpec vline(double x, Side violating_side);
  static ConstraintSpec circle(Vec2 center, double radius);

  bool violated_by(Vec2 ball) const;
};

struct Rect {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  bool contains(Vec2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
};

struct Bounds {
  double min = -1.0;
  double max = 1.0;
};

struct EnvConfig {
  EnvConfig() { set_default_norm_bounds(); }

  std::string setting = "simple";
  double board_half_extent = 150.0;
  Vec2 hole_center{0.0, -75.0};
  double hole_capture_radius = 15.0;
  double gravity_gain = 600.0;   // ball acceleration per radian of tilt
  double friction = 0.6;         // linear damping, 1/time
  double restitution = 0.5;
  double tilt_increment = 0.3;   // rad/time added to angular velocity per substep
  double omega_decay = 0.6;      // multiplier on angular velocity when the command is zero
  double max_tilt = 0.25;
  double max_omega = 1.5;
  double v_max = 300.0;          // velocity normalization bound
  double substep_dt = 0.02;
  int substeps_per_action = 5;
  int max_steps = 200;
  std::array<Bounds, kStateDim> norm_bounds{};
  double reward_min = -5.0;
  double reward_max = 10.0;
  double goal_reward = 10.0;
  double timeout_reward = -5.0;
  std::vector<ConstraintSpec> constraints;
  Rect start_region{-100.0, 100.0, 90.0, 130.0};
  // When false every timestep spent in violation counts as an event instead
  // of only entries.
  bool count_entry_events = true;

  /// Fills norm_bounds from the physical limits.
  void set_default_norm_bounds();
  /// Throws std::invalid_argument listing the first broken invariant.
  void validate() const;
  double max_distance() const;
};

struct RawState {
  double bx = 0.0, by = 0.0;
  double vx = 0.0, vy = 0.0;
  double rx = 0.0, ry = 0.0;
  double rvx = 0.0, rvy = 0.0;
  int t = 0;

  Vec2 ball() const { return {bx, by}; }
  std::array<double, kStateDim> as_array() const { return {bx, by, vx, vy, rx, ry, rvx, rvy}; }
};

bool operator==(const RawState& a, const RawState& b);

using State = std::array<double, kStateDim>;

/// Per-axis board command in {-1, 0, +1}.
struct Commands {
  int cx = 0;
  int cy = 0;
};

/// Joint action id 0..8. The vertical component (NoMove/Up/Down) drives the
/// y axis, the horizontal one (NoMove/TurnLeft/TurnRight) drives x.
class ActionId {
 public:
  constexpr ActionId() = default;
  explicit ActionId(int id);

  constexpr int value() const { return id_; }
  Commands decode() const;
  static ActionId encode(Commands c);

  friend constexpr bool operator==(ActionId a, ActionId b) { return a.id_ == b.id_; }

 private:
  int id_ = 0;
};

enum class DoneKind { Running, Goal, Timeout };

const char* to_string(DoneKind d);

struct StepResult {
  State next_state{};
  RawState raw;
  double reward = 0.0;
  DoneKind done = DoneKind::Running;
  std::vector<bool> violation_events;
  std::vector<bool> violation_active;
};

class EpisodeFinished : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

RawState physics_substep(const RawState& raw, Commands commands, const EnvConfig& cfg);
double compute_reward(const RawState& raw, DoneKind done, const EnvConfig& cfg);
double raw_reward(const RawState& raw, DoneKind done, const EnvConfig& cfg);
double normalize_reward(double raw, const EnvConfig& cfg);
double denormalize_reward(double normalized, const EnvConfig& cfg);
State normalize_state(const RawState& raw, const EnvConfig& cfg);
/// Inverse of normalize_state; t is left at zero.
RawState denormalize_state(const State& s, const EnvConfig& cfg);
std::vector<bool> detect_violations(Vec2 ball, const std::vector<ConstraintSpec>& constraints);

/// Tilting-board maze. Single-threaded; independent instances share nothing.
class MazeEnv {
 public:
  explicit MazeEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  const RawState& raw() const { return raw_; }
  State state() const { return normalize_state(raw_, cfg_); }
  bool finished() const { return done_ != DoneKind::Running; }
  DoneKind done() const { return done_; }
  const std::vector<bool>& violation_active() const { return active_; }

  /// Samples a spawn in start_region. Without a seed the internal generator
  /// continues its stream.
  State reset(std::optional<std::uint64_t> seed = std::nullopt);
  /// Starts an episode from a given ball position at rest.
  State reset_to(Vec2 ball);
  StepResult step(ActionId action);

  /// Violation events raised by the reset state itself.
  const std::vector<bool>& initial_events() const { return initial_events_; }

 private:
  void begin_episode();

  EnvConfig cfg_;
  RawState raw_;
  DoneKind done_ = DoneKind::Timeout;
  std::vector<bool> active_;
  std::vector<bool> initial_events_;
  std::mt19937_64 rng_;
};

}  // namespace scopil
