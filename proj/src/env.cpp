#include "scopil/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scopil {

ConstraintSpec ConstraintSpec::hline(double y, Side violating_side) {
  if (violating_side != Side::Above && violating_side != Side::Below)
    throw std::invalid_argument("hline side must be above or below");
  ConstraintSpec c;
  c.kind = ConstraintKind::HLine;
  c.level = y;
  c.side = violating_side;
  c.label = 'H';
  return c;
}

ConstraintSpec ConstraintSpec::vline(double x, Side violating_side) {
  if (violating_side != Side::Left && violating_side != Side::Right)
    throw std::invalid_argument("vline side must be left or right");
  ConstraintSpec c;
  c.kind = ConstraintKind::VLine;
  c.level = x;
  c.side = violating_side;
  c.label = 'V';
  return c;
}

ConstraintSpec ConstraintSpec::circle(Vec2 center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("circle radius must be positive");
  ConstraintSpec c;
  c.kind = ConstraintKind::Circle;
  c.center = center;
  c.radius = radius;
  c.label = 'C';
  return c;
}

bool ConstraintSpec::violated_by(Vec2 ball) const {
  switch (kind) {
    case ConstraintKind::HLine:
      return side == Side::Below ? ball.y < level : ball.y > level;
    case ConstraintKind::VLine:
      return side == Side::Left ? ball.x < level : ball.x > level;
    case ConstraintKind::Circle: {
      const double dx = ball.x - center.x;
      const double dy = ball.y - center.y;
      return dx * dx + dy * dy < radius * radius;
    }
  }
  return false;
}

void EnvConfig::set_default_norm_bounds() {
  const double h = board_half_extent;
  norm_bounds = {Bounds{-h, h},           Bounds{-h, h},
                 Bounds{-v_max, v_max},   Bounds{-v_max, v_max},
                 Bounds{-max_tilt, max_tilt}, Bounds{-max_tilt, max_tilt},
                 Bounds{-max_omega, max_omega}, Bounds{-max_omega, max_omega}};
}

double EnvConfig::max_distance() const { return 2.0 * std::sqrt(2.0) * board_half_extent; }

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid EnvConfig: " + what);
}

bool inside_board(Vec2 p, double h) { return std::abs(p.x) <= h && std::abs(p.y) <= h; }

}  // namespace

void EnvConfig::validate() const {
  const double h = board_half_extent;
  require(h > 0.0, "board_half_extent must be > 0");
  require(substep_dt > 0.0, "substep_dt must be > 0");
  require(substeps_per_action >= 1, "substeps_per_action must be >= 1");
  require(max_steps >= 1, "max_steps must be >= 1");
  require(reward_min < reward_max, "reward_min must be < reward_max");
  require(hole_capture_radius > 0.0, "hole_capture_radius must be > 0");
  require(restitution >= 0.0 && restitution <= 1.0, "restitution must lie in [0,1]");
  require(omega_decay >= 0.0 && omega_decay <= 1.0, "omega_decay must lie in [0,1]");
  require(max_tilt > 0.0 && max_omega > 0.0 && v_max > 0.0, "tilt/omega/velocity limits must be > 0");
  require(friction >= 0.0, "friction must be >= 0");
  for (int i = 0; i < kStateDim; ++i)
    require(norm_bounds[i].min < norm_bounds[i].max, "norm_bounds[" + std::to_string(i) + "] min must be < max");
  require(inside_board(hole_center, h), "hole lies outside the board");
  require(start_region.x_min <= start_region.x_max && start_region.y_min <= start_region.y_max,
          "start_region is empty");
  require(inside_board({start_region.x_min, start_region.y_min}, h) &&
              inside_board({start_region.x_max, start_region.y_max}, h),
          "start_region lies outside the board");
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const auto& c = constraints[i];
    const std::string idx = "constraint " + std::to_string(i);
    switch (c.kind) {
      case ConstraintKind::HLine:
        require(c.label == 'H', idx + ": hline must carry label H");
        require(std::abs(c.level) <= h, idx + ": level outside board");
        require(c.side == ConstraintSpec::Side::Above || c.side == ConstraintSpec::Side::Below,
                idx + ": bad side");
        break;
      case ConstraintKind::VLine:
        require(c.label == 'V', idx + ": vline must carry label V");
        require(std::abs(c.level) <= h, idx + ": level outside board");
        require(c.side == ConstraintSpec::Side::Left || c.side == ConstraintSpec::Side::Right,
                idx + ": bad side");
        break;
      case ConstraintKind::Circle:
        require(c.label == 'C', idx + ": circle must carry label C");
        require(c.radius > 0.0, idx + ": radius must be > 0");
        require(inside_board(c.center, h), idx + ": center outside board");
        break;
    }
  }
}

bool operator==(const RawState& a, const RawState& b) {
  return a.as_array() == b.as_array() && a.t == b.t;
}

ActionId::ActionId(int id) : id_(id) {
  if (id < 0 || id >= kNumActions) throw std::out_of_range("action id out of range: " + std::to_string(id));
}

Commands ActionId::decode() const {
  // vertical: 0 NoMove, 1 Up, 2 Down ; horizontal: 0 NoMove, 1 TurnLeft, 2 TurnRight
  static constexpr int kSign[3] = {0, 1, -1};
  static constexpr int kTurn[3] = {0, -1, 1};
  return Commands{kTurn[id_ % 3], kSign[id_ / 3]};
}

ActionId ActionId::encode(Commands c) {
  if (c.cx < -1 || c.cx > 1 || c.cy < -1 || c.cy > 1) throw std::out_of_range("command outside {-1,0,1}");
  const int vertical = c.cy == 0 ? 0 : (c.cy > 0 ? 1 : 2);
  const int horizontal = c.cx == 0 ? 0 : (c.cx < 0 ? 1 : 2);
  return ActionId(vertical * 3 + horizontal);
}

const char* to_string(DoneKind d) {
  switch (d) {
    case DoneKind::Goal: return "goal";
    case DoneKind::Timeout: return "timeout";
    case DoneKind::Running: return "running";
  }
  return "running";
}

namespace {

struct Axis {
  double pos, vel, angle, omega;
};

void integrate_axis(Axis& a, int command, const EnvConfig& cfg) {
  const double dt = cfg.substep_dt;
  const double base = command == 0 ? a.omega * cfg.omega_decay : a.omega;
  a.omega = std::clamp(base + command * cfg.tilt_increment, -cfg.max_omega, cfg.max_omega);
  a.angle = std::clamp(a.angle + a.omega * dt, -cfg.max_tilt, cfg.max_tilt);
  const double accel = -cfg.gravity_gain * a.angle;
  a.vel = (a.vel + accel * dt) * (1.0 - cfg.friction * dt);
  a.pos += a.vel * dt;
  const double h = cfg.board_half_extent;
  if (a.pos > h) {
    a.pos = h;
    if (a.vel > 0.0) a.vel = -cfg.restitution * a.vel;
  } else if (a.pos < -h) {
    a.pos = -h;
    if (a.vel < 0.0) a.vel = -cfg.restitution * a.vel;
  }
}

bool captured(Vec2 ball, const EnvConfig& cfg) {
  const double dx = ball.x - cfg.hole_center.x;
  const double dy = ball.y - cfg.hole_center.y;
  return dx * dx + dy * dy < cfg.hole_capture_radius * cfg.hole_capture_radius;
}

}  // namespace

RawState physics_substep(const RawState& raw, Commands commands, const EnvConfig& cfg) {
  Axis x{raw.bx, raw.vx, raw.rx, raw.rvx};
  Axis y{raw.by, raw.vy, raw.ry, raw.rvy};
  integrate_axis(x, commands.cx, cfg);
  integrate_axis(y, commands.cy, cfg);
  RawState out = raw;
  out.bx = x.pos;
  out.vx = x.vel;
  out.rx = x.angle;
  out.rvx = x.omega;
  out.by = y.pos;
  out.vy = y.vel;
  out.ry = y.angle;
  out.rvy = y.omega;
  return out;
}

double raw_reward(const RawState& raw, DoneKind done, const EnvConfig& cfg) {
  switch (done) {
    case DoneKind::Goal: return cfg.goal_reward;
    case DoneKind::Timeout: return cfg.timeout_reward;
    case DoneKind::Running: break;
  }
  const double dx = raw.bx - cfg.hole_center.x;
  const double dy = raw.by - cfg.hole_center.y;
  return -std::sqrt(dx * dx + dy * dy) / cfg.max_distance();
}

double normalize_reward(double raw, const EnvConfig& cfg) {
  return (raw - cfg.reward_max) / (cfg.reward_max - cfg.reward_min);
}

double denormalize_reward(double normalized, const EnvConfig& cfg) {
  return normalized * (cfg.reward_max - cfg.reward_min) + cfg.reward_max;
}

double compute_reward(const RawState& raw, DoneKind done, const EnvConfig& cfg) {
  return std::clamp(normalize_reward(raw_reward(raw, done, cfg), cfg), -1.0, 0.0);
}

State normalize_state(const RawState& raw, const EnvConfig& cfg) {
  const auto v = raw.as_array();
  State s{};
  for (int i = 0; i < kStateDim; ++i) {
    const auto [lo, hi] = cfg.norm_bounds[i];
    s[i] = std::clamp(2.0 * (v[i] - lo) / (hi - lo) - 1.0, -1.0, 1.0);
  }
  return s;
}

RawState denormalize_state(const State& s, const EnvConfig& cfg) {
  std::array<double, kStateDim> v{};
  for (int i = 0; i < kStateDim; ++i) {
    const auto [lo, hi] = cfg.norm_bounds[i];
    v[i] = lo + (s[i] + 1.0) * 0.5 * (hi - lo);
  }
  RawState r;
  r.bx = v[0];
  r.by = v[1];
  r.vx = v[2];
  r.vy = v[3];
  r.rx = v[4];
  r.ry = v[5];
  r.rvx = v[6];
  r.rvy = v[7];
  return r;
}

std::vector<bool> detect_violations(Vec2 ball, const std::vector<ConstraintSpec>& constraints) {
  std::vector<bool> out(constraints.size());
  for (std::size_t i = 0; i < constraints.size(); ++i) out[i] = constraints[i].violated_by(ball);
  return out;
}

MazeEnv::MazeEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  active_.assign(cfg_.constraints.size(), false);
  initial_events_ = active_;
}

State MazeEnv::reset(std::optional<std::uint64_t> seed) {
  if (seed) rng_.seed(*seed);
  std::uniform_real_distribution<double> ux(cfg_.start_region.x_min, cfg_.start_region.x_max);
  std::uniform_real_distribution<double> uy(cfg_.start_region.y_min, cfg_.start_region.y_max);
  const double x = ux(rng_);
  const double y = uy(rng_);
  return reset_to({x, y});
}

State MazeEnv::reset_to(Vec2 ball) {
  raw_ = RawState{};
  raw_.bx = ball.x;
  raw_.by = ball.y;
  begin_episode();
  return state();
}

void MazeEnv::begin_episode() {
  done_ = DoneKind::Running;
  active_ = detect_violations(raw_.ball(), cfg_.constraints);
  initial_events_ = active_;
}

StepResult MazeEnv::step(ActionId action) {
  if (finished()) throw EpisodeFinished("step() called on a finished episode; call reset() first");
  const Commands cmd = action.decode();
  bool goal = false;
  for (int i = 0; i < cfg_.substeps_per_action && !goal; ++i) {
    raw_ = physics_substep(raw_, cmd, cfg_);
    goal = captured(raw_.ball(), cfg_);
  }
  raw_.t += 1;
  if (goal)
    done_ = DoneKind::Goal;
  else if (raw_.t >= cfg_.max_steps)
    done_ = DoneKind::Timeout;

  StepResult r;
  r.raw = raw_;
  r.next_state = state();
  r.done = done_;
  r.reward = compute_reward(raw_, done_, cfg_);
  r.violation_active = detect_violations(raw_.ball(), cfg_.constraints);
  r.violation_events.resize(r.violation_active.size());
  for (std::size_t i = 0; i < r.violation_active.size(); ++i)
    r.violation_events[i] = r.violation_active[i] && (!cfg_.count_entry_events || !active_[i]);
  active_ = r.violation_active;
  return r;
}

}  // namespace scopil
