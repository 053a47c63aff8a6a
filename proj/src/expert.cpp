#include "scopil/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scopil {

namespace {

Vec2 sub(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 add(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 scale(Vec2 a, double s) { return {a.x * s, a.y * s}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

Vec2 unit(Vec2 a) {
  const double n = norm(a);
  return n > 0.0 ? scale(a, 1.0 / n) : Vec2{0.0, -1.0};
}

// Perpendicular pointing to the right of the direction `u`.
Vec2 right_of(Vec2 u) { return {-u.y, u.x}; }

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = sub(b, a);
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(sub(p, a), ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(sub(p, add(a, scale(ab, t))));
}

}  // namespace

int detour_side(Vec2 p, Vec2 center, Vec2 hole) {
  const Vec2 u = unit(sub(hole, center));
  return dot(sub(p, center), right_of(u)) > 0.0 ? 1 : -1;
}

ScriptedExpert::ScriptedExpert(EnvConfig cfg, ExpertTuning tuning) : cfg_(std::move(cfg)), tuning_(tuning) {
  cfg_.validate();
  build_graph();
}

void ScriptedExpert::set_side(DetourSide side) {
  if (side == side_) return;
  side_ = side;
  build_graph();
}

bool ScriptedExpert::segment_clear(Vec2 a, Vec2 b) const {
  for (const auto& c : cfg_.constraints) {
    switch (c.kind) {
      case ConstraintKind::Circle:
        if (segment_distance(c.center, a, b) < c.radius + tuning_.clear_margin) return false;
        break;
      case ConstraintKind::HLine:
      case ConstraintKind::VLine:
        if (c.violated_by(a) || c.violated_by(b)) return false;
        break;
    }
  }
  return true;
}

void ScriptedExpert::build_graph() {
  nodes_.clear();
  const Vec2 hole = cfg_.hole_center;
  const double h = cfg_.board_half_extent;
  for (const auto& c : cfg_.constraints) {
    if (c.kind != ConstraintKind::Circle) continue;
    const Vec2 n = right_of(unit(sub(hole, c.center)));
    const double reach = c.radius + tuning_.waypoint_margin;
    for (int k = 0; k < tuning_.ring_points; ++k) {
      const double ang = 2.0 * M_PI * k / tuning_.ring_points;
      const Vec2 q = add(c.center, {reach * std::cos(ang), reach * std::sin(ang)});
      if (std::abs(q.x) > h - tuning_.wall_margin || std::abs(q.y) > h - tuning_.wall_margin) continue;
      const double side = dot(sub(q, c.center), n);
      if (side_ == DetourSide::Left && side > 1e-9) continue;
      if (side_ == DetourSide::Right && side < -1e-9) continue;
      bool ok = true;
      for (const auto& other : cfg_.constraints) {
        if (other.violated_by(q)) ok = false;
        if (other.kind == ConstraintKind::Circle && norm(sub(q, other.center)) < other.radius + tuning_.clear_margin)
          ok = false;
      }
      if (ok) nodes_.push_back(q);
    }
  }
  // Shortest distance from each node to the hole over clear segments.
  const std::size_t n = nodes_.size();
  to_hole_.assign(n, std::numeric_limits<double>::infinity());
  std::vector<bool> done(n, false);
  for (std::size_t i = 0; i < n; ++i)
    if (segment_clear(nodes_[i], hole)) to_hole_[i] = norm(sub(hole, nodes_[i]));
  for (std::size_t iter = 0; iter < n; ++iter) {
    std::size_t u = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i] && std::isfinite(to_hole_[i]) && (u == n || to_hole_[i] < to_hole_[u])) u = i;
    if (u == n) break;
    done[u] = true;
    for (std::size_t v = 0; v < n; ++v) {
      if (done[v]) continue;
      const double d = to_hole_[u] + norm(sub(nodes_[u], nodes_[v]));
      if (d < to_hole_[v] && segment_clear(nodes_[u], nodes_[v])) to_hole_[v] = d;
    }
  }
}

Vec2 ScriptedExpert::waypoint(const RawState& raw) const {
  const Vec2 p = raw.ball();
  const Vec2 hole = cfg_.hole_center;
  if (segment_clear(p, hole)) return hole;
  double best = std::numeric_limits<double>::infinity();
  Vec2 target = hole;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!std::isfinite(to_hole_[i])) continue;
    const double d = norm(sub(nodes_[i], p)) + to_hole_[i];
    if (d < best && segment_clear(p, nodes_[i])) {
      best = d;
      target = nodes_[i];
    }
  }
  return target;
}

double ScriptedExpert::rollout_cost(const RawState& start, Commands first, Vec2 target, bool target_is_hole) const {
  RawState r = start;
  double cost = 0.0;
  const double hole_r2 = cfg_.hole_capture_radius * cfg_.hole_capture_radius;
  for (int k = 0; k < tuning_.horizon; ++k) {
    const Commands c = k == 0 ? first : Commands{0, 0};
    bool captured = false;
    for (int i = 0; i < cfg_.substeps_per_action && !captured; ++i) {
      r = physics_substep(r, c, cfg_);
      const Vec2 d = sub(r.ball(), cfg_.hole_center);
      captured = dot(d, d) < hole_r2;
    }
    if (captured && target_is_hole) break;  // remaining distance terms are zero
    cost += norm(sub(r.ball(), target));
    for (const auto& con : cfg_.constraints)
      if (con.violated_by(r.ball())) cost += tuning_.violation_penalty;
  }
  return cost / tuning_.horizon;
}

ActionId ScriptedExpert::act(const State&, const RawState& raw) {
  const Vec2 target = waypoint(raw);
  const bool to_hole = target == cfg_.hole_center;
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int id = 0; id < kNumActions; ++id) {
    const double c = rollout_cost(raw, ActionId(id).decode(), target, to_hole);
    if (c < best_cost) {
      best_cost = c;
      best = id;
    }
  }
  return ActionId(best);
}

}  // namespace scopil
