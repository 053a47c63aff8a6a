#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "scopil/env.hpp"
#include "scopil/presets.hpp"
#include "support/oracles.hpp"

using namespace scopil;

namespace {

RawState at_rest(double x, double y) {
  RawState r;
  r.bx = x;
  r.by = y;
  return r;
}

double speed(const RawState& r) { return std::hypot(r.vx, r.vy); }

}  // namespace

TEST_CASE("reset is seeded and spawns inside the start region") {
  MazeEnv env(make_preset("simple"));
  const State a = env.reset(7);
  const RawState ra = env.raw();
  const State b = env.reset(7);
  CHECK(a == b);
  CHECK(env.raw() == ra);
  CHECK(ra.rx == 0.0);
  CHECK(ra.rvy == 0.0);
  CHECK(ra.vx == 0.0);
  CHECK(ra.t == 0);

  const Rect region = env.config().start_region;
  for (std::uint64_t s = 0; s < 10'000; ++s) {
    env.reset(s);
    REQUIRE(region.contains(env.raw().ball()));
  }
}

TEST_CASE("action ids decode to distinct commands and encode back") {
  std::set<std::pair<int, int>> seen;
  for (int id = 0; id < kNumActions; ++id) {
    const Commands c = ActionId(id).decode();
    CHECK(c.cx >= -1);
    CHECK(c.cx <= 1);
    CHECK(c.cy >= -1);
    CHECK(c.cy <= 1);
    seen.insert({c.cx, c.cy});
    CHECK(ActionId::encode(c).value() == id);
  }
  CHECK(seen.size() == 9);
  CHECK(ActionId(0).decode().cx == 0);
  CHECK(ActionId(0).decode().cy == 0);
  CHECK_THROWS(ActionId(9));
  CHECK_THROWS(ActionId(-1));
}

TEST_CASE("physics substep") {
  const EnvConfig cfg = make_preset("simple");

  SUBCASE("level board at rest stays put") {
    const RawState r = at_rest(12.0, -30.0);
    const RawState n = physics_substep(r, {0, 0}, cfg);
    CHECK(n.bx == 12.0);
    CHECK(n.by == -30.0);
  }

  SUBCASE("positive tilt rolls the ball towards -x") {
    RawState r = at_rest(0.0, 0.0);
    r.rx = 0.1;
    CHECK(physics_substep(r, {0, 0}, cfg).vx < 0.0);
  }

  SUBCASE("wall contact reflects with restitution") {
    RawState r = at_rest(cfg.board_half_extent - 0.1, 0.0);
    r.vx = 100.0;
    const RawState n = physics_substep(r, {0, 0}, cfg);
    const double pre_wall = 100.0 * (1.0 - cfg.friction * cfg.substep_dt);
    CHECK(n.vx == doctest::Approx(-cfg.restitution * pre_wall));
    CHECK(n.bx <= cfg.board_half_extent);
  }

  SUBCASE("speed never grows on a level board without commands") {
    RawState r = at_rest(0.0, 50.0);
    r.vx = 80.0;
    r.vy = -45.0;
    double prev = speed(r);
    for (int i = 0; i < 2000; ++i) {
      r = physics_substep(r, {0, 0}, cfg);
      REQUIRE(speed(r) <= prev + 1e-12);
      prev = speed(r);
    }
  }

  SUBCASE("limits hold under saturating commands") {
    RawState r = at_rest(0.0, 0.0);
    for (int i = 0; i < 500; ++i) {
      r = physics_substep(r, {1, -1}, cfg);
      REQUIRE(std::abs(r.rx) <= cfg.max_tilt);
      REQUIRE(std::abs(r.ry) <= cfg.max_tilt);
      REQUIRE(std::abs(r.rvx) <= cfg.max_omega);
      REQUIRE(std::abs(r.bx) <= cfg.board_half_extent);
      REQUIRE(std::abs(r.by) <= cfg.board_half_extent);
    }
  }
}

TEST_CASE("reward map endpoints") {
  const EnvConfig cfg = make_preset("simple");
  const RawState r = at_rest(0.0, 0.0);
  CHECK(compute_reward(r, DoneKind::Goal, cfg) == doctest::Approx(0.0));
  CHECK(compute_reward(r, DoneKind::Timeout, cfg) == doctest::Approx(-1.0));
  CHECK(normalize_reward(-1.0, cfg) == doctest::Approx(-11.0 / 15.0));
  CHECK(normalize_reward(-1.0, cfg) == doctest::Approx(-0.7333).epsilon(1e-4));
  CHECK(denormalize_reward(normalize_reward(3.25, cfg), cfg) == doctest::Approx(3.25));
}

TEST_CASE("goal, zero action and timeout") {
  EnvConfig cfg = make_preset("simple");

  SUBCASE("ball on the hole finishes with reward 0") {
    MazeEnv env(cfg);
    env.reset_to(cfg.hole_center);
    const StepResult r = env.step(ActionId(4));
    CHECK(r.done == DoneKind::Goal);
    CHECK(r.reward == doctest::Approx(0.0));
    CHECK_THROWS_AS(env.step(ActionId(0)), EpisodeFinished);
  }

  SUBCASE("zero action from rest gives the distance term") {
    MazeEnv env(cfg);
    env.reset_to({40.0, 100.0});
    const StepResult r = env.step(ActionId(0));
    CHECK(r.raw.bx == 40.0);
    CHECK(r.raw.by == 100.0);
    const double d = std::hypot(40.0 - cfg.hole_center.x, 100.0 - cfg.hole_center.y);
    CHECK(r.reward == doctest::Approx(normalize_reward(-d / cfg.max_distance(), cfg)));
  }

  SUBCASE("episodes end at the step cap") {
    MazeEnv env(cfg);
    env.reset_to({-100.0, 120.0});
    int steps = 0;
    StepResult r;
    do {
      r = env.step(ActionId(0));
      ++steps;
    } while (r.done == DoneKind::Running);
    CHECK(steps == cfg.max_steps);
    CHECK(r.done == DoneKind::Timeout);
    CHECK(r.raw.t == cfg.max_steps);
    CHECK(r.reward == doctest::Approx(-1.0));
  }
}

TEST_CASE("state normalization") {
  const EnvConfig cfg = make_preset("multi");
  RawState lo, mid;
  lo.bx = lo.by = -cfg.board_half_extent;
  lo.vx = lo.vy = -cfg.v_max;
  lo.rx = lo.ry = -cfg.max_tilt;
  lo.rvx = lo.rvy = -cfg.max_omega;
  for (double x : normalize_state(lo, cfg)) CHECK(x == doctest::Approx(-1.0));
  for (double x : normalize_state(mid, cfg)) CHECK(x == doctest::Approx(0.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    RawState r;
    r.bx = u(rng) * cfg.board_half_extent;
    r.by = u(rng) * cfg.board_half_extent;
    r.vx = u(rng) * cfg.v_max;
    r.vy = u(rng) * cfg.v_max;
    r.rx = u(rng) * cfg.max_tilt;
    r.ry = u(rng) * cfg.max_tilt;
    r.rvx = u(rng) * cfg.max_omega;
    r.rvy = u(rng) * cfg.max_omega;
    const RawState back = denormalize_state(normalize_state(r, cfg), cfg);
    const auto a = r.as_array(), b = back.as_array();
    for (int k = 0; k < kStateDim; ++k) REQUIRE(std::abs(a[k] - b[k]) < 1e-6);
  }
}

TEST_CASE("violation detector matches the geometric oracle") {
  for (const auto& name : preset_names()) {
    const EnvConfig cfg = make_preset(name);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-cfg.board_half_extent, cfg.board_half_extent);
    for (int i = 0; i < 100'000; ++i) {
      const Vec2 p{u(rng), u(rng)};
      const auto got = detect_violations(p, cfg.constraints);
      for (std::size_t k = 0; k < cfg.constraints.size(); ++k)
        REQUIRE(got[k] == oracle::geometric_violation(cfg.constraints[k], p.x, p.y));
    }
  }
}

TEST_CASE("constraint boundaries are not violations") {
  const auto h = ConstraintSpec::hline(10.0, ConstraintSpec::Side::Below);
  CHECK_FALSE(h.violated_by({0.0, 10.0}));
  CHECK(h.violated_by({0.0, 9.999}));
  const auto v = ConstraintSpec::vline(-20.0, ConstraintSpec::Side::Left);
  CHECK_FALSE(v.violated_by({-20.0, 5.0}));
  CHECK(v.violated_by({-20.5, 5.0}));
  const auto c = ConstraintSpec::circle({5.0, 5.0}, 10.0);
  CHECK(c.violated_by({5.0, 5.0}));
  CHECK_FALSE(c.violated_by({15.0, 5.0}));
}

TEST_CASE("violations count entries, and a violating spawn counts once") {
  EnvConfig cfg = make_preset("simple");
  cfg.constraints = {ConstraintSpec::circle({0.0, 100.0}, 40.0)};
  MazeEnv env(cfg);
  env.reset_to({0.0, 100.0});
  REQUIRE(env.initial_events().size() == 1);
  CHECK(env.initial_events()[0]);
  const StepResult r = env.step(ActionId(0));
  CHECK(r.violation_active[0]);
  CHECK_FALSE(r.violation_events[0]);

  cfg.count_entry_events = false;
  MazeEnv every(cfg);
  every.reset_to({0.0, 100.0});
  CHECK(every.step(ActionId(0)).violation_events[0]);
}

TEST_CASE("rollouts are deterministic and stay within bounds") {
  for (const auto& name : preset_names()) {
    const EnvConfig cfg = make_preset(name);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 pick(seed * 31 + 1);
      std::uniform_int_distribution<int> ua(0, kNumActions - 1);
      std::vector<int> actions(cfg.max_steps);
      for (int& a : actions) a = ua(pick);

      auto roll = [&] {
        MazeEnv env(cfg);
        std::vector<StepResult> out;
        env.reset(seed);
        for (int a : actions) {
          out.push_back(env.step(ActionId(a)));
          if (env.finished()) break;
        }
        return out;
      };
      const auto a = roll(), b = roll();
      REQUIRE(a.size() == b.size());
      REQUIRE(a.size() <= static_cast<std::size_t>(cfg.max_steps));
      for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].raw == b[i].raw);
        REQUIRE(a[i].next_state == b[i].next_state);
        REQUIRE(a[i].reward == b[i].reward);
        REQUIRE(a[i].reward >= -1.0);
        REQUIRE(a[i].reward <= 0.0);
        for (double x : a[i].next_state) {
          REQUIRE(x >= -1.0);
          REQUIRE(x <= 1.0);
        }
        for (std::size_t k = 0; k < a[i].violation_events.size(); ++k)
          if (a[i].violation_events[k]) REQUIRE(a[i].violation_active[k]);
      }
    }
  }
}

TEST_CASE("config validation rejects broken invariants") {
  EnvConfig cfg = make_preset("simple");
  cfg.substeps_per_action = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = make_preset("simple");
  cfg.reward_min = 20.0;
  CHECK_THROWS_AS(MazeEnv{cfg}, std::invalid_argument);
  CHECK_THROWS(ConstraintSpec::circle({0.0, 0.0}, 0.0));
  cfg = make_preset("simple");
  cfg.constraints.push_back(ConstraintSpec::circle({0.0, 0.0}, 10.0));
  cfg.constraints.back().radius = -1.0;
  CHECK_THROWS(cfg.validate());
  cfg = make_preset("simple");
  cfg.constraints.push_back(ConstraintSpec::hline(0.0, ConstraintSpec::Side::Below));
  cfg.constraints.back().level = 400.0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("presets round trip through JSON") {
  for (const auto& name : preset_names()) {
    const EnvConfig cfg = make_preset(name);
    const EnvConfig back = env_config_from_json(env_config_to_json(cfg));
    CHECK(env_config_to_json(back) == env_config_to_json(cfg));
    CHECK(constraints_digest(back.constraints) == constraints_digest(cfg.constraints));
  }
  CHECK_THROWS(make_preset("nope"));
}
