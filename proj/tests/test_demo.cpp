#include <doctest.h>

#include <cmath>
#include <sstream>

#include "scopil/demo.hpp"
#include "scopil/eval.hpp"
#include "scopil/presets.hpp"

using namespace scopil;

namespace {

const DemoSet& simple() {
  static const DemoSet d = scripted_demos(make_preset("simple"), 6, 3);
  return d;
}

std::vector<std::string> lines_of(const DemoSet& d) {
  std::ostringstream os;
  write_demos(os, d);
  std::vector<std::string> out;
  std::istringstream is(os.str());
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::string join(const std::vector<std::string>& ls) {
  std::string s;
  for (const auto& l : ls) s += l + "\n";
  return s;
}

std::vector<DemoLineError> load_errors(const std::string& text) {
  std::istringstream is(text);
  try {
    parse_demos(is);
  } catch (const DemoLoadError& e) {
    return e.errors();
  }
  return {};
}

DemoRecord record(int ep, int t, int a, double bx, double by, double r = -0.5) {
  DemoRecord rec;
  rec.ep = ep;
  rec.t = t;
  rec.a = a;
  rec.bx = bx;
  rec.by = by;
  rec.r = r;
  rec.viol = {false};
  return rec;
}

}  // namespace

TEST_CASE("save, load, save is value-identical") {
  const DemoSet& d = simple();
  REQUIRE(!d.empty());
  const std::string first = join(lines_of(d));
  std::istringstream is(first);
  const DemoSet back = parse_demos(is);
  CHECK(back == d);
  CHECK(join(lines_of(back)) == first);
  CHECK(validate_demos(d).empty());
}

TEST_CASE("scripted demos") {
  const DemoSet& d = simple();
  CHECK(d.setting == "simple");
  CHECK(d.provenance == "scripted");
  CHECK(d.constraints_digest == constraints_digest(make_preset("simple").constraints));
  CHECK(d.episodes().size() == 6);
  const auto starts = episode_starts(d);
  CHECK(starts.size() == 6);
  for (const auto& v : starts) CHECK(make_preset("simple").start_region.contains(v));
  CHECK(d == scripted_demos(make_preset("simple"), 6, 3));

  // every kept game reached the hole
  for (auto [b, e] : d.episodes()) CHECK(d.records[e - 1].r == doctest::Approx(0.0));

  const DemoStats s = demo_stats(d);
  CHECK(s.pairs == d.size());
  CHECK(s.episodes == 6);
  CHECK(s.steps.mean >= 10.0);
  CHECK(s.steps.mean <= 40.0);
}

TEST_CASE("open-loop replay of a demo reproduces its states") {
  const EnvConfig cfg = make_preset("simple");
  const DemoSet& d = simple();
  for (auto [b, e] : d.episodes()) {
    MazeEnv env(cfg);
    State s = env.reset_to({d.records[b].bx, d.records[b].by});
    for (std::size_t i = b; i < e; ++i) {
      REQUIRE(s == d.records[i].s);
      REQUIRE(env.raw().bx == d.records[i].bx);
      const StepResult r = env.step(ActionId(d.records[i].a));
      REQUIRE(r.reward == d.records[i].r);
      s = r.next_state;
    }
    CHECK(env.done() == DoneKind::Goal);
  }
}

TEST_CASE("two-modes demos use both detour sides") {
  const EnvConfig cfg = make_preset("two-modes");
  const DemoSet d = scripted_demos(cfg, 10, 0);
  CHECK(d.episodes().size() == 10);
  const ConstraintSpec* circle = nullptr;
  for (const auto& c : cfg.constraints)
    if (c.kind == ConstraintKind::Circle) circle = &c;
  REQUIRE(circle != nullptr);
  const ModeCoverage m = mode_coverage(d, *circle, cfg.hole_center);
  CHECK(m.left_share() >= 0.4);
  CHECK(m.right_share() >= 0.4);
}

TEST_CASE("action 9 on line 17 is reported on line 17") {
  auto ls = lines_of(simple());
  REQUIRE(ls.size() > 17);
  auto j = nlohmann::json::parse(ls[16]);
  j["a"] = 9;
  ls[16] = j.dump();
  const auto errs = load_errors(join(ls));
  REQUIRE(errs.size() == 1);
  CHECK(errs[0].line == 17);
  CHECK(errs[0].message.find("action") != std::string::npos);

  std::istringstream is(join(ls));
  try {
    parse_demos(is);
    FAIL("expected a load error");
  } catch (const DemoLoadError& e) {
    CHECK(std::string(e.what()).find("line 17") != std::string::npos);
  }
}

TEST_CASE("corrupted files are rejected line by line") {
  const auto clean = lines_of(simple());
  auto edit = [&](std::size_t line, auto fn) {
    auto ls = clean;
    auto j = nlohmann::json::parse(ls[line - 1]);
    fn(j);
    ls[line - 1] = j.dump();
    return join(ls);
  };

  SUBCASE("truncated JSON") {
    auto ls = clean;
    ls[4] = ls[4].substr(0, ls[4].size() / 2);
    const auto e = load_errors(join(ls));
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 5);
  }
  SUBCASE("state of the wrong length") {
    const auto e = load_errors(edit(9, [](auto& j) { j["s"].erase(0); }));
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 9);
  }
  SUBCASE("state outside the normalized range") {
    const auto e = load_errors(edit(3, [](auto& j) { j["s"][2] = 1.5; }));
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 3);
  }
  SUBCASE("reward outside [-1, 0]") {
    const auto e = load_errors(edit(12, [](auto& j) { j["r"] = 0.25; }));
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 12);
  }
  SUBCASE("timestep going backwards") {
    const auto e = load_errors(edit(8, [](auto& j) { j["t"] = 0; }));
    REQUIRE_FALSE(e.empty());
    CHECK(e[0].line == 8);
  }
  SUBCASE("missing violation flags") {
    const auto e = load_errors(edit(6, [](auto& j) { j.erase("viol"); }));
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 6);
  }
  SUBCASE("header without a digest") {
    const auto e = load_errors(edit(1, [](auto& j) { j.erase("constraints_digest"); }));
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 1);
  }
  SUBCASE("several faults are all reported, in line order") {
    auto ls = clean;
    ls[10] = "{";
    auto j = nlohmann::json::parse(ls[3]);
    j["a"] = -1;
    ls[3] = j.dump();
    const auto e = load_errors(join(ls));
    REQUIRE(e.size() == 2);
    CHECK(e[0].line == 4);
    CHECK(e[1].line == 11);
  }
  SUBCASE("empty file") {
    const auto e = load_errors("");
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 1);
  }
}

TEST_CASE("blank lines are skipped but keep their numbers") {
  auto ls = lines_of(simple());
  ls.insert(ls.begin() + 2, "");
  std::istringstream ok(join(ls));
  CHECK(parse_demos(ok) == simple());
  auto j = nlohmann::json::parse(ls[5]);
  j["a"] = 12;
  ls[5] = j.dump();
  const auto e = load_errors(join(ls));
  REQUIRE(e.size() == 1);
  CHECK(e[0].line == 6);
}

TEST_CASE("validate_demos flags in-memory breaches") {
  DemoSet d;
  d.setting = "simple";
  d.records = {record(0, 0, 1, 0, 0), record(1, 0, 1, 0, 0), record(0, 1, 1, 0, 0)};
  const auto e = validate_demos(d);
  REQUIRE(e.size() == 1);
  CHECK(e[0].line == 4);
}

TEST_CASE("sampling") {
  DemoSet one;
  one.records = {record(0, 0, 5, 1.0, 2.0)};
  one.records[0].s[3] = 0.25;
  std::mt19937_64 rng(1);
  const auto b = sample_batch(one, 1, rng);
  CHECK(b.a == std::vector<int>{5});
  CHECK(b.s(3, 0) == 0.25f);
  CHECK_THROWS(sample_batch(one, 0, rng));
  CHECK_THROWS(sample_batch(DemoSet{}, 4, rng));

  DemoSet ten;
  for (int i = 0; i < 10; ++i) {
    ten.records.push_back(record(0, i, i % kNumActions, 0, 0));
    ten.records.back().s[0] = i / 10.0;
  }
  std::mt19937_64 r1(42), r2(42);
  const auto x = sample_batch(ten, 50, r1), y = sample_batch(ten, 50, r2);
  CHECK(x.s == y.s);
  std::array<int, 10> counts{};
  std::mt19937_64 r3(7);
  const auto big = sample_batch(ten, 100'000, r3);
  for (Eigen::Index j = 0; j < big.size(); ++j) ++counts[static_cast<std::size_t>(std::lround(big.s(0, j) * 10.0))];
  for (int c : counts) CHECK(std::abs(c / 1e5 - 0.1) <= 0.01);
}

TEST_CASE("stats") {
  SUBCASE("a single one-step episode") {
    DemoSet d;
    d.records = {record(0, 0, 0, 10.0, 20.0, 0.0)};
    const auto s = demo_stats(d);
    CHECK(s.pairs == 1);
    CHECK(s.steps.mean == 1.0);
    CHECK(s.length.mean == 0.0);
    CHECK(s.reward.mean == doctest::Approx(10.0));
  }
  SUBCASE("two identical episodes have no spread") {
    DemoSet d;
    d.records = {record(0, 0, 0, 0, 0), record(0, 1, 0, 3, 4), record(1, 0, 0, 0, 0), record(1, 1, 0, 3, 4)};
    const auto s = demo_stats(d);
    CHECK(s.episodes == 2);
    CHECK(s.length.mean == doctest::Approx(5.0));
    CHECK(s.length.std == 0.0);
    CHECK(s.steps.std == 0.0);
    CHECK(s.reward.std == 0.0);
    CHECK(s.reward.mean == doctest::Approx(2 * (-0.5 * 15 + 10)));
  }
  CHECK(mean_std({1.0, 3.0}) == MeanStd{2.0, 1.0});
  const auto table = format_stats_table("Simple", demo_stats(simple()));
  CHECK(table.find("Simple") != std::string::npos);
}
