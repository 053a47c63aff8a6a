#include "scopil/presets.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace scopil {

using nlohmann::json;
using Side = ConstraintSpec::Side;

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"simple", "multi", "two-modes"};
  return names;
}

EnvConfig make_preset(std::string_view setting) {
  EnvConfig cfg;
  if (setting == "simple" || setting == "two-modes") {
    cfg.setting = std::string(setting);
    cfg.hole_center = {0.0, -75.0};
    cfg.start_region = {-100.0, 100.0, 90.0, 130.0};
    cfg.constraints = {ConstraintSpec::hline(-105.0, Side::Below),
                       ConstraintSpec::circle({0.0, 20.0}, 35.0)};
  } else if (setting == "multi") {
    cfg.setting = "multi";
    cfg.hole_center = {20.0, -70.0};
    cfg.start_region = {-90.0, 100.0, 95.0, 130.0};
    cfg.constraints = {ConstraintSpec::hline(-105.0, Side::Below),
                       ConstraintSpec::vline(-115.0, Side::Left),
                       ConstraintSpec::circle({-60.0, 55.0}, 16.0),
                       ConstraintSpec::circle({10.0, 60.0}, 16.0),
                       ConstraintSpec::circle({80.0, 55.0}, 16.0),
                       ConstraintSpec::circle({-25.0, 10.0}, 16.0),
                       ConstraintSpec::circle({45.0, 10.0}, 16.0),
                       ConstraintSpec::circle({110.0, 5.0}, 16.0),
                       ConstraintSpec::circle({-70.0, -35.0}, 16.0)};
  } else {
    throw std::invalid_argument("unknown setting: " + std::string(setting));
  }
  cfg.set_default_norm_bounds();
  cfg.validate();
  return cfg;
}

namespace {

const char* side_name(Side s) {
  switch (s) {
    case Side::Above: return "above";
    case Side::Below: return "below";
    case Side::Left: return "left";
    case Side::Right: return "right";
  }
  return "below";
}

Side side_from(const std::string& s) {
  if (s == "above") return Side::Above;
  if (s == "below") return Side::Below;
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw std::invalid_argument("unknown constraint side: " + s);
}

}  // namespace

json constraint_to_json(const ConstraintSpec& c) {
  switch (c.kind) {
    case ConstraintKind::HLine:
      return {{"kind", "hline"}, {"y", c.level}, {"side", side_name(c.side)}, {"label", "H"}};
    case ConstraintKind::VLine:
      return {{"kind", "vline"}, {"x", c.level}, {"side", side_name(c.side)}, {"label", "V"}};
    case ConstraintKind::Circle:
      return {{"kind", "circle"}, {"center", {c.center.x, c.center.y}}, {"radius", c.radius}, {"label", "C"}};
  }
  return {};
}

ConstraintSpec constraint_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  ConstraintSpec c;
  if (kind == "hline") {
    c = ConstraintSpec::hline(j.at("y").get<double>(), side_from(j.at("side").get<std::string>()));
  } else if (kind == "vline") {
    c = ConstraintSpec::vline(j.at("x").get<double>(), side_from(j.at("side").get<std::string>()));
  } else if (kind == "circle") {
    const auto& ctr = j.at("center");
    c = ConstraintSpec::circle({ctr.at(0).get<double>(), ctr.at(1).get<double>()}, j.at("radius").get<double>());
  } else {
    throw std::invalid_argument("unknown constraint kind: " + kind);
  }
  if (j.contains("label") && j.at("label").get<std::string>() != std::string(1, c.label))
    throw std::invalid_argument("constraint label inconsistent with kind " + kind);
  return c;
}

namespace {

template <typename F>
void for_each_physics(EnvConfig& cfg, F&& f) {
  f("board_half_extent", cfg.board_half_extent);
  f("gravity_gain", cfg.gravity_gain);
  f("friction", cfg.friction);
  f("restitution", cfg.restitution);
  f("tilt_increment", cfg.tilt_increment);
  f("omega_decay", cfg.omega_decay);
  f("max_tilt", cfg.max_tilt);
  f("max_omega", cfg.max_omega);
  f("v_max", cfg.v_max);
  f("substep_dt", cfg.substep_dt);
  f("reward_min", cfg.reward_min);
  f("reward_max", cfg.reward_max);
  f("goal_reward", cfg.goal_reward);
  f("timeout_reward", cfg.timeout_reward);
}

}  // namespace

json env_config_to_json(const EnvConfig& cfg) {
  json physics = json::object();
  EnvConfig copy = cfg;
  for_each_physics(copy, [&](const char* key, double& v) { physics[key] = v; });
  physics["substeps_per_action"] = cfg.substeps_per_action;
  physics["max_steps"] = cfg.max_steps;
  physics["count_entry_events"] = cfg.count_entry_events;
  json bounds = json::array();
  for (const auto& b : cfg.norm_bounds) bounds.push_back({b.min, b.max});
  json constraints = json::array();
  for (const auto& c : cfg.constraints) constraints.push_back(constraint_to_json(c));
  return {{"setting", cfg.setting},
          {"physics", physics},
          {"norm_bounds", bounds},
          {"hole", {{"center", {cfg.hole_center.x, cfg.hole_center.y}}, {"radius", cfg.hole_capture_radius}}},
          {"start_region",
           {cfg.start_region.x_min, cfg.start_region.x_max, cfg.start_region.y_min, cfg.start_region.y_max}},
          {"constraints", constraints}};
}

EnvConfig env_config_from_json(const json& j) {
  const std::string setting = j.at("setting").get<std::string>();
  EnvConfig cfg = make_preset(setting);
  if (j.contains("physics")) {
    const auto& p = j.at("physics");
    for_each_physics(cfg, [&](const char* key, double& v) {
      if (p.contains(key)) v = p.at(key).get<double>();
    });
    if (p.contains("substeps_per_action")) cfg.substeps_per_action = p.at("substeps_per_action").get<int>();
    if (p.contains("max_steps")) cfg.max_steps = p.at("max_steps").get<int>();
    if (p.contains("count_entry_events")) cfg.count_entry_events = p.at("count_entry_events").get<bool>();
  }
  cfg.set_default_norm_bounds();
  if (j.contains("norm_bounds")) {
    const auto& nb = j.at("norm_bounds");
    if (nb.size() != kStateDim) throw std::invalid_argument("norm_bounds must have 8 entries");
    for (int i = 0; i < kStateDim; ++i) cfg.norm_bounds[i] = {nb.at(i).at(0).get<double>(), nb.at(i).at(1).get<double>()};
  }
  if (j.contains("hole")) {
    const auto& h = j.at("hole");
    cfg.hole_center = {h.at("center").at(0).get<double>(), h.at("center").at(1).get<double>()};
    if (h.contains("radius")) cfg.hole_capture_radius = h.at("radius").get<double>();
  }
  if (j.contains("start_region")) {
    const auto& r = j.at("start_region");
    cfg.start_region = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>()};
  }
  if (j.contains("constraints")) {
    cfg.constraints.clear();
    for (const auto& c : j.at("constraints")) cfg.constraints.push_back(constraint_from_json(c));
  }
  cfg.validate();
  return cfg;
}

EnvConfig load_env_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open env config: " + path.string());
  return env_config_from_json(json::parse(in));
}

json geometry_json(const EnvConfig& cfg) {
  json constraints = json::array();
  for (const auto& c : cfg.constraints) constraints.push_back(constraint_to_json(c));
  return {{"half_extent", cfg.board_half_extent},
          {"hole", {{"center", {cfg.hole_center.x, cfg.hole_center.y}}, {"radius", cfg.hole_capture_radius}}},
          {"start_region",
           {cfg.start_region.x_min, cfg.start_region.x_max, cfg.start_region.y_min, cfg.start_region.y_max}},
          {"constraints", constraints}};
}

std::string digest_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string constraints_digest(const std::vector<ConstraintSpec>& constraints) {
  json arr = json::array();
  for (const auto& c : constraints) arr.push_back(constraint_to_json(c));
  return digest_hex(arr.dump());
}

}  // namespace scopil
