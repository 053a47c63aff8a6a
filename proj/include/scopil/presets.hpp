#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scopil/env.hpp"

namespace scopil {

/// Names accepted by make_preset: "simple", "multi", "two-modes".
const std::vector<std::string>& preset_names();

/// Built-in board layouts approximating the three benchmark settings.
/// "two-modes" shares the simple geometry; only its demonstrations differ.
EnvConfig make_preset(std::string_view setting);

nlohmann::json constraint_to_json(const ConstraintSpec& c);
ConstraintSpec constraint_from_json(const nlohmann::json& j);

/// Preset file schema:
///   {"setting": "...", "physics": {...}, "hole": {"center": [x,y], "radius": r},
///    "start_region": [x_min, x_max, y_min, y_max], "constraints": [...]}
/// Missing physics keys fall back to the defaults of the named setting.
nlohmann::json env_config_to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const nlohmann::json& j);
EnvConfig load_env_config(const std::filesystem::path& path);

/// Geometry subset used by renderers (board, hole, constraints).
nlohmann::json geometry_json(const EnvConfig& cfg);

/// 64-bit FNV-1a as 16 hex digits.
std::string digest_hex(std::string_view bytes);

/// digest_hex of the canonical constraint list.
std::string constraints_digest(const std::vector<ConstraintSpec>& constraints);

}  // namespace scopil
