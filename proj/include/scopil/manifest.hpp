#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace scopil {

/// Provenance record written before a command does any work.
struct RunManifest {
  std::string command;
  nlohmann::json config;  // everything that determines the outputs
  std::string config_digest;
  std::vector<std::uint64_t> seeds;
  std::string code_version;
  std::map<std::string, std::string> outputs;
  std::string started_at;
  std::string finished_at;  // empty while running
  std::string status = "running";

  /// Fills config_digest, code_version and started_at.
  static RunManifest begin(std::string command, nlohmann::json config, std::vector<std::uint64_t> seeds);
  void finish(const std::string& status);
};

std::string code_version();
std::string utc_timestamp();
std::string config_digest(const nlohmann::json& config);

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace scopil
