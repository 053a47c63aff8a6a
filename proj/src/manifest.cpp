#include "scopil/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "scopil/presets.hpp"

#ifndef SCOPIL_VERSION
#define SCOPIL_VERSION "unknown"
#endif

namespace scopil {

using nlohmann::json;

std::string code_version() { return SCOPIL_VERSION; }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// nlohmann objects iterate in key order, so dump() is canonical.
std::string config_digest(const json& config) { return digest_hex(config.dump()); }

RunManifest RunManifest::begin(std::string command, json config, std::vector<std::uint64_t> seeds) {
  RunManifest m;
  m.command = std::move(command);
  m.config_digest = scopil::config_digest(config);
  m.config = std::move(config);
  m.seeds = std::move(seeds);
  m.code_version = scopil::code_version();
  m.started_at = utc_timestamp();
  return m;
}

void RunManifest::finish(const std::string& s) {
  status = s;
  finished_at = utc_timestamp();
}

json manifest_to_json(const RunManifest& m) {
  return {{"command", m.command},       {"config", m.config},   {"config_digest", m.config_digest},
          {"seeds", m.seeds},           {"code_version", m.code_version}, {"outputs", m.outputs},
          {"started_at", m.started_at}, {"finished_at", m.finished_at},   {"status", m.status}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.config_digest = j.at("config_digest").get<std::string>();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.code_version = j.at("code_version").get<std::string>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  m.status = j.at("status").get<std::string>();
  return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  return manifest_from_json(json::parse(in));
}

}  // namespace scopil
