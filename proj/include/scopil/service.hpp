#pragma once

// Human demonstration service: one Session per WebSocket connection, a JSON
// command protocol, and a shared JSONL writer.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scopil/demo.hpp"
#include "scopil/env.hpp"

namespace scopil {

enum class Phase { Idle, Recording, Frozen, Finished };
const char* to_string(Phase p);

/// Appends whole episodes to a demo JSONL file. Writers for the same path
/// share one lock, so concurrent sessions never interleave lines.
class DemoWriter {
 public:
  DemoWriter(std::filesystem::path path, const EnvConfig& cfg, std::string provenance = "human",
             std::uint64_t seed = 0);

  /// Validates, assigns the next episode id and appends. Returns the id.
  int append(std::vector<DemoRecord> episode);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  DemoSet header_;
  std::shared_ptr<std::mutex> lock_;
  int next_ep_ = 0;
  bool initialized_ = false;
  void init_locked();
};

/// Protocol state machine, independent of the transport.
class Session {
 public:
  Session(EnvConfig cfg, std::shared_ptr<DemoWriter> writer, std::uint64_t seed = 0);

  nlohmann::json hello() const;
  /// Parses and executes one text message; returns the events to emit.
  std::vector<nlohmann::json> handle_text(const std::string& text);
  std::vector<nlohmann::json> handle(const nlohmann::json& msg);

  Phase phase() const { return phase_; }
  const std::vector<DemoRecord>& buffer() const { return buffer_; }
  const MazeEnv& env() const { return env_; }

 private:
  nlohmann::json state_event() const;
  std::vector<nlohmann::json> on_reset(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_act(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_freeze(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_save();
  std::vector<nlohmann::json> on_discard();
  void enter_idle();

  EnvConfig cfg_;
  std::shared_ptr<DemoWriter> writer_;
  MazeEnv env_;
  Phase phase_ = Phase::Idle;
  std::vector<DemoRecord> buffer_;
  double last_reward_ = 0.0;
  std::vector<bool> last_events_;
};

nlohmann::json error_event(const std::string& msg);
nlohmann::json warning_event(const std::string& msg);

/// Body served at GET /config.
nlohmann::json config_payload(const EnvConfig& cfg);

/// Blocking WebSocket + HTTP server. start() binds (port 0 picks a free
/// port) and serves on a background thread until stop().
class DemoServer {
 public:
  DemoServer(EnvConfig cfg, std::filesystem::path out, std::string address = "127.0.0.1", unsigned short port = 8765);
  ~DemoServer();

  /// Throws std::runtime_error when the address cannot be bound.
  void start();
  void stop();
  /// start() then block until stop() is called from another thread.
  void run();
  unsigned short port() const { return bound_port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  unsigned short bound_port_ = 0;
};

}  // namespace scopil
