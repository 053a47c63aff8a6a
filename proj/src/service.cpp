#include "scopil/service.hpp"

#include <condition_variable>
#include <fstream>
#include <map>
#include <optional>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "scopil/presets.hpp"
#include "scopil/seeding.hpp"

namespace scopil {

using nlohmann::json;

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Recording: return "recording";
    case Phase::Frozen: return "frozen";
    case Phase::Finished: return "finished";
  }
  return "idle";
}

json error_event(const std::string& msg) { return {{"event", "error"}, {"msg", msg}}; }
json warning_event(const std::string& msg) { return {{"event", "warning"}, {"msg", msg}}; }

namespace {

std::shared_ptr<std::mutex> file_lock(const std::filesystem::path& p) {
  static std::mutex registry_mutex;
  static std::map<std::string, std::weak_ptr<std::mutex>> registry;
  const std::string key = std::filesystem::weakly_canonical(p).string();
  std::lock_guard<std::mutex> g(registry_mutex);
  auto& slot = registry[key];
  if (auto m = slot.lock()) return m;
  auto m = std::make_shared<std::mutex>();
  slot = m;
  return m;
}

}  // namespace

DemoWriter::DemoWriter(std::filesystem::path path, const EnvConfig& cfg, std::string provenance, std::uint64_t seed)
    : path_(std::move(path)), lock_(file_lock(path_)) {
  header_.setting = cfg.setting;
  header_.provenance = std::move(provenance);
  header_.seed = seed;
  header_.constraints_digest = constraints_digest(cfg.constraints);
}

void DemoWriter::init_locked() {
  if (initialized_) return;
  std::error_code ec;
  if (std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > 0) {
    const DemoSet existing = load_demos(path_);
    if (existing.constraints_digest != header_.constraints_digest)
      throw std::runtime_error("existing demo file " + path_.string() + " was recorded with different constraints");
    for (const auto& r : existing.records) next_ep_ = std::max(next_ep_, r.ep + 1);
  } else {
    std::ofstream out(path_);
    if (!out) throw std::runtime_error("cannot write demo file: " + path_.string());
    out << demo_header_line(header_) << '\n';
  }
  initialized_ = true;
}

int DemoWriter::append(std::vector<DemoRecord> episode) {
  if (episode.empty()) throw std::invalid_argument("cannot save an empty episode");
  std::lock_guard<std::mutex> g(*lock_);
  init_locked();
  // Another writer on the same path may have appended since our last call.
  if (std::filesystem::file_size(path_) > 0) {
    const DemoSet existing = load_demos(path_);
    for (const auto& r : existing.records) next_ep_ = std::max(next_ep_, r.ep + 1);
  }
  const int ep = next_ep_;
  DemoSet check = header_;
  for (auto& r : episode) r.ep = ep;
  check.records = episode;
  const auto errors = validate_demos(check);
  if (!errors.empty()) throw DemoLoadError(errors);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to demo file: " + path_.string());
  for (const auto& r : episode) out << demo_record_line(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path_.string());
  next_ep_ = ep + 1;
  return ep;
}

json config_payload(const EnvConfig& cfg) {
  json actions = json::array();
  for (int id = 0; id < kNumActions; ++id) {
    const Commands c = ActionId(id).decode();
    actions.push_back({{"id", id}, {"cx", c.cx}, {"cy", c.cy}});
  }
  return {{"setting", cfg.setting}, {"geometry", geometry_json(cfg)}, {"actions", actions},
          {"max_steps", cfg.max_steps}};
}

Session::Session(EnvConfig cfg, std::shared_ptr<DemoWriter> writer, std::uint64_t seed)
    : cfg_(std::move(cfg)), writer_(std::move(writer)), env_(cfg_) {
  // Seeds the generator used by resets without an explicit seed.
  env_.reset(seed);
  enter_idle();
}

void Session::enter_idle() {
  phase_ = Phase::Idle;
  buffer_.clear();
}

json Session::hello() const {
  json h = config_payload(cfg_);
  h["event"] = "hello";
  h["phase"] = to_string(phase_);
  return h;
}

json Session::state_event() const {
  const RawState& r = env_.raw();
  return {{"event", "state"},
          {"t", r.t},
          {"ball", {r.bx, r.by}},
          {"vel", {r.vx, r.vy}},
          {"angles", {r.rx, r.ry}},
          {"ang_vel", {r.rvx, r.rvy}},
          {"s", env_.state()},
          {"reward", last_reward_},
          {"done", to_string(env_.done())},
          {"viol_active", env_.violation_active()},
          {"viol_event", last_events_},
          {"frozen", phase_ == Phase::Frozen},
          {"phase", to_string(phase_)},
          {"pairs", buffer_.size()}};
}

std::vector<json> Session::handle_text(const std::string& text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error& e) {
    return {error_event(std::string("malformed JSON: ") + e.what())};
  }
  return handle(msg);
}

std::vector<json> Session::handle(const json& msg) {
  if (!msg.is_object() || !msg.contains("cmd") || !msg.at("cmd").is_string())
    return {error_event("message must be an object with a string \"cmd\"")};
  const std::string cmd = msg.at("cmd").get<std::string>();
  try {
    if (cmd == "reset") return on_reset(msg);
    if (cmd == "act") return on_act(msg);
    if (cmd == "freeze") return on_freeze(msg);
    if (cmd == "save") return on_save();
    if (cmd == "discard") return on_discard();
  } catch (const std::exception& e) {
    return {error_event(e.what())};
  }
  return {error_event("unknown command: " + cmd)};
}

std::vector<json> Session::on_reset(const json& msg) {
  std::optional<std::uint64_t> seed;
  if (msg.contains("seed") && !msg.at("seed").is_null()) {
    const json& v = msg.at("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      return {error_event("seed must be a non-negative integer or null")};
    seed = msg.at("seed").get<std::uint64_t>();
  }
  std::vector<json> out;
  if (!buffer_.empty()) out.push_back(warning_event("unsaved episode with " + std::to_string(buffer_.size()) +
                                                    " pairs discarded"));
  enter_idle();
  env_.reset(seed);
  last_reward_ = 0.0;
  last_events_ = env_.initial_events();
  phase_ = Phase::Recording;
  out.push_back(state_event());
  return out;
}

std::vector<json> Session::on_act(const json& msg) {
  if (phase_ == Phase::Idle) return {error_event("act before reset")};
  if (phase_ == Phase::Finished) return {error_event("episode finished; save, discard or reset")};
  if (!msg.contains("action") || !msg.at("action").is_number_integer())
    return {error_event("act needs an integer \"action\" in 0..8")};
  const int id = msg.at("action").get<int>();
  if (id < 0 || id >= kNumActions) return {error_event("bad action id " + std::to_string(id) + " (expected 0..8)")};
  if (phase_ == Phase::Frozen) return {warning_event("frozen: action ignored"), state_event()};

  DemoRecord rec;
  rec.t = env_.raw().t;
  rec.s = env_.state();
  rec.a = id;
  rec.bx = env_.raw().bx;
  rec.by = env_.raw().by;
  rec.viol = env_.violation_active();
  const StepResult r = env_.step(ActionId(id));
  rec.r = r.reward;
  buffer_.push_back(std::move(rec));
  last_reward_ = r.reward;
  last_events_ = r.violation_events;
  if (r.done != DoneKind::Running) phase_ = Phase::Finished;
  return {state_event()};
}

std::vector<json> Session::on_freeze(const json& msg) {
  if (!msg.contains("on") || !msg.at("on").is_boolean()) return {error_event("freeze needs a boolean \"on\"")};
  const bool on = msg.at("on").get<bool>();
  if (phase_ != Phase::Recording && phase_ != Phase::Frozen)
    return {error_event(std::string("cannot freeze while ") + to_string(phase_))};
  phase_ = on ? Phase::Frozen : Phase::Recording;
  return {state_event()};
}

std::vector<json> Session::on_save() {
  if (buffer_.empty()) return {error_event("nothing to save")};
  if (phase_ != Phase::Finished) return {error_event("episode still running; finish it before saving")};
  if (!writer_) return {error_event("server has no output file")};
  const std::size_t pairs = buffer_.size();
  const int ep = writer_->append(buffer_);
  enter_idle();
  return {{{"event", "saved"}, {"pairs", pairs}, {"episode", ep}, {"path", writer_->path().string()}}};
}

std::vector<json> Session::on_discard() {
  const std::size_t pairs = buffer_.size();
  enter_idle();
  return {{{"event", "discarded"}, {"pairs", pairs}}};
}

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

}  // namespace

struct DemoServer::Impl {
  EnvConfig cfg;
  std::filesystem::path out;
  std::string address;
  unsigned short port;
  std::shared_ptr<DemoWriter> writer;
  asio::io_context ioc{1};
  std::optional<tcp::acceptor> acceptor;
  std::thread io_thread;
  std::mutex mutex;
  std::vector<std::shared_ptr<tcp::socket>> sockets;
  std::vector<std::thread> workers;
  std::atomic<bool> stopping{false};
  std::atomic<std::uint64_t> sessions{0};
  std::mutex done_mutex;
  std::condition_variable done_cv;
  bool stopped = false;

  void accept_next() {
    auto sock = std::make_shared<tcp::socket>(ioc);
    acceptor->async_accept(*sock, [this, sock](beast::error_code ec) {
      if (ec || stopping) return;
      std::lock_guard<std::mutex> g(mutex);
      sockets.push_back(sock);
      workers.emplace_back([this, sock] { serve_connection(sock); });
      accept_next();
    });
  }

  void serve_connection(const std::shared_ptr<tcp::socket>& sock) {
    beast::error_code ec;
    beast::flat_buffer buf;
    http::request<http::string_body> req;
    http::read(*sock, buf, req, ec);
    if (ec) return;
    if (websocket::is_upgrade(req)) {
      serve_websocket(*sock, req);
      return;
    }
    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(false);
    res.set(http::field::access_control_allow_origin, "*");
    if (req.method() == http::verb::get && req.target() == "/config") {
      res.result(http::status::ok);
      res.set(http::field::content_type, "application/json");
      res.body() = config_payload(cfg).dump();
    } else {
      res.result(http::status::not_found);
      res.set(http::field::content_type, "application/json");
      res.body() = error_event("not found").dump();
    }
    res.prepare_payload();
    http::write(*sock, res, ec);
    sock->shutdown(tcp::socket::shutdown_both, ec);
  }

  void serve_websocket(tcp::socket& sock, const http::request<http::string_body>& req) {
    beast::error_code ec;
    websocket::stream<tcp::socket&> ws(sock);
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    Session session(cfg, writer, derive_seed(0x5e55ULL, sessions++));
    auto send = [&](const json& j) {
      const std::string s = j.dump();
      ws.write(asio::buffer(s), ec);
    };
    send(session.hello());
    while (!ec && !stopping) {
      beast::flat_buffer in;
      ws.read(in, ec);
      if (ec) break;
      for (const auto& ev : session.handle_text(beast::buffers_to_string(in.data()))) {
        send(ev);
        if (ec) break;
      }
    }
  }
};

DemoServer::DemoServer(EnvConfig cfg, std::filesystem::path out, std::string address, unsigned short port)
    : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  impl_->cfg = std::move(cfg);
  impl_->out = std::move(out);
  impl_->address = std::move(address);
  impl_->port = port;
}

DemoServer::~DemoServer() { stop(); }

void DemoServer::start() {
  auto& m = *impl_;
  if (!m.out.empty()) m.writer = std::make_shared<DemoWriter>(m.out, m.cfg);
  try {
    const auto addr = asio::ip::make_address(m.address);
    m.acceptor.emplace(m.ioc);
    const tcp::endpoint ep(addr, m.port);
    m.acceptor->open(ep.protocol());
    m.acceptor->set_option(asio::socket_base::reuse_address(true));
    m.acceptor->bind(ep);
    m.acceptor->listen();
    bound_port_ = m.acceptor->local_endpoint().port();
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot bind " + m.address + ":" + std::to_string(m.port) + ": " + e.what());
  }
  m.accept_next();
  m.io_thread = std::thread([&m] { m.ioc.run(); });
}

void DemoServer::stop() {
  auto& m = *impl_;
  if (m.stopping.exchange(true)) return;
  asio::post(m.ioc, [&m] {
    beast::error_code ec;
    if (m.acceptor) m.acceptor->close(ec);
  });
  if (m.io_thread.joinable()) m.io_thread.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> g(m.mutex);
    for (auto& s : m.sockets) {
      beast::error_code ec;
      s->shutdown(tcp::socket::shutdown_both, ec);
    }
    workers.swap(m.workers);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
  {
    std::lock_guard<std::mutex> g(m.done_mutex);
    m.stopped = true;
  }
  m.done_cv.notify_all();
}

void DemoServer::run() {
  start();
  std::unique_lock<std::mutex> lk(impl_->done_mutex);
  impl_->done_cv.wait(lk, [&] { return impl_->stopped; });
}

}  // namespace scopil
