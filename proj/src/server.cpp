#include "depthrover/server.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "depthrover/eval.hpp"
#include "depthrover/protocol.hpp"
#include "depthrover/simulation.hpp"

namespace depthrover {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

// Messages a client only needs the latest of.
bool coalesced(MessageType t) {
  return t == MessageType::frame || t == MessageType::depth || t == MessageType::pose ||
         t == MessageType::detections || t == MessageType::snapshot_meta ||
         t == MessageType::telemetry;
}

WireMessage error_message(const std::string& code, const std::string& text) {
  WireMessage m;
  m.type = MessageType::error;
  m.payload = {{"code", code}, {"message", text}};
  return m;
}

}  // namespace

class Session;

struct Command {
  std::weak_ptr<Session> from;
  ClientRequest request;
};

/// Callbacks a session makes into the server; all run on the io thread.
struct SessionHost {
  virtual ~SessionHost() = default;
  virtual void on_open(const std::shared_ptr<Session>& s) = 0;
  virtual void on_text(const std::shared_ptr<Session>& s, const std::string& text) = 0;
  virtual void on_close(const std::shared_ptr<Session>& s) = 0;
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, SessionHost& host) : ws_(std::move(socket)), host_(host) {}

  void run() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] {
      self->ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      self->ws_.text(true);
      self->ws_.async_accept([self](beast::error_code ec) {
        if (ec) return;
        self->open_ = true;
        self->host_.on_open(self);
        self->read();
      });
    });
  }

  /// Thread-safe. The server-to-client seq is assigned here, so it is
  /// strictly increasing over the messages actually written.
  void send(WireMessage m) {
    net::post(ws_.get_executor(), [self = shared_from_this(), m = std::move(m)]() mutable {
      if (!self->open_) return;
      if (coalesced(m.type)) {
        // Replace a pending (not yet in-flight) message of the same type.
        for (std::size_t i = self->writing_ ? 1 : 0; i < self->queue_.size(); ++i) {
          if (self->queue_[i].type == m.type) {
            m.seq = self->queue_[i].seq;
            self->queue_[i] = std::move(m);
            ++self->dropped_;
            return;
          }
        }
      }
      m.seq = ++self->out_seq_;
      self->queue_.push_back(std::move(m));
      if (!self->writing_) self->write();
    });
  }

  /// Last seq accepted from the client; inbound seq must increase.
  std::uint64_t& in_seq() { return in_seq_; }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (!self->open_) return;
      self->open_ = false;
      beast::error_code ec;
      self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ec);
      self->ws_.next_layer().socket().close(ec);
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->host_.on_close(self);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->host_.on_text(self, text);
      self->read();
    });
  }

  void write() {
    writing_ = true;
    auto text = std::make_shared<std::string>(encode(queue_.front()));
    ws_.async_write(net::buffer(*text),
                    [self = shared_from_this(), text](beast::error_code ec, std::size_t) {
                      self->queue_.pop_front();
                      self->writing_ = false;
                      if (ec) {
                        self->open_ = false;
                        self->queue_.clear();
                        return;
                      }
                      if (!self->queue_.empty()) self->write();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionHost& host_;
  beast::flat_buffer buffer_;
  std::deque<WireMessage> queue_;
  bool writing_ = false;
  bool open_ = false;
  std::uint64_t out_seq_ = 0;
  std::uint64_t in_seq_ = 0;
  std::uint64_t dropped_ = 0;
};

struct TeleopServer::Impl : SessionHost {
  Impl(AppConfig c, SceneDescription scene)
      : config(std::move(c)), world(std::move(scene), config), acceptor(ioc),
        telemetry(config.scene.seed, false) {
    config.schedule.clock = ClockKind::real;
    config.validate();
    config.server.validate();
    state = initial_state(config.mount);
    world.set_rover_state(state);
  }

  // Network side.

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Session>(std::move(socket), *this)->run();
      accept();
    });
  }

  void on_open(const std::shared_ptr<Session>& s) override {
    {
      std::lock_guard lock(sessions_mutex);
      sessions.insert(s);
    }
    WireMessage hello;
    hello.type = MessageType::hello;
    hello.ts = now();
    hello.payload = {{"server", "depthrover"},
                     {"protocol", 1},
                     {"detection_rate", config.schedule.detection_rate},
                     {"frame_rate_limit", config.server.frame_rate_limit},
                     {"image_width", config.mount.detection_width},
                     {"image_height", config.mount.detection_height},
                     {"halted", rover_state().halted}};
    s->send(hello);
    std::lock_guard lock(latest_mutex);
    if (latest_depth) s->send(*latest_depth);
  }

  void on_text(const std::shared_ptr<Session>& s, const std::string& text) override {
    WireMessage m;
    ClientRequest request;
    try {
      m = decode(text);
      request = parse_request(m);
    } catch (const ProtocolError& e) {
      s->send(stamped(error_message("malformed", e.what())));
      return;
    }
    if (m.seq <= s->in_seq()) {
      s->send(stamped(error_message("bad_seq", "seq must increase")));
      return;
    }
    s->in_seq() = m.seq;
    std::lock_guard lock(commands_mutex);
    commands.push_back({s, std::move(request)});
  }

  void on_close(const std::shared_ptr<Session>& s) override {
    std::lock_guard lock(sessions_mutex);
    sessions.erase(s);
  }

  void broadcast(const WireMessage& m) {
    std::vector<std::shared_ptr<Session>> targets;
    {
      std::lock_guard lock(sessions_mutex);
      targets.assign(sessions.begin(), sessions.end());
    }
    for (const auto& s : targets) s->send(m);
  }

  static void reply(const std::weak_ptr<Session>& to, const WireMessage& m) {
    if (auto s = to.lock()) s->send(m);
  }

  double now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }

  WireMessage stamped(WireMessage m) const {
    m.ts = now();
    return m;
  }

  // Control side; everything below runs on the pipeline's fast channel.

  RoverState rover_state() const {
    std::lock_guard lock(state_mutex);
    return state;
  }

  std::optional<PathPlan> find_path(const std::string& name) const {
    static const std::regex kSafe("[A-Za-z0-9_.-]+");
    if (config.server.paths_dir.empty() || !std::regex_match(name, kSafe) || name.front() == '.')
      return std::nullopt;
    const std::filesystem::path file = std::filesystem::path(config.server.paths_dir) / (name + ".json");
    if (!std::filesystem::exists(file)) return std::nullopt;
    return path_from_json(read_json_file(file));
  }

  void apply(const Command& c, RoverState& s, double t) {
    if (const auto* cmd = std::get_if<CmdRequest>(&c.request)) {
      const KeyCommand key = map_key(cmd->key);
      if (key.warning) reply(c.from, stamped(error_message("unknown_key", *key.warning)));
      if (s.halted && !key.command.is_stop()) {
        reply(c.from, stamped(error_message("halted", "rover is halted; send resume first")));
        return;
      }
      plan.reset();
      manual = key.command;
    } else if (const auto* load = std::get_if<PathLoadRequest>(&c.request)) {
      std::optional<PathPlan> p = load->plan;
      if (load->name) {
        try {
          p = find_path(*load->name);
        } catch (const std::exception& e) {
          reply(c.from, stamped(error_message("bad_path", e.what())));
          return;
        }
        if (!p) {
          reply(c.from, stamped(error_message("unknown_path", "no path named '" + *load->name + "'")));
          return;
        }
      }
      if (s.halted) {
        reply(c.from, stamped(error_message("halted", "rover is halted; send resume first")));
        return;
      }
      plan = *p;
      plan_start = t;
      manual = MotorCommand::stop();
    } else {
      if (!s.halted) {
        reply(c.from, stamped(error_message("not_halted", "rover is not halted")));
        return;
      }
      s = resume(s);
      manual = MotorCommand::stop();
    }
  }

  void on_snapshot(const PerceptionSnapshot& snap) {
    const double t = snap.timestamp;
    const double period = 1.0 / config.schedule.detection_rate;
    std::deque<Command> pending;
    {
      std::lock_guard lock(commands_mutex);
      pending.swap(commands);
    }
    RoverState s = rover_state();
    for (const Command& c : pending) apply(c, s, t);

    const double plan_t = plan ? t - plan_start : 0.0;
    if (plan && plan_t >= plan->total_duration()) plan.reset();
    const MotorCommand command = plan ? plan->command_at(plan_t) : manual;

    // Backing away or turning on the spot stays possible after a resume.
    if (!s.halted && command.left + command.right > 0) {
      const SafetyDecision decision = safety_gate(snap, config.safety, world.detection_image_width());
      if (decision.halt) {
        s = halt(s, decision.reason);
        plan.reset();
        manual = MotorCommand::stop();
        WireMessage m;
        m.type = MessageType::halt_event;
        m.ts = t;
        m.payload = {{"reason", decision.reason}, {"x", s.position.x()}, {"y", s.position.y()},
                     {"snapshot_seq", snap.seq}};
        broadcast(m);
      }
    }
    if (!s.halted) {
      if (plan)
        s = advance_plan(s, *plan, plan_t, plan_t + period, config.drive);
      else if (!command.is_stop())
        s = step(s, command, period, config.drive);
      else
        s.linear_speed = s.angular_speed = 0.0;
    }
    {
      std::lock_guard lock(state_mutex);
      state = s;
    }
    world.set_rover_state(s);
    push_tick(snap, s);
  }

  void push_tick(const PerceptionSnapshot& snap, const RoverState& s) {
    const double t = snap.timestamp;
    WireMessage pose;
    pose.type = MessageType::pose;
    pose.ts = t;
    pose.payload = {{"x", s.position.x()},
                    {"y", s.position.y()},
                    {"heading", s.heading},
                    {"linear_speed", s.linear_speed},
                    {"angular_speed", s.angular_speed},
                    {"halted", s.halted},
                    {"halt_reason", s.halt_reason ? nlohmann::json(*s.halt_reason) : nlohmann::json()},
                    {"mode", plan ? "path" : "manual"},
                    {"path", plan ? nlohmann::json(plan->name) : nlohmann::json()}};
    broadcast(pose);

    WireMessage dets;
    dets.type = MessageType::detections;
    dets.ts = t;
    nlohmann::json items = nlohmann::json::array();
    for (const Detection& d : snap.detections) items.push_back(detection_to_json(d));
    dets.payload = {{"snapshot_seq", snap.seq}, {"items", items}};
    broadcast(dets);

    WireMessage meta;
    meta.type = MessageType::snapshot_meta;
    meta.ts = t;
    meta.payload = {{"snapshot_seq", snap.seq},
                    {"detections_ts", snap.detections_timestamp},
                    {"has_depth", bool(snap.depth)},
                    {"depth_staleness_s", snap.depth ? nlohmann::json(snap.depth_staleness) : nlohmann::json()}};
    broadcast(meta);

    if (t >= next_telemetry) {
      next_telemetry = t + 1.0;
      WireMessage m;
      m.type = MessageType::telemetry;
      m.ts = t;
      m.payload = to_json(telemetry.sample(t));
      broadcast(m);
    }

    if (t >= next_frame) {
      next_frame = t + 1.0 / config.server.frame_rate_limit;
      const GrayImage view = world.render_view(t);
      WireMessage m;
      m.type = MessageType::frame;
      m.ts = t;
      m.payload = {{"format", "png"},
                   {"width", int(view.cols())},
                   {"height", int(view.rows())},
                   {"snapshot_seq", snap.seq},
                   {"data", base64_encode(encode_png(view))}};
      broadcast(m);
    }

    if (snap.depth && snap.depth->capture_timestamp != last_depth_capture) {
      last_depth_capture = snap.depth->capture_timestamp;
      const DepthMap& d = snap.depth->depth;
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x)
          if (d.is_valid(x, y)) {
            lo = std::min(lo, d.at(x, y));
            hi = std::max(hi, d.at(x, y));
          }
      if (!(hi > lo)) lo = 0.0, hi = std::max(hi, 1.0);
      const RgbImage preview = colorize_depth(d, lo, hi);
      WireMessage m;
      m.type = MessageType::depth;
      m.ts = t;
      m.payload = {{"format", "png"},
                   {"width", preview.width},
                   {"height", preview.height},
                   {"min_m", lo},
                   {"max_m", hi},
                   {"capture_ts", snap.depth->capture_timestamp},
                   {"staleness_s", snap.depth_staleness},
                   {"backend", snap.depth->backend_id},
                   {"data", base64_encode(encode_png(preview))}};
      {
        std::lock_guard lock(latest_mutex);
        latest_depth = m;
      }
      broadcast(m);
    }
  }

  AppConfig config;
  SimulatedWorld world;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::thread control_thread;
  std::unique_ptr<PerceptionPipeline> pipeline;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  std::mutex sessions_mutex;
  std::set<std::shared_ptr<Session>> sessions;

  std::mutex commands_mutex;
  std::deque<Command> commands;

  mutable std::mutex state_mutex;
  RoverState state;

  // Owned by the control loop.
  MotorCommand manual;
  std::optional<PathPlan> plan;
  double plan_start = 0.0;
  double next_telemetry = 0.0;
  double next_frame = 0.0;
  double last_depth_capture = -1.0;
  TelemetrySource telemetry;

  std::mutex latest_mutex;
  std::optional<WireMessage> latest_depth;
  bool running = false;
};

TeleopServer::TeleopServer(AppConfig config, SceneDescription scene)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(scene))) {}

TeleopServer::~TeleopServer() { stop(); }

void TeleopServer::start() {
  Impl& m = *impl_;
  if (m.running) return;
  const tcp::endpoint endpoint(net::ip::make_address(m.config.server.address), m.config.server.port);
  try {
    m.acceptor.open(endpoint.protocol());
    m.acceptor.set_option(net::socket_base::reuse_address(true));
    m.acceptor.bind(endpoint);
    m.acceptor.listen(net::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw IoError("cannot listen on " + m.config.server.address + ":" +
                  std::to_string(m.config.server.port) + ": " + e.what());
  }
  m.running = true;
  m.started = std::chrono::steady_clock::now();
  m.accept();
  m.io_thread = std::thread([&m] { m.ioc.run(); });

  PipelineSinks sinks;
  sinks.on_snapshot = [&m](const PerceptionSnapshot& snap) { m.on_snapshot(snap); };
  m.pipeline = std::make_unique<PerceptionPipeline>(m.config.schedule, m.world, std::move(sinks));
  m.control_thread = std::thread([&m] { m.pipeline->run(std::numeric_limits<double>::infinity()); });
}

void TeleopServer::stop() {
  Impl& m = *impl_;
  if (!m.running) return;
  m.running = false;
  m.pipeline->stop();
  if (m.control_thread.joinable()) m.control_thread.join();
  net::post(m.ioc, [&m] {
    beast::error_code ec;
    m.acceptor.close(ec);
  });
  {
    std::lock_guard lock(m.sessions_mutex);
    for (const auto& s : m.sessions) s->close();
  }
  m.ioc.stop();
  if (m.io_thread.joinable()) m.io_thread.join();
  std::lock_guard lock(m.sessions_mutex);
  m.sessions.clear();
}

unsigned short TeleopServer::port() const {
  beast::error_code ec;
  const auto endpoint = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : endpoint.port();
}

RoverState TeleopServer::rover_state() const { return impl_->rover_state(); }

}  // namespace depthrover
