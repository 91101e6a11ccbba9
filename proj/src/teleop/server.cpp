#include "mulsa/teleop/server.hpp"

#include <atomic>
#include <deque>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mulsa/common/error.hpp"
#include "mulsa/demos/experts.hpp"

namespace mulsa::teleop {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedPackets = 4;

class Connection;

struct Hub {
  Session& session;
  std::set<std::shared_ptr<Connection>> clients;
  std::atomic<int> count{0};
  explicit Hub(Session& s) : session(s) {}
  void broadcast(const std::string& text);
};

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.clients.insert(self);
      ++self->hub_.count;
      self->send(std::make_shared<const std::string>(self->hub_.session.current_packet()), false);
      self->read();
    });
  }

  // Observation packets may be dropped when the queue is full; replies never.
  void send(std::shared_ptr<const std::string> text, bool reply) {
    if (closed_) return;
    if (!reply) {
      std::size_t obs = 0;
      for (const auto& q : queue_) obs += !q.reply;
      // Keep the in-flight head; drop the oldest waiting packet.
      if (obs >= kMaxQueuedPackets) {
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it) {
          if (!it->reply) {
            queue_.erase(it);
            break;
          }
        }
      }
    }
    queue_.push_back({std::move(text), reply});
    if (!writing_) write();
  }

 private:
  struct Outgoing {
    std::shared_ptr<const std::string> text;
    bool reply;
  };

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      if (!self->ws_.got_text()) return self->drop();  // protocol violation
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      auto result = self->hub_.session.handle_message(text);
      if (result.reply) self->send(std::make_shared<const std::string>(std::move(*result.reply)), true);
      if (result.packet) self->hub_.broadcast(*result.packet);
      self->read();
    });
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front().text), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      self->queue_.pop_front();
      if (self->queue_.empty()) {
        self->writing_ = false;
      } else {
        self->write();
      }
    });
  }

  void drop() {
    if (closed_) return;
    closed_ = true;
    if (hub_.clients.erase(shared_from_this())) --hub_.count;
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<Outgoing> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

void Hub::broadcast(const std::string& text) {
  auto shared = std::make_shared<const std::string>(text);
  const auto copy = clients;
  for (const auto& c : copy) c->send(shared, false);
}

}  // namespace

struct Server::Impl {
  Session& session;
  double period;
  asio::io_context io;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  Hub hub;
  std::thread thread;
  std::chrono::steady_clock::time_point next_tick;

  Impl(Session& s, unsigned short port, const std::string& address, double p)
      : session(s), period(p), acceptor(io), timer(io), hub(s) {
    beast::error_code ec;
    const tcp::endpoint ep(asio::ip::make_address(address, ec), port);
    if (ec) throw ConfigError("bad listen address '" + address + "'");
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw Error("cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), hub)->start();
      accept();
    });
  }

  void schedule() {
    next_tick += std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(period));
    timer.expires_at(next_tick);
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      hub.broadcast(session.tick());
      schedule();
    });
  }

  void prepare() {
    io.restart();
    accept();
    if (!session.lockstep()) {
      next_tick = std::chrono::steady_clock::now();
      schedule();
    }
  }
};

Server::Server(Session& session, unsigned short port, const std::string& address, double period)
    : impl_(std::make_unique<Impl>(session, port, address, period)) {
  if (!(period > 0.0)) throw ConfigError("tick period must be positive");
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

int Server::client_count() const { return impl_->hub.count.load(); }

void Server::start() {
  if (impl_->thread.joinable()) return;
  impl_->prepare();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void Server::run() {
  impl_->prepare();
  impl_->io.run();
}

void Server::stop() {
  impl_->io.stop();
  if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
  beast::error_code ignored;
  impl_->acceptor.close(ignored);
  impl_->timer.cancel();
  impl_->hub.clients.clear();
  impl_->hub.count = 0;
}

struct Client::Impl {
  asio::io_context io;
  websocket::stream<tcp::socket> ws{io};
  beast::flat_buffer buffer;
};

Client::Client(const std::string& host, unsigned short port) : impl_(std::make_unique<Impl>()) {
  tcp::resolver resolver(impl_->io);
  beast::error_code ec;
  const auto results = resolver.resolve(host, std::to_string(port), ec);
  if (!ec) asio::connect(impl_->ws.next_layer(), results.begin(), results.end(), ec);
  if (!ec) impl_->ws.handshake(host + ":" + std::to_string(port), "/", ec);
  if (ec) throw Error("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
  impl_->ws.text(true);
}

Client::~Client() { close(); }

void Client::send(const nlohmann::json& message) {
  const std::string text = message.dump();
  beast::error_code ec;
  impl_->ws.write(asio::buffer(text), ec);
  if (ec) throw Error("send failed: " + ec.message());
}

nlohmann::json Client::receive() {
  beast::error_code ec;
  impl_->ws.read(impl_->buffer, ec);
  if (ec) throw Error("receive failed: " + ec.message());
  const std::string text = beast::buffers_to_string(impl_->buffer.data());
  impl_->buffer.consume(impl_->buffer.size());
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed frame from server: ") + e.what());
  }
}

nlohmann::json Client::receive_type(const std::string& type) {
  for (;;) {
    auto msg = receive();
    if (msg.value("type", "") == type) return msg;
  }
}

void Client::close() {
  if (!impl_ || !impl_->ws.is_open()) return;
  beast::error_code ignored;
  impl_->ws.close(websocket::close_code::normal, ignored);
}

nlohmann::json run_scripted_client(Client& client, Task task, const std::string& scenario, std::uint64_t seed,
                                   bool record) {
  auto mirror = sim::make_environment(task);
  mirror->reset(scenario, seed);
  demos::Expert expert({task, 0.0, seed});
  client.send({{"type", "reset"}, {"scenario", scenario}, {"seed", seed}});
  nlohmann::json packet = client.receive_type("obs");
  if (record) {
    client.send({{"type", "record"}, {"on", true}});
    packet = client.receive_type("obs");
  }
  for (;;) {
    if (packet.contains("state") && packet["state"] != mirror->state_json()) {
      throw Error("server state diverged from the mirror at tick " + std::to_string(packet.value("tick", -1)));
    }
    if (packet.value("terminal", false)) break;
    const Action a = expert.act(*mirror);
    client.send({{"type", "action"}, {"values", a.values}});
    mirror->step(a);
    packet = client.receive_type("obs");
  }
  if (record) {
    client.send({{"type", "record"}, {"on", false}});
    client.receive_type("obs");
  }
  return packet.at("outcome");
}

}  // namespace mulsa::teleop
