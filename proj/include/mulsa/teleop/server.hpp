#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "mulsa/teleop/session.hpp"

namespace mulsa::teleop {

// WebSocket front end for a Session. In wall-clock mode a timer ticks the
// session every `period` seconds and broadcasts the packet; in lockstep mode
// packets go out in response to client frames. Slow clients drop queued
// observation packets instead of holding back the loop.
class Server {
 public:
  // Binds immediately; port 0 picks a free port. Throws Error when the port
  // cannot be bound.
  Server(Session& session, unsigned short port, const std::string& address = "127.0.0.1",
         double period = 0.1);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  int client_count() const;

  // Serves on a background thread until stop().
  void start();
  // Serves on the calling thread until stop() (from another thread or a signal).
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocking text-frame client for the wire protocol.
class Client {
 public:
  Client(const std::string& host, unsigned short port);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send(const nlohmann::json& message);
  nlohmann::json receive();
  // Next frame of the given type; other frames are discarded.
  nlohmann::json receive_type(const std::string& type);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Drives the scripted expert (no noise) over the wire against a lockstep
// server. A local mirror simulator supplies the expert's ground truth and is
// checked against the telemetry in every packet. Returns the final packet's
// outcome.
nlohmann::json run_scripted_client(Client& client, Task task, const std::string& scenario, std::uint64_t seed,
                                   bool record = false);

}  // namespace mulsa::teleop
