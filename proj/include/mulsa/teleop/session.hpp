#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/sensordata/episode.hpp"
#include "mulsa/sim/environment.hpp"

namespace mulsa::teleop {

struct SessionConfig {
  Task task = Task::kPacking;
  std::string scenario;  // empty means the task's first scenario
  std::uint64_t seed = 0;
  std::filesystem::path record_dir;  // empty disables saving
  std::string scenario_file;
  // Lockstep: every accepted action message advances exactly one tick instead
  // of the wall-clock loop. Used by scripted clients.
  bool lockstep = false;
  // Include ground-truth simulator state in packets.
  bool telemetry = true;
};

// One simulator session behind the wire protocol. Transport-agnostic: the
// network layer feeds text frames to handle_message() and calls tick() at the
// policy rate. Thread-safe.
class Session {
 public:
  explicit Session(SessionConfig config);

  struct MessageResult {
    std::optional<std::string> reply;  // for the sender only (pong or error frame)
    // Lockstep only: the frame was applied immediately and the returned
    // packet should be broadcast.
    std::optional<std::string> packet;
  };

  // Applies a client frame. In wall-clock mode actions go to the mailbox
  // (latest wins) and control messages apply at the next tick boundary.
  MessageResult handle_message(const std::string& text);

  // Applies pending control messages, then one env step with the latest
  // mailbox action (zero when none arrived). Returns the packet to broadcast.
  // A terminated episode stays put until reset.
  std::string tick();

  // Packet for the current observation without advancing.
  std::string current_packet() const;

  bool lockstep() const { return config_.lockstep; }
  int tick_count() const;
  bool recording() const;
  std::optional<Action> pending_action() const;
  std::vector<std::filesystem::path> saved_episodes() const;
  Task task() const { return config_.task; }
  std::string scenario() const;

  // Ends any in-progress recording (saving it) without further ticks.
  void flush();

 private:
  struct Control {
    enum Kind { kReset, kRecord } kind;
    std::string scenario;
    std::uint64_t seed = 0;
    bool on = false;
  };

  std::string tick_locked();
  void apply_controls();
  void reset_env(const std::string& scenario, std::uint64_t seed);
  void finish_recording();
  std::string make_packet() const;

  SessionConfig config_;
  std::unique_ptr<sim::Environment> env_;
  mutable std::mutex mutex_;
  std::optional<Action> mailbox_;
  std::vector<Control> controls_;
  Observation obs_;
  SensorStreams streams_;
  std::string scenario_;
  std::uint64_t seed_ = 0;
  int ticks_ = 0;
  bool recording_ = false;
  std::optional<Episode> episode_;
  std::vector<std::filesystem::path> saved_;
  int episode_counter_ = 0;
};

}  // namespace mulsa::teleop
