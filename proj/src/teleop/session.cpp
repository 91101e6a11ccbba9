#include "mulsa/teleop/session.hpp"

#include <algorithm>
#include <cstdio>

#include "mulsa/common/bytes.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/common/image.hpp"

namespace mulsa::teleop {

namespace {

std::string error_frame(const std::string& message) {
  return nlohmann::json{{"type", "error"}, {"message", message}}.dump();
}

std::string png_base64(const Image& image) {
  const auto bytes = encode_png(image);
  return base64_encode(bytes);
}

}  // namespace

Session::Session(SessionConfig config) : config_(std::move(config)) {
  env_ = sim::make_environment(config_.task, config_.scenario_file);
  if (config_.scenario.empty()) config_.scenario = env_->scenarios().front();
  reset_env(config_.scenario, config_.seed);
}

void Session::reset_env(const std::string& scenario, std::uint64_t seed) {
  const auto known = env_->scenarios();
  if (std::find(known.begin(), known.end(), scenario) == known.end()) {
    throw ConfigError("unknown scenario '" + scenario + "'");
  }
  obs_ = env_->reset(scenario, seed);
  scenario_ = scenario;
  seed_ = seed;
  streams_.clear();
  streams_.push(obs_);
  mailbox_.reset();
  if (recording_) {
    episode_.emplace();
    episode_->metadata = {config_.task, scenario_, seed_, EpisodeSource::kTeleop, env_->initial_condition()};
    episode_->action_spec = env_->action_spec();
  }
}

void Session::finish_recording() {
  if (!episode_) return;
  Episode ep = std::move(*episode_);
  episode_.reset();
  if (ep.steps.empty() || config_.record_dir.empty()) return;
  ep.outcome = env_->outcome();
  char name[32];
  std::snprintf(name, sizeof(name), "teleop_%04d", episode_counter_++);
  const auto dir = config_.record_dir / name;
  save_episode(ep, dir);
  saved_.push_back(dir);
}

Session::MessageResult Session::handle_message(const std::string& text) {
  MessageResult result;
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    result.reply = error_frame(std::string("malformed JSON: ") + e.what());
    return result;
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    result.reply = error_frame("message needs a string 'type'");
    return result;
  }
  const std::string type = msg["type"];
  std::lock_guard lock(mutex_);
  try {
    if (type == "ping") {
      result.reply = nlohmann::json{{"type", "pong"}, {"tick", ticks_}}.dump();
    } else if (type == "action") {
      const auto values = msg.at("values").get<std::vector<int>>();
      const Action a = Action::from_values(values, env_->action_spec());
      mailbox_ = a;
      if (config_.lockstep) result.packet = tick_locked();
    } else if (type == "reset") {
      Control c{Control::kReset, msg.value("scenario", scenario_), msg.value("seed", seed_), false};
      const auto known = env_->scenarios();
      if (std::find(known.begin(), known.end(), c.scenario) == known.end()) {
        throw ConfigError("unknown scenario '" + c.scenario + "'");
      }
      controls_.push_back(c);
      if (config_.lockstep) {
        apply_controls();
        result.packet = make_packet();
      }
    } else if (type == "record") {
      controls_.push_back({Control::kRecord, {}, 0, msg.at("on").get<bool>()});
      if (config_.lockstep) {
        apply_controls();
        result.packet = make_packet();
      }
    } else {
      result.reply = error_frame("unknown message type '" + type + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    result.reply = error_frame(std::string("bad ") + type + " message: " + e.what());
  } catch (const Error& e) {
    result.reply = error_frame(e.what());
  }
  return result;
}

void Session::apply_controls() {
  for (const Control& c : controls_) {
    if (c.kind == Control::kReset) {
      finish_recording();
      reset_env(c.scenario, c.seed);
    } else if (c.on != recording_) {
      recording_ = c.on;
      if (recording_) {
        episode_.emplace();
        episode_->metadata = {config_.task, scenario_, seed_, EpisodeSource::kTeleop, env_->initial_condition()};
        episode_->action_spec = env_->action_spec();
      } else {
        finish_recording();
      }
    }
  }
  controls_.clear();
}

std::string Session::tick() {
  std::lock_guard lock(mutex_);
  return tick_locked();
}

std::string Session::tick_locked() {
  const bool had_reset = std::any_of(controls_.begin(), controls_.end(),
                                     [](const Control& c) { return c.kind == Control::kReset; });
  apply_controls();
  if (!had_reset && !env_->terminated()) {
    const Action a = mailbox_ ? *mailbox_ : Action::zero(env_->action_spec());
    mailbox_.reset();
    if (recording_ && episode_) episode_->steps.push_back({obs_, a, obs_.timestamp()});
    obs_ = env_->step(a);
    streams_.push(obs_);
    ++ticks_;
    if (env_->terminated()) finish_recording();
  }
  return make_packet();
}

std::string Session::make_packet() const {
  nlohmann::json p;
  p["type"] = "obs";
  p["tick"] = env_->step_count();
  p["task"] = to_string(config_.task);
  p["scenario"] = scenario_;
  p["seed"] = seed_;
  p["timestamp"] = obs_.timestamp();
  p["visual"] = png_base64(obs_.visual.image);
  p["tactile"] = png_base64(obs_.tactile.image);
  const auto snap = streams_.snapshot();
  const auto mel = segment_spectrogram(extract_audio_segment(snap.audio, obs_.timestamp(), kWindowStride));
  nlohmann::json grid = nlohmann::json::array();
  for (int m = 0; m < mel.n_mels; ++m) {
    nlohmann::json row = nlohmann::json::array();
    for (int f = 0; f < mel.n_frames; ++f) row.push_back(mel.at(m, f));
    grid.push_back(std::move(row));
  }
  p["mel"] = std::move(grid);
  if (config_.task == Task::kPouring) {
    const auto it = obs_.aux.find("mass_in_fixed_g");
    p["scale_g"] = it == obs_.aux.end() ? 0.0 : it->second;
  }
  p["recording"] = recording_;
  p["terminal"] = env_->terminated();
  if (env_->terminated()) p["outcome"] = env_->outcome();
  if (config_.telemetry) p["state"] = env_->state_json();
  return p.dump();
}

std::string Session::current_packet() const {
  std::lock_guard lock(mutex_);
  return make_packet();
}

int Session::tick_count() const {
  std::lock_guard lock(mutex_);
  return ticks_;
}

bool Session::recording() const {
  std::lock_guard lock(mutex_);
  return recording_;
}

std::optional<Action> Session::pending_action() const {
  std::lock_guard lock(mutex_);
  return mailbox_;
}

std::vector<std::filesystem::path> Session::saved_episodes() const {
  std::lock_guard lock(mutex_);
  return saved_;
}

std::string Session::scenario() const {
  std::lock_guard lock(mutex_);
  return scenario_;
}

void Session::flush() {
  std::lock_guard lock(mutex_);
  finish_recording();
  recording_ = false;
}

}  // namespace mulsa::teleop
