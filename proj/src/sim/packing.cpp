#include "mulsa/sim/packing.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mulsa/common/error.hpp"
#include "mulsa/common/rng.hpp"
#include "mulsa/sim/raster.hpp"

namespace mulsa::sim {
namespace {

constexpr const char* kScenarioNames[] = {"hard_slanted", "soft_slanted", "left_flat", "back_flat"};
constexpr const char* kTiltNames[] = {"none", "left", "right", "back", "front"};
constexpr const char* kContactNames[] = {"none", "bump", "wall", "floor"};
constexpr const char* kFailureNames[] = {"none", "timeout", "stuck_on_hard", "out_of_bounds"};

constexpr Rgb kSky = {200, 210, 225};
constexpr Rgb kTable = {120, 90, 60};
constexpr Rgb kWall = {90, 90, 100};
constexpr Rgb kPeg = {220, 120, 40};
constexpr Rgb kGripper = {50, 50, 55};
constexpr Rgb kDivider = {30, 30, 30};

// Visual layout: front view (x, z) on the left half, side view (y, z) on the
// right half.
constexpr int kPanelWidth = kVisualWidth / 2;
constexpr int kPxPerUnit = 4;
constexpr int kRowsPerUnit = 5;
constexpr int kFloorRow = 220;

bool in_block(const Block& b, int x, int y) {
  const int v = b.axis == 'x' ? x : y;
  return v >= b.min && v <= b.max;
}

double tilt_angle(TiltDirection d) {
  switch (d) {
    case TiltDirection::kRight: return 0.0;
    case TiltDirection::kBack: return M_PI / 2;
    case TiltDirection::kLeft: return M_PI;
    case TiltDirection::kFront: return 3 * M_PI / 2;
    case TiltDirection::kNone: break;
  }
  return 0.0;
}

template <typename E, std::size_t N>
E enum_from(const char* const (&names)[N], const std::string& name, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (name == names[i]) return static_cast<E>(i);
  throw ConfigError(std::string("unknown ") + what + ": " + name);
}

}  // namespace

void to_json(nlohmann::json& j, const Block& b) {
  j = {{"axis", std::string(1, b.axis)}, {"min", b.min}, {"max", b.max}, {"top", b.top}};
}

void from_json(const nlohmann::json& j, Block& b) {
  const auto axis = j.at("axis").get<std::string>();
  if (axis != "x" && axis != "y") throw ConfigError("block axis must be x or y");
  b.axis = axis[0];
  j.at("min").get_to(b.min);
  j.at("max").get_to(b.max);
  j.at("top").get_to(b.top);
  if (b.min > b.max || b.top < 0) throw ConfigError("invalid block extent");
}

std::string to_string(PackingScenario s) { return kScenarioNames[static_cast<int>(s)]; }
PackingScenario packing_scenario_from_string(const std::string& name) {
  return enum_from<PackingScenario>(kScenarioNames, name, "packing scenario");
}
std::string to_string(TiltDirection d) { return kTiltNames[static_cast<int>(d)]; }
TiltDirection tilt_direction_from_string(const std::string& name) {
  return enum_from<TiltDirection>(kTiltNames, name, "tilt direction");
}
std::string to_string(ContactKind c) { return kContactNames[static_cast<int>(c)]; }
std::string to_string(PackingFailure f) { return kFailureNames[static_cast<int>(f)]; }

PackingConfig PackingConfig::defaults() {
  PackingConfig c;
  const Block left_half{'x', -4, 0, 6};
  c.bumps["hard_slanted"] = {"slanted", true, left_half, TiltDirection::kRight, 0.35, {}};
  c.bumps["soft_slanted"] = {"slanted", false, left_half, TiltDirection::kRight, 0.35, {{'x', 1, 4, 6}}};
  c.bumps["left_flat"] = {"flat", true, left_half, TiltDirection::kRight, 0.15, {}};
  c.bumps["back_flat"] = {"flat", true, {'y', 0, 4, 6}, TiltDirection::kFront, 0.15, {}};
  return c;
}

const BumpConfig& PackingConfig::bump(PackingScenario s) const {
  const auto it = bumps.find(to_string(s));
  if (it == bumps.end()) throw ConfigError("scenario file has no entry for " + to_string(s));
  return it->second;
}

void to_json(nlohmann::json& j, const PackingConfig& c) {
  j = {{"step_size", c.step_size},       {"max_steps", c.max_steps},
       {"workspace_half", c.workspace_half}, {"workspace_top", c.workspace_top},
       {"interior_half", c.interior_half}, {"wall_height", c.wall_height},
       {"peg_length", c.peg_length},     {"k_soft", c.k_soft},
       {"k_hard", c.k_hard},             {"max_tilt", c.max_tilt},
       {"start_xy", c.start_xy},         {"start_z", c.start_z},
       {"pre_insertion", c.pre_insertion}, {"A_hard", c.A_hard},
       {"A_soft", c.A_soft},             {"epsilon", c.epsilon},
       {"tau_hard", c.tau_hard},         {"tau_soft", c.tau_soft},
       {"scrape_gain", c.scrape_gain}};
  nlohmann::json scenarios = nlohmann::json::object();
  for (const auto& [name, b] : c.bumps) {
    scenarios[name] = {{"bump_type", b.bump_type}, {"hard", b.hard},
                       {"bump_pose", b.bump_pose}, {"tilt", to_string(b.tilt)},
                       {"tilt_magnitude", b.tilt_magnitude}, {"ledges", b.ledges}};
  }
  j["scenarios"] = scenarios;
}

void from_json(const nlohmann::json& j, PackingConfig& c) {
  c = PackingConfig::defaults();
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("step_size", c.step_size);
  opt("max_steps", c.max_steps);
  opt("workspace_half", c.workspace_half);
  opt("workspace_top", c.workspace_top);
  opt("interior_half", c.interior_half);
  opt("wall_height", c.wall_height);
  opt("peg_length", c.peg_length);
  opt("k_soft", c.k_soft);
  opt("k_hard", c.k_hard);
  opt("max_tilt", c.max_tilt);
  opt("start_xy", c.start_xy);
  opt("start_z", c.start_z);
  opt("pre_insertion", c.pre_insertion);
  opt("A_hard", c.A_hard);
  opt("A_soft", c.A_soft);
  opt("epsilon", c.epsilon);
  opt("tau_hard", c.tau_hard);
  opt("tau_soft", c.tau_soft);
  opt("scrape_gain", c.scrape_gain);
  if (j.contains("scenarios")) {
    c.bumps.clear();
    for (const auto& [name, s] : j.at("scenarios").items()) {
      packing_scenario_from_string(name);
      BumpConfig b;
      s.at("bump_type").get_to(b.bump_type);
      s.at("hard").get_to(b.hard);
      s.at("bump_pose").get_to(b.bump_pose);
      b.tilt = tilt_direction_from_string(s.at("tilt").get<std::string>());
      s.at("tilt_magnitude").get_to(b.tilt_magnitude);
      if (s.contains("ledges")) s.at("ledges").get_to(b.ledges);
      c.bumps[name] = b;
    }
  }
  if (c.k_soft < 1 || c.k_hard < 1) throw ConfigError("compliance constants must be >= 1");
  if (c.max_steps < 1) throw ConfigError("max_steps must be positive");
  if (!(c.A_soft < c.A_hard / 4)) throw ConfigError("A_soft must be below A_hard / 4");
  if (c.start_z[0] <= c.wall_height) throw ConfigError("start region must lie above the walls");
}

std::array<double, 3> PackingState::position(double step_size) const {
  return {cell[0] * step_size, cell[1] * step_size, cell[2] * step_size};
}

PackingSim::PackingSim(PackingConfig config)
    : config_(std::move(config)), spec_(ActionSpec::packing()) {
  spec_.step_sizes = {config_.step_size, config_.step_size, config_.step_size};
  for (int s = 0; s < 4; ++s) config_.bump(static_cast<PackingScenario>(s));
}

std::vector<std::string> PackingSim::scenarios() const {
  return {std::begin(kScenarioNames), std::end(kScenarioNames)};
}

bool PackingSim::in_interior(int x, int y) const {
  return std::abs(x) <= config_.interior_half && std::abs(y) <= config_.interior_half;
}

int PackingSim::column_height(const PackingState& s, int x, int y) const {
  if (in_interior(x, y)) {
    const BumpConfig& b = config_.bump(s.scenario);
    int h = 0;
    if (in_block(b.bump_pose, x, y) && (b.hard || !s.passed_bump)) h = b.bump_pose.top;
    for (const Block& l : b.ledges)
      if (in_block(l, x, y)) h = std::max(h, l.top);
    return h;
  }
  const int wall = config_.interior_half + 1;
  if (std::abs(x) <= wall && std::abs(y) <= wall) return config_.wall_height;
  return 0;
}

PackingState PackingSim::initial_state(PackingScenario scenario, std::uint64_t seed) const {
  Rng rng(mix_seed(seed, 0x7061636b696e67ULL));
  PackingState s;
  s.scenario = scenario;
  s.cell[0] = rng.uniform_int(config_.start_xy[0], config_.start_xy[1]);
  s.cell[1] = rng.uniform_int(config_.start_xy[0], config_.start_xy[1]);
  s.cell[2] = rng.uniform_int(config_.start_z[0], config_.start_z[1]);
  return s;
}

PackingState PackingSim::transition(const PackingState& s, const std::array<int, 3>& a) const {
  if (s.terminated) throw EpisodeFinishedError("packing episode already finished");
  PackingState n = s;
  ++n.step_count;
  const BumpConfig& bump = config_.bump(s.scenario);
  bool lateral_blocked = false;
  bool blocked_by_wall = false;
  bool pushed = false;

  for (int axis = 0; axis < 2 && !n.terminated; ++axis) {
    if (a[axis] == 0) continue;
    auto c = n.cell;
    c[axis] += a[axis];
    if (std::abs(c[axis]) > config_.workspace_half) {
      n.failure = PackingFailure::kOutOfBounds;
      n.terminated = true;
      break;
    }
    if (column_height(n, c[0], c[1]) > n.cell[2]) {
      lateral_blocked = true;
      blocked_by_wall = !in_interior(c[0], c[1]);
    } else {
      n.cell = c;
    }
  }
  if (!n.terminated && a[2] == 1) {
    if (n.cell[2] + 1 > config_.workspace_top) {
      n.failure = PackingFailure::kOutOfBounds;
      n.terminated = true;
    } else {
      ++n.cell[2];
    }
  } else if (!n.terminated && a[2] == -1) {
    if (n.cell[2] - 1 >= column_height(n, n.cell[0], n.cell[1])) {
      --n.cell[2];
    } else {
      pushed = true;
    }
  }

  const int x = n.cell[0], y = n.cell[1];
  const bool on_main_bump = in_interior(x, y) && in_block(bump.bump_pose, x, y);
  n.push_count = pushed ? (s.cell == n.cell && s.push_count > 0 ? s.push_count + 1 : 1) : 0;
  if (pushed) {
    const bool soft_surface = on_main_bump && !bump.hard && !n.passed_bump &&
                              n.cell[2] == bump.bump_pose.top && column_height(n, x, y) == n.cell[2];
    if (soft_surface) {
      if (n.push_count >= config_.k_soft) {
        n.passed_bump = true;
        --n.cell[2];
        n.push_count = 0;
        pushed = false;
      }
    } else if (n.push_count >= config_.k_hard) {
      n.stuck = true;
      n.failure = PackingFailure::kStuckOnHard;
      n.terminated = true;
    }
  }

  // Contact classification.
  const int z = n.cell[2];
  const int h = column_height(n, x, y);
  n.contact = ContactKind::kNone;
  n.contact_soft = false;
  n.tilt = TiltDirection::kNone;
  n.tilt_magnitude = 0.0;
  if (z == 0) {
    n.contact = ContactKind::kFloor;
  } else if (z == h) {
    n.contact = in_interior(x, y) ? ContactKind::kBump : ContactKind::kWall;
    if (on_main_bump && z == bump.bump_pose.top) {
      n.contact_soft = !bump.hard;
      n.tilt = bump.tilt;
      n.tilt_magnitude = std::min(bump.tilt_magnitude, config_.max_tilt);
    }
  } else if (on_main_bump && n.passed_bump && z < bump.bump_pose.top) {
    n.contact = ContactKind::kBump;
    n.contact_soft = true;
  } else if (lateral_blocked) {
    n.contact = blocked_by_wall ? ContactKind::kWall : ContactKind::kBump;
  }
  n.contact_force = n.contact == ContactKind::kNone ? 0.0 : 1.0 + n.push_count;

  if (!n.terminated && z == 0 && in_interior(x, y)) {
    n.success = true;
    n.terminated = true;
  }
  if (!n.terminated && n.step_count >= config_.max_steps) {
    n.failure = PackingFailure::kTimeout;
    n.terminated = true;
  }
  return n;
}

Image PackingSim::render_visual(const PackingState& s) const {
  Image img(kVisualHeight, kVisualWidth, 3);
  fill(img, kSky);
  fill_rect(img, 0, kFloorRow, img.width, img.height, kTable);
  const int wall = config_.interior_half + 1;
  for (int panel = 0; panel < 2; ++panel) {
    const int left = panel * kPanelWidth;
    const int cx = left + kPanelWidth / 2;
    auto rect = [&](double u0, double z0, double u1, double z1, Rgb color) {
      const int x0 = std::max(left, cx + static_cast<int>(std::lround(u0 * kPxPerUnit)));
      const int x1 = std::min(left + kPanelWidth, cx + static_cast<int>(std::lround(u1 * kPxPerUnit)));
      fill_rect(img, x0, kFloorRow - static_cast<int>(std::lround(z1 * kRowsPerUnit)), x1,
                kFloorRow - static_cast<int>(std::lround(z0 * kRowsPerUnit)), color);
    };
    const double u = s.cell[panel];
    const double z = s.cell[2];
    const double top = z + config_.peg_length;
    rect(u - 0.5, z, u + 0.5, top, kPeg);
    rect(u - 1.5, top - 2, u + 1.5, top + 1, kGripper);
    // The base is opaque and drawn last, hiding whatever is behind it.
    rect(-wall - 0.5, 0, wall + 0.5, config_.wall_height, kWall);
  }
  fill_rect(img, kPanelWidth - 1, 0, kPanelWidth + 1, img.height, kDivider);
  return img;
}

Image PackingSim::render_tactile(const PackingState& s) const {
  Image img(kTactileHeight, kTactileWidth, 3);
  const double cx = (kTactileWidth - 1) / 2.0, cy = (kTactileHeight - 1) / 2.0;
  const double force = std::min(s.contact_force, 6.0);
  const double mag = std::clamp(s.tilt_magnitude, 0.0, config_.max_tilt);
  const double contrast =
      s.tilt == TiltDirection::kNone ? 0.0 : 100.0 * (mag / config_.max_tilt) * force / (1.0 + force);
  const double theta = tilt_angle(s.tilt);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double imprint = 12.0 + 6.0 * force;
  for (int r = 0; r < kTactileHeight; ++r) {
    for (int c = 0; c < kTactileWidth; ++c) {
      double v = 150.0 + ((c * 7 + r * 13) % 5 - 2);
      const double u = (c - cx) / cx, w = -(r - cy) / cy;
      v += contrast * (u * ct + w * st);
      if (std::abs(c - cx) < 40 && std::abs(r - cy) < 40) v -= imprint;
      std::uint8_t* p = img.at(r, c);
      p[0] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      p[1] = static_cast<std::uint8_t>(std::clamp(std::lround(v * 0.9), 0L, 255L));
      p[2] = static_cast<std::uint8_t>(std::clamp(std::lround(v * 0.8 + 30), 0L, 255L));
    }
  }
  return img;
}

AudioChunk PackingSim::synth_audio(const PackingState& s, const PackingState& prev,
                                   std::uint64_t seed) const {
  const int n = static_cast<int>(std::lround(kCaptureAudioRate * kPolicyPeriod));
  const double fs = kCaptureAudioRate;
  Rng rng(noise_seed(seed, s.step_count));
  std::vector<double> x(n);
  for (double& v : x) v = config_.epsilon * rng.normal();

  const bool new_contact = s.contact != ContactKind::kNone &&
                           (prev.contact != s.contact || prev.contact_soft != s.contact_soft);
  if (new_contact) {
    const int onset = n / 4;
    if (s.contact_soft) {
      double lp = 0.0;
      for (int i = onset; i < n; ++i) {
        lp = 0.85 * lp + 0.15 * rng.normal();
        // One-pole smoothing at 0.85 leaves ~0.28 of the white-noise RMS.
        x[i] += config_.A_soft * std::exp(-(i - onset) / (config_.tau_soft * fs)) * lp / 0.28;
      }
    } else {
      for (int i = onset; i < n; ++i)
        x[i] += config_.A_hard * std::exp(-(i - onset) / (config_.tau_hard * fs)) * rng.normal();
    }
  }
  const int lateral = std::abs(s.cell[0] - prev.cell[0]) + std::abs(s.cell[1] - prev.cell[1]);
  if (!new_contact && s.contact != ContactKind::kNone && prev.contact != ContactKind::kNone && lateral > 0) {
    for (double& v : x) v += config_.scrape_gain * lateral * rng.normal();
  }

  AudioChunk chunk;
  chunk.sample_rate = kCaptureAudioRate;
  chunk.start_timestamp = (s.step_count - 1) * kPolicyPeriod;
  chunk.samples.resize(n);
  for (int i = 0; i < n; ++i)
    chunk.samples[i] = static_cast<std::int16_t>(std::lround(std::clamp(x[i], -1.0, 1.0) * 32767.0));
  return chunk;
}

Observation PackingSim::observe(const PackingState& s, const PackingState& prev) const {
  Observation o;
  const double t = s.step_count * kPolicyPeriod;
  o.visual = {render_visual(s), t};
  o.tactile = {render_tactile(s), t};
  o.audio = synth_audio(s, prev, seed_);
  o.aux = {{"x", s.cell[0]},
           {"y", s.cell[1]},
           {"z", s.cell[2]},
           {"contact", static_cast<double>(s.contact)},
           {"contact_soft", s.contact_soft ? 1.0 : 0.0},
           {"contact_force", s.contact_force},
           {"tilt", static_cast<double>(s.tilt)},
           {"success", s.success ? 1.0 : 0.0}};
  return o;
}

Observation PackingSim::reset(const std::string& scenario, std::uint64_t seed) {
  seed_ = seed;
  state_ = initial_state(packing_scenario_from_string(scenario), seed);
  return observe(state_, state_);
}

Observation PackingSim::step(const Action& action) {
  if (action.values.size() != 3) throw InvalidActionError("packing action needs 3 values");
  const Action checked = Action::from_values(action.values, spec_);
  const PackingState prev = state_;
  state_ = transition(prev, {checked.values[0], checked.values[1], checked.values[2]});
  return observe(state_, prev);
}

PackingOutcome PackingSim::packing_outcome() const {
  return {state_.success, state_.step_count, state_.failure};
}

nlohmann::json PackingSim::outcome() const {
  return {{"success", state_.success},
          {"steps_used", state_.step_count},
          {"failure_mode", to_string(state_.failure)},
          {"terminated", state_.terminated}};
}

nlohmann::json PackingSim::initial_condition() const {
  const PackingState s0 = initial_state(state_.scenario, seed_);
  return {{"scenario", to_string(s0.scenario)}, {"start_cell", s0.cell}};
}

nlohmann::json PackingSim::state_json() const {
  const auto p = state_.position(config_.step_size);
  return {{"peg_position", p},
          {"cell", state_.cell},
          {"peg_tilt", {{"direction", to_string(state_.tilt)}, {"magnitude", state_.tilt_magnitude}}},
          {"scenario", to_string(state_.scenario)},
          {"contact", to_string(state_.contact)},
          {"contact_force", state_.contact_force},
          {"step_count", state_.step_count},
          {"stuck", state_.stuck},
          {"success", state_.success}};
}

}  // namespace mulsa::sim
