#include "mulsa/sim/pouring.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mulsa/common/error.hpp"
#include "mulsa/common/rng.hpp"
#include "mulsa/sim/raster.hpp"

namespace mulsa::sim {
namespace {

constexpr Rgb kBackground = {215, 215, 205};
constexpr Rgb kTable = {120, 90, 60};
constexpr Rgb kArm = {70, 70, 80};
constexpr Rgb kHeldCup = {180, 60, 60};
constexpr Rgb kFixedCup = {60, 100, 170};

constexpr int kCenterCol = kVisualWidth / 2;
constexpr int kPxPerStep = 5;
constexpr int kTableRow = 220;
constexpr int kHeldRow = 110;
constexpr double kHeldHalfWidth = 25.0;
constexpr double kHeldHalfHeight = 35.0;

constexpr double kDegToRad = M_PI / 180.0;

}  // namespace

double PouringConfig::phi_crit_deg(int mass_in_hand_mg) const {
  const double frac = static_cast<double>(mass_in_hand_mg) / full_mass_mg;
  return phi_crit_empty_deg - (phi_crit_empty_deg - phi_crit_full_deg) * frac;
}

int PouringConfig::flow_mg(int phi_steps, int mass_in_hand_mg) const {
  const double delta = phi_steps * phi_step_deg - phi_crit_deg(mass_in_hand_mg);
  if (delta <= 0.0 || mass_in_hand_mg <= 0) return 0;
  const auto mg = static_cast<long long>(std::floor(flow_rate * delta * 1000.0));
  return static_cast<int>(std::min<long long>(mg, mass_in_hand_mg));
}

void to_json(nlohmann::json& j, const PouringConfig& c) {
  j = {{"x_step", c.x_step},
       {"phi_step_deg", c.phi_step_deg},
       {"max_steps", c.max_steps},
       {"target_mg", c.target_mg},
       {"full_mass_mg", c.full_mass_mg},
       {"phi_crit_full_deg", c.phi_crit_full_deg},
       {"phi_crit_empty_deg", c.phi_crit_empty_deg},
       {"flow_rate", c.flow_rate},
       {"align_tol", c.align_tol},
       {"retreat_angle_deg", c.retreat_angle_deg},
       {"shift_max", c.shift_max},
       {"fixed_nominal_x", c.fixed_nominal_x},
       {"start_x", c.start_x},
       {"x_half", c.x_half},
       {"phi_max_steps", c.phi_max_steps},
       {"cup_mass_mg", c.cup_mass_mg},
       {"f_base", c.f_base},
       {"k_pitch", c.k_pitch},
       {"grain_amplitude", c.grain_amplitude},
       {"grain_decay", c.grain_decay},
       {"grains_per_gram", c.grains_per_gram},
       {"spill_frequency", c.spill_frequency},
       {"spill_amplitude", c.spill_amplitude},
       {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, PouringConfig& c) {
  c = PouringConfig::defaults();
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("x_step", c.x_step);
  opt("phi_step_deg", c.phi_step_deg);
  opt("max_steps", c.max_steps);
  opt("target_mg", c.target_mg);
  opt("full_mass_mg", c.full_mass_mg);
  opt("phi_crit_full_deg", c.phi_crit_full_deg);
  opt("phi_crit_empty_deg", c.phi_crit_empty_deg);
  opt("flow_rate", c.flow_rate);
  opt("align_tol", c.align_tol);
  opt("retreat_angle_deg", c.retreat_angle_deg);
  opt("shift_max", c.shift_max);
  opt("fixed_nominal_x", c.fixed_nominal_x);
  opt("start_x", c.start_x);
  opt("x_half", c.x_half);
  opt("phi_max_steps", c.phi_max_steps);
  opt("cup_mass_mg", c.cup_mass_mg);
  opt("f_base", c.f_base);
  opt("k_pitch", c.k_pitch);
  opt("grain_amplitude", c.grain_amplitude);
  opt("grain_decay", c.grain_decay);
  opt("grains_per_gram", c.grains_per_gram);
  opt("spill_frequency", c.spill_frequency);
  opt("spill_amplitude", c.spill_amplitude);
  opt("epsilon", c.epsilon);
  if (c.phi_crit_full_deg >= c.phi_crit_empty_deg)
    throw ConfigError("critical angle must grow as the cup empties");
  if (c.flow_rate <= 0.0 || c.max_steps < 1 || c.align_tol < 1)
    throw ConfigError("invalid pouring constants");
}

int pouring_initial_mass_g(const std::string& scenario) {
  if (scenario == "60g" || scenario == "60") return 60;
  if (scenario == "100g" || scenario == "100") return 100;
  throw ConfigError("initial mass must be 60 g or 100 g, got '" + scenario + "'");
}

PouringSim::PouringSim(PouringConfig config)
    : config_(std::move(config)), spec_(ActionSpec::pouring()) {
  spec_.step_sizes = {config_.x_step, config_.phi_step_deg * kDegToRad};
}

PouringState PouringSim::initial_state(int initial_mass_g, std::uint64_t seed) const {
  if (initial_mass_g != 60 && initial_mass_g != 100)
    throw ConfigError("initial mass must be 60 g or 100 g");
  Rng rng(mix_seed(seed, 0x706f7572ULL));
  PouringState s;
  s.initial_mass = initial_mass_g * 1000;
  s.mass_in_hand = s.initial_mass;
  s.cup_x = rng.uniform_int(config_.start_x[0], config_.start_x[1]);
  s.fixed_cup_x = config_.fixed_nominal_x + rng.uniform_int(-config_.shift_max, config_.shift_max);
  return s;
}

PouringState PouringSim::transition(const PouringState& s, const std::array<int, 2>& a) const {
  if (s.terminated) throw EpisodeFinishedError("pouring episode already finished");
  PouringState n = s;
  ++n.step_count;
  n.cup_x = std::clamp(n.cup_x + a[0], -config_.x_half, config_.x_half);
  n.phi = std::clamp(n.phi + a[1], 0, config_.phi_max_steps);
  const int flow = config_.flow_mg(n.phi, n.mass_in_hand);
  if (flow > 0) {
    n.poured = true;
    n.mass_in_hand -= flow;
    if (std::abs(n.cup_x - n.fixed_cup_x) < config_.align_tol) {
      n.mass_in_fixed += flow;
    } else {
      n.mass_spilled += flow;
    }
  }
  if (n.poured && n.phi * config_.phi_step_deg <= config_.retreat_angle_deg) n.terminated = true;
  if (n.step_count >= config_.max_steps) n.terminated = true;
  return n;
}

double PouringSim::grasp_torque(const PouringState& s) const {
  const double phi = s.phi * config_.phi_step_deg * kDegToRad;
  const double grams = (config_.cup_mass_mg + s.mass_in_hand) / 1000.0;
  return grams * (std::cos(phi) + 0.6 * std::sin(phi));
}

double PouringSim::pitch_hz(int mass_in_fixed_mg) const {
  return config_.f_base + config_.k_pitch * mass_in_fixed_mg / 1000.0;
}

Image PouringSim::render_visual(const PouringState& s) const {
  Image img(kVisualHeight, kVisualWidth, 3);
  fill(img, kBackground);
  fill_rect(img, 0, kTableRow, img.width, img.height, kTable);
  const int fx = kCenterCol + kPxPerStep * s.fixed_cup_x;
  fill_rect(img, fx - 20, kTableRow - 50, fx + 20, kTableRow, kFixedCup);
  const int hx = kCenterCol + kPxPerStep * s.cup_x;
  fill_rect(img, hx - 5, 0, hx + 5, kHeldRow - 30, kArm);
  const double phi = s.phi * config_.phi_step_deg * kDegToRad;
  const double c = std::cos(phi), sn = std::sin(phi);
  const double corners[4][2] = {{-kHeldHalfWidth, -kHeldHalfHeight},
                                {kHeldHalfWidth, -kHeldHalfHeight},
                                {kHeldHalfWidth, kHeldHalfHeight},
                                {-kHeldHalfWidth, kHeldHalfHeight}};
  std::array<Point, 4> poly;
  for (int i = 0; i < 4; ++i) {
    const double u = corners[i][0], v = corners[i][1];
    poly[i] = {hx + u * c - v * sn, kHeldRow + u * sn + v * c};
  }
  fill_convex(img, poly, kHeldCup);
  return img;
}

Image PouringSim::render_tactile(const PouringState& s) const {
  Image img(kTactileHeight, kTactileWidth, 3);
  const double cx = (kTactileWidth - 1) / 2.0, cy = (kTactileHeight - 1) / 2.0;
  const double max_torque = (config_.cup_mass_mg + config_.full_mass_mg) / 1000.0 * 1.17;
  const double contrast = 100.0 * std::max(0.0, grasp_torque(s)) / max_torque;
  const double theta = s.phi * config_.phi_step_deg * kDegToRad;
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int r = 0; r < kTactileHeight; ++r) {
    for (int col = 0; col < kTactileWidth; ++col) {
      double v = 150.0 + ((col * 7 + r * 13) % 5 - 2);
      const double u = (col - cx) / cx, w = -(r - cy) / cy;
      v += contrast * (u * ct + w * st);
      if (std::abs(col - cx) < 30 && std::abs(r - cy) < 100) v -= 20.0;
      std::uint8_t* p = img.at(r, col);
      p[0] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      p[1] = static_cast<std::uint8_t>(std::clamp(std::lround(v * 0.9), 0L, 255L));
      p[2] = static_cast<std::uint8_t>(std::clamp(std::lround(v * 0.8 + 30), 0L, 255L));
    }
  }
  return img;
}

AudioChunk PouringSim::synth_audio(const PouringState& s, const PouringState& prev,
                                   std::uint64_t seed) const {
  const int n = static_cast<int>(std::lround(kCaptureAudioRate * kPolicyPeriod));
  const double fs = kCaptureAudioRate;
  Rng rng(noise_seed(seed, s.step_count));
  std::vector<double> x(n);
  for (double& v : x) v = config_.epsilon * rng.normal();

  auto add_grains = [&](int count, double freq, double amp, double decay) {
    for (int g = 0; g < count; ++g) {
      const int onset = rng.uniform_int(0, n - 1);
      const double gain = amp * rng.uniform(0.7, 1.0);
      for (int i = onset; i < n; ++i) {
        const double t = (i - onset) / fs;
        if (t > 8 * decay) break;
        x[i] += gain * std::exp(-t / decay) * std::sin(2.0 * M_PI * freq * t);
      }
    }
  };
  const int into_fixed = s.mass_in_fixed - prev.mass_in_fixed;
  if (into_fixed > 0) {
    const int grains = std::max(1, static_cast<int>(std::lround(into_fixed / 1000.0 * config_.grains_per_gram)));
    add_grains(grains, pitch_hz(s.mass_in_fixed), config_.grain_amplitude, config_.grain_decay);
  }
  const int spilled = s.mass_spilled - prev.mass_spilled;
  if (spilled > 0) {
    const int taps = std::max(1, static_cast<int>(std::lround(spilled / 1000.0 * 4.0)));
    add_grains(taps, config_.spill_frequency, config_.spill_amplitude, 0.02);
  }

  AudioChunk chunk;
  chunk.sample_rate = kCaptureAudioRate;
  chunk.start_timestamp = (s.step_count - 1) * kPolicyPeriod;
  chunk.samples.resize(n);
  for (int i = 0; i < n; ++i)
    chunk.samples[i] = static_cast<std::int16_t>(std::lround(std::clamp(x[i], -1.0, 1.0) * 32767.0));
  return chunk;
}

Observation PouringSim::observe(const PouringState& s, const PouringState& prev) const {
  Observation o;
  const double t = s.step_count * kPolicyPeriod;
  o.visual = {render_visual(s), t};
  o.tactile = {render_tactile(s), t};
  o.audio = synth_audio(s, prev, seed_);
  o.aux = {{"cup_x", s.cup_x},
           {"phi_deg", s.phi * config_.phi_step_deg},
           {"mass_in_hand_g", s.mass_in_hand / 1000.0},
           {"mass_in_fixed_g", s.mass_in_fixed / 1000.0},
           {"mass_spilled_g", s.mass_spilled / 1000.0},
           {"fixed_cup_x", s.fixed_cup_x}};
  return o;
}

Observation PouringSim::reset(const std::string& scenario, std::uint64_t seed) {
  seed_ = seed;
  state_ = initial_state(pouring_initial_mass_g(scenario), seed);
  return observe(state_, state_);
}

Observation PouringSim::step(const Action& action) {
  if (action.values.size() != 2) throw InvalidActionError("pouring action needs 2 values");
  const Action checked = Action::from_values(action.values, spec_);
  const PouringState prev = state_;
  state_ = transition(prev, {checked.values[0], checked.values[1]});
  return observe(state_, prev);
}

PouringOutcome PouringSim::pouring_outcome() const {
  return {std::abs(state_.mass_in_fixed - config_.target_mg) / 1000.0, state_.step_count};
}

nlohmann::json PouringSim::outcome() const {
  const auto o = pouring_outcome();
  return {{"weight_error", o.weight_error},
          {"steps_used", o.steps_used},
          {"mass_in_fixed_g", state_.mass_in_fixed / 1000.0},
          {"mass_spilled_g", state_.mass_spilled / 1000.0},
          {"terminated", state_.terminated}};
}

nlohmann::json PouringSim::initial_condition() const {
  const PouringState s0 = initial_state(state_.initial_mass / 1000, seed_);
  return {{"initial_mass_g", s0.initial_mass / 1000}, {"cup_x", s0.cup_x}, {"fixed_cup_x", s0.fixed_cup_x}};
}

nlohmann::json PouringSim::state_json() const {
  const auto& s = state_;
  return {{"cup_x", s.cup_x * config_.x_step},
          {"cup_angle", s.phi * config_.phi_step_deg * kDegToRad},
          {"mass_in_hand", s.mass_in_hand / 1000.0},
          {"mass_in_fixed", s.mass_in_fixed / 1000.0},
          {"mass_spilled", s.mass_spilled / 1000.0},
          {"initial_mass", s.initial_mass / 1000.0},
          {"target", config_.target_mg / 1000.0},
          {"fixed_cup_x", s.fixed_cup_x * config_.x_step},
          {"scale_reading", s.scale_reading_g()},
          {"step_count", s.step_count}};
}

}  // namespace mulsa::sim
