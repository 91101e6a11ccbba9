#include "mulsa/demos/experts.hpp"

#include <algorithm>
#include <cmath>

#include "mulsa/common/error.hpp"

namespace mulsa::demos {
namespace {

int sign(int v) { return (v > 0) - (v < 0); }

}  // namespace

void ExpertConfig::validate() const {
  if (!(noise_rate >= 0.0 && noise_rate <= 0.2)) throw ConfigError("noise_rate must lie in [0, 0.2]");
}

Action packing_expert(const sim::PackingSim& sim, const sim::PackingState& s) {
  using sim::ContactKind;
  using sim::TiltDirection;
  const auto& cfg = sim.config();
  const ActionSpec& spec = sim.action_spec();
  const auto& p = cfg.pre_insertion;
  const int x = s.cell[0], y = s.cell[1], z = s.cell[2];

  if (s.contact == ContactKind::kBump && !s.contact_soft && s.tilt != TiltDirection::kNone) {
    // Sidestep away from the slope or the bump side.
    switch (s.tilt) {
      case TiltDirection::kRight: return Action::from_values({1, 0, 0}, spec);
      case TiltDirection::kLeft: return Action::from_values({-1, 0, 0}, spec);
      case TiltDirection::kBack: return Action::from_values({0, 1, 0}, spec);
      case TiltDirection::kFront: return Action::from_values({0, -1, 0}, spec);
      case TiltDirection::kNone: break;
    }
  }
  if (z >= cfg.wall_height) {
    if (x != p[0] || y != p[1]) return Action::from_values({sign(p[0] - x), sign(p[1] - y), sign(p[2] - z)}, spec);
    return Action::from_values({0, 0, -1}, spec);
  }
  if (!sim.in_interior(x, y)) return Action::from_values({0, 0, 1}, spec);
  const bool rigid_contact = s.contact != ContactKind::kNone && s.contact != ContactKind::kFloor && !s.contact_soft;
  if (rigid_contact) {
    const int dx = sign(p[0] - x), dy = sign(p[1] - y);
    if (dx == 0 && dy == 0) return Action::from_values({0, 0, 1}, spec);
    return Action::from_values({dx, dy, 0}, spec);
  }
  return Action::from_values({0, 0, -1}, spec);
}

int pouring_mass_after_retreat(const sim::PouringConfig& cfg, sim::PouringState s) {
  for (;;) {
    s.phi = std::max(s.phi - 1, 0);
    const int f = cfg.flow_mg(s.phi, s.mass_in_hand);
    if (f == 0) return s.mass_in_fixed;
    s.mass_in_hand -= f;
    s.mass_in_fixed += f;
  }
}

Action pouring_expert(const sim::PouringSim& sim, const sim::PouringState& s, PouringPhase& phase) {
  const auto& cfg = sim.config();
  const ActionSpec& spec = sim.action_spec();
  if (s.step_count == 0) phase = {};
  const int dx = sign(s.fixed_cup_x - s.cup_x);
  if (phase.retreating) return Action::from_values({dx, -1}, spec);
  if (dx != 0 && !s.poured) return Action::from_values({dx, 0}, spec);

  auto final_after_tilt = [&] {
    sim::PouringState n = s;
    n.phi = std::min(n.phi + 1, cfg.phi_max_steps);
    const int f = cfg.flow_mg(n.phi, n.mass_in_hand);
    n.mass_in_hand -= f;
    n.mass_in_fixed += f;
    return pouring_mass_after_retreat(cfg, n);
  };
  if (dx != 0) return Action::from_values({dx, 0}, spec);
  // Tilt every tick; retreat on the tick whose residual flow lands closest to the target.
  const int tilt = final_after_tilt();
  const int now = pouring_mass_after_retreat(cfg, s);
  if (tilt < cfg.target_mg || std::abs(now - cfg.target_mg) > std::abs(tilt - cfg.target_mg)) {
    return Action::from_values({0, 1}, spec);
  }
  phase.retreating = true;
  return Action::from_values({0, -1}, spec);
}

Expert::Expert(ExpertConfig config) : config_(config), rng_(mix_seed(config.seed, 0x657870ULL)) {
  config_.validate();
}

Action Expert::act(const sim::Environment& env) {
  const ActionSpec& spec = env.action_spec();
  // Draw both numbers every tick so the stream does not depend on branches.
  const double u = rng_.uniform();
  const int random_class = rng_.uniform_int(0, spec.class_count() - 1);
  last_noise_ = u < config_.noise_rate;
  if (last_noise_) return Action::from_index(random_class, spec);
  if (const auto* p = dynamic_cast<const sim::PackingSim*>(&env)) return packing_expert(*p, p->state());
  if (const auto* p = dynamic_cast<const sim::PouringSim*>(&env)) return pouring_expert(*p, p->state(), pouring_phase_);
  throw ConfigError("no scripted expert for this environment");
}

}  // namespace mulsa::demos
