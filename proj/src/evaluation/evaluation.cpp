#include "mulsa/evaluation/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mulsa/common/error.hpp"
#include "mulsa/model/heuristic.hpp"
#include "mulsa/model/preprocess.hpp"
#include "mulsa/sim/packing.hpp"
#include "mulsa/sim/pouring.hpp"

namespace mulsa::evaluation {

using model::Modality;

CheckpointController::CheckpointController(const training::Checkpoint& checkpoint, double handover_tolerance)
    : config_(checkpoint.policy),
      stats_(checkpoint.stats),
      preprocess_(checkpoint.preprocess),
      policy_(checkpoint.make_policy()),
      heuristic_(config_.task == Task::kPacking && !config_.fusion.has(Modality::kVisual)),
      tolerance_(handover_tolerance) {}

std::string CheckpointController::name() const {
  return model::to_string(config_.fusion.variant) + ":" + model::modalities_to_string(config_.fusion.modalities);
}

Decision CheckpointController::decide(const StreamSnapshot& streams, const Observation& current,
                                      const sim::Environment& env) {
  if (heuristic_ && !handed_over_) {
    const auto* packing = dynamic_cast<const sim::PackingSim*>(&env);
    if (!packing) throw ConfigError("the scripted visual approach needs the packing simulator");
    const auto& p = packing->config().pre_insertion;
    const std::array<double, 3> pos{current.aux.at("x"), current.aux.at("y"), current.aux.at("z")};
    const auto h = model::heuristic_visual_policy(pos, {double(p[0]), double(p[1]), double(p[2])}, tolerance_,
                                                  env.action_spec());
    if (!h.handover) return {h.action, std::nullopt};
    handed_over_ = true;
  }
  const ObservationWindow raw = assemble_window(streams, current.timestamp(), config_.fusion.slots);
  const ObservationWindow window = model::augment(raw, model::AugmentMode::kEval, nullptr, preprocess_);
  const model::PolicyInput input = model::make_input({&window}, config_, stats_, preprocess_);
  const bool trace = config_.fusion.variant == model::FusionVariant::kMulsa;
  const auto out = policy_->forward(input, nullptr, trace);
  Decision d;
  d.action = Action::from_index(out.actions[0], env.action_spec());
  if (trace) d.attention = model::aggregate_modality_attention(out.traces[0]);
  return d;
}

Decision ExpertController::decide(const StreamSnapshot&, const Observation&, const sim::Environment& env) {
  if (const auto* p = dynamic_cast<const sim::PackingSim*>(&env)) {
    return {demos::packing_expert(*p, p->state()), std::nullopt};
  }
  if (const auto* p = dynamic_cast<const sim::PouringSim*>(&env)) {
    return {demos::pouring_expert(*p, p->state(), phase_), std::nullopt};
  }
  throw ConfigError("no scripted expert for this environment");
}

RolloutResult rollout(Controller& controller, sim::Environment& env, const std::string& scenario,
                      std::uint64_t seed, const RolloutOptions& options) {
  if (controller.task() != env.task()) {
    throw ConfigError("controller task " + to_string(controller.task()) + " differs from environment task " +
                      to_string(env.task()));
  }
  RolloutResult result;
  TrialResult& trial = result.trial;
  trial.scenario = scenario;
  trial.seed = seed;
  if (options.record_episode) {
    result.episode.emplace();
    result.episode->metadata = {env.task(), scenario, seed, EpisodeSource::kRollout, {}};
    result.episode->action_spec = env.action_spec();
  }

  SensorStreams streams;
  controller.reset();
  Observation obs = env.reset(scenario, seed);
  if (result.episode) result.episode->metadata.initial_condition = env.initial_condition();
  while (!env.terminated() && (options.max_steps <= 0 || env.step_count() < options.max_steps)) {
    streams.push(obs);
    const Decision d = controller.decide(streams.snapshot(), obs, env);
    trial.actions.push_back(d.action.class_index);
    if (d.attention) trial.attention.push_back(*d.attention);
    if (env.task() == Task::kPacking) {
      trial.contact.push_back(obs.aux.count("contact") &&
                              static_cast<int>(obs.aux.at("contact")) == static_cast<int>(sim::ContactKind::kBump));
    }
    if (result.episode) result.episode->steps.push_back({obs, d.action, obs.timestamp()});
    obs = env.step(d.action);
  }
  // Attention rows are only meaningful if every tick produced one.
  if (trial.attention.size() != trial.actions.size()) trial.attention.clear();

  trial.outcome = env.outcome();
  trial.steps = env.step_count();
  if (env.task() == Task::kPacking) {
    trial.success = trial.outcome.at("success").get<bool>();
  } else {
    trial.weight_error = trial.outcome.at("weight_error").get<double>();
    trial.success = trial.weight_error <= 5.0;
  }
  if (result.episode) result.episode->outcome = trial.outcome;
  return result;
}

RolloutResult rollout(const training::Checkpoint& checkpoint, sim::Environment& env, const std::string& scenario,
                      std::uint64_t seed, const RolloutOptions& options) {
  if (checkpoint.policy.task != env.task()) {
    throw ConfigError("checkpoint task " + to_string(checkpoint.policy.task) + " differs from environment task " +
                      to_string(env.task()));
  }
  CheckpointController controller(checkpoint);
  return rollout(controller, env, scenario, seed, options);
}

std::uint64_t trial_seed(std::uint64_t protocol_seed, int scenario_index, int trial) {
  return mix_seed(mix_seed(mix_seed(protocol_seed, 0x6576616c), static_cast<std::uint64_t>(scenario_index)),
                  static_cast<std::uint64_t>(trial));
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / values.size();
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / (values.size() - 1));
  return r;
}

void summarize(EvalReport& report) {
  std::vector<std::string> order;
  for (const auto& t : report.trials) {
    if (std::find(order.begin(), order.end(), t.scenario) == order.end()) order.push_back(t.scenario);
  }
  report.scenarios.clear();
  double success_sum = 0.0, error_sum = 0.0;
  for (const auto& name : order) {
    ScenarioSummary s;
    s.scenario = name;
    int ok = 0;
    std::vector<double> errors;
    for (const auto& t : report.trials) {
      if (t.scenario != name) continue;
      ++s.trials;
      ok += t.success;
      errors.push_back(t.weight_error);
    }
    s.success_rate = s.trials ? static_cast<double>(ok) / s.trials : 0.0;
    s.weight_error = mean_std(errors);
    success_sum += s.success_rate;
    error_sum += s.weight_error.mean;
    report.scenarios.push_back(s);
  }
  const double n = static_cast<double>(report.scenarios.size());
  report.average_success = n > 0 ? success_sum / n : 0.0;
  report.average_weight_error = n > 0 ? error_sum / n : 0.0;
}

EvalReport evaluate(Controller& controller, sim::Environment& env, const Protocol& protocol,
                    const std::function<void(const TrialResult&)>& on_trial) {
  if (protocol.trials <= 0) throw ConfigError("protocol needs at least one trial per scenario");
  EvalReport report;
  report.task = env.task();
  report.variant = controller.name();
  if (const auto* c = dynamic_cast<const CheckpointController*>(&controller)) {
    report.variant = model::to_string(c->policy().config().fusion.variant);
    report.modalities = model::modalities_to_string(c->policy().config().fusion.modalities);
  }
  const auto all = env.scenarios();
  const auto scenarios = protocol.scenarios.empty() ? all : protocol.scenarios;
  for (const auto& name : scenarios) {
    const auto it = std::find(all.begin(), all.end(), name);
    if (it == all.end()) throw ConfigError("unknown scenario '" + name + "'");
    const int index = static_cast<int>(it - all.begin());
    for (int k = 0; k < protocol.trials; ++k) {
      RolloutOptions opts;
      opts.max_steps = protocol.max_steps;
      TrialResult t = rollout(controller, env, name, trial_seed(protocol.seed, index, k), opts).trial;
      t.trial = k;
      if (on_trial) on_trial(t);
      report.trials.push_back(std::move(t));
    }
  }
  summarize(report);
  return report;
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j;
  j["task"] = to_string(report.task);
  j["variant"] = report.variant;
  j["modalities"] = report.modalities;
  nlohmann::json scen = nlohmann::json::array();
  for (const auto& s : report.scenarios) {
    nlohmann::json e = {{"scenario", s.scenario}, {"trials", s.trials}};
    if (report.task == Task::kPacking) {
      e["success_rate"] = s.success_rate;
    } else {
      e["weight_error_mean"] = s.weight_error.mean;
      e["weight_error_std"] = s.weight_error.std;
    }
    scen.push_back(e);
  }
  j["scenarios"] = scen;
  if (report.task == Task::kPacking) {
    j["average_success"] = report.average_success;
  } else {
    j["average_weight_error"] = report.average_weight_error;
  }
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : report.trials) {
    nlohmann::json att = nlohmann::json::array();
    for (const auto& a : t.attention) att.push_back(a);
    trials.push_back({{"scenario", t.scenario},
                      {"trial", t.trial},
                      {"seed", t.seed},
                      {"success", t.success},
                      {"weight_error", t.weight_error},
                      {"steps", t.steps},
                      {"outcome", t.outcome},
                      {"actions", t.actions},
                      {"contact", t.contact},
                      {"attention", att}});
  }
  j["trials"] = trials;
  return j;
}

std::string format_table(const EvalReport& report) {
  std::ostringstream os;
  char buf[128];
  os << to_string(report.task) << " | " << report.variant;
  if (!report.modalities.empty()) os << " " << report.modalities;
  os << "\n";
  for (const auto& s : report.scenarios) {
    if (report.task == Task::kPacking) {
      std::snprintf(buf, sizeof(buf), "%-14s %5.2f  (%d trials)\n", s.scenario.c_str(), s.success_rate, s.trials);
    } else {
      std::snprintf(buf, sizeof(buf), "%-14s %6.2f +- %.2f g  (%d trials)\n", s.scenario.c_str(),
                    s.weight_error.mean, s.weight_error.std, s.trials);
    }
    os << buf;
  }
  if (report.task == Task::kPacking) {
    std::snprintf(buf, sizeof(buf), "%-14s %5.2f\n", "average", report.average_success);
  } else {
    std::snprintf(buf, sizeof(buf), "%-14s %6.2f g\n", "average", report.average_weight_error);
  }
  os << buf;
  return os.str();
}

std::string timeline_csv(const TrialResult& trial) {
  if (trial.attention.empty()) {
    throw NotAvailableError("trial " + std::to_string(trial.trial) + " has no attention timeline");
  }
  std::ostringstream os;
  os << "step,score_V,score_A,score_T\n";
  char buf[96];
  for (std::size_t k = 0; k < trial.attention.size(); ++k) {
    const auto& a = trial.attention[k];
    std::snprintf(buf, sizeof(buf), "%zu,%.8f,%.8f,%.8f\n", k, a[0], a[1], a[2]);
    os << buf;
  }
  return os.str();
}

void export_timeline(const TrialResult& trial, const std::filesystem::path& path) {
  const std::string text = timeline_csv(trial);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string timeline_svg(const TrialResult& trial) {
  if (trial.attention.empty()) {
    throw NotAvailableError("trial " + std::to_string(trial.trial) + " has no attention timeline");
  }
  const double w = 640, h = 240, pad = 30;
  const double n = std::max<double>(1.0, static_cast<double>(trial.attention.size()) - 1.0);
  const char* colors[3] = {"#1f77b4", "#d62728", "#2ca02c"};
  const char* labels[3] = {"V", "A", "T"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  for (int m = 0; m < 3; ++m) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[m] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < trial.attention.size(); ++k) {
      const double x = pad + (w - 2 * pad) * k / n;
      const double y = h - pad - (h - 2 * pad) * trial.attention[k][m];
      os << x << "," << y << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << w - pad + 4 << "\" y=\"" << pad + 14 * m << "\" fill=\"" << colors[m]
       << "\" font-size=\"12\">" << labels[m] << "</text>\n";
  }
  for (std::size_t k = 0; k < trial.contact.size() && k < trial.attention.size(); ++k) {
    if (!trial.contact[k]) continue;
    const double x = pad + (w - 2 * pad) * k / n;
    os << "<line x1=\"" << x << "\" y1=\"" << h - pad << "\" x2=\"" << x << "\" y2=\"" << h - pad + 6
       << "\" stroke=\"gray\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mulsa::evaluation
