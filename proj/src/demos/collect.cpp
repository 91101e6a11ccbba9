#include "mulsa/demos/collect.hpp"

#include <cstdio>

#include "mulsa/common/error.hpp"

namespace mulsa::demos {

std::uint64_t episode_seed(std::uint64_t collection_seed, int scenario_index, int episode_index) {
  return mix_seed(mix_seed(collection_seed, static_cast<std::uint64_t>(scenario_index)),
                  static_cast<std::uint64_t>(episode_index));
}

Episode run_expert_episode(sim::Environment& env, const std::string& scenario, std::uint64_t seed,
                           double noise_rate) {
  Expert expert({env.task(), noise_rate, seed});
  Episode ep;
  ep.metadata.task = env.task();
  ep.metadata.scenario = scenario;
  ep.metadata.seed = seed;
  ep.metadata.source = EpisodeSource::kScripted;
  ep.action_spec = env.action_spec();
  Observation obs = env.reset(scenario, seed);
  ep.metadata.initial_condition = env.initial_condition();
  while (!env.terminated()) {
    const Action a = expert.act(env);
    ep.steps.push_back({obs, a, obs.timestamp()});
    obs = env.step(a);
  }
  ep.outcome = env.outcome();
  ep.outcome["noise_rate"] = noise_rate;
  return ep;
}

CollectResult collect(const CollectOptions& options, const std::filesystem::path& out,
                      const std::function<void(const std::string&)>& log) {
  auto env = sim::make_environment(options.task, options.scenario_file);
  std::vector<std::string> scenarios = options.scenarios.empty() ? env->scenarios() : options.scenarios;
  const auto known = env->scenarios();
  if (options.episodes_per_scenario < 0) throw ConfigError("episodes_per_scenario must be >= 0");
  CollectResult result;
  std::filesystem::create_directories(out);
  for (const std::string& scenario : scenarios) {
    const auto it = std::find(known.begin(), known.end(), scenario);
    if (it == known.end()) throw ConfigError("unknown scenario '" + scenario + "' for " + to_string(options.task));
    const int si = static_cast<int>(it - known.begin());
    for (int i = 0; i < options.episodes_per_scenario; ++i) {
      const std::uint64_t seed = episode_seed(options.seed, si, i);
      Episode ep;
      try {
        ep = run_expert_episode(*env, scenario, seed, options.noise_rate);
      } catch (const Error& e) {
        ep = Episode{};
        ep.metadata = {options.task, scenario, seed, EpisodeSource::kScripted};
        ep.action_spec = env->action_spec();
        ep.outcome = {{"failed", true}, {"error", e.what()}};
        ++result.failed;
      }
      char name[32];
      std::snprintf(name, sizeof name, "ep_%04d", i);
      const auto rel = std::filesystem::path(scenario) / name;
      save_episode(ep, out / rel);
      result.episodes.push_back(rel);
      if (log) log(rel.string() + " steps=" + std::to_string(ep.steps.size()) + " outcome=" + ep.outcome.dump());
    }
  }
  result.manifest = out / "dataset.json";
  save_dataset_manifest(result.manifest, result.episodes,
                        {{"task", to_string(options.task)},
                         {"seed", options.seed},
                         {"noise_rate", options.noise_rate},
                         {"episodes_per_scenario", options.episodes_per_scenario}});
  return result;
}

}  // namespace mulsa::demos
