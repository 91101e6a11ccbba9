#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/demos/experts.hpp"
#include "mulsa/model/policy.hpp"
#include "mulsa/sensordata/episode.hpp"
#include "mulsa/sim/environment.hpp"
#include "mulsa/training/checkpoint.hpp"

namespace mulsa::evaluation {

using AttentionScores = std::array<double, model::kModalityCount>;

struct Decision {
  Action action;
  std::optional<AttentionScores> attention;
};

// Anything that maps the sensor history to an action at each tick.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual Task task() const = 0;
  virtual std::string name() const = 0;
  virtual void reset() {}
  virtual Decision decide(const StreamSnapshot& streams, const Observation& current,
                          const sim::Environment& env) = 0;
};

// Runs a trained checkpoint: window assembly, center crop, frozen statistics,
// argmax decoding. Packing models without vision are preceded by the scripted
// visual approach until it hands control over.
class CheckpointController final : public Controller {
 public:
  explicit CheckpointController(const training::Checkpoint& checkpoint, double handover_tolerance = 0.5);

  Task task() const override { return config_.task; }
  std::string name() const override;
  void reset() override { handed_over_ = false; }
  Decision decide(const StreamSnapshot& streams, const Observation& current,
                  const sim::Environment& env) override;

  const model::Policy& policy() const { return *policy_; }
  bool uses_heuristic() const { return heuristic_; }

 private:
  model::PolicyConfig config_;
  model::NormalizationStats stats_;
  model::PreprocessConfig preprocess_;
  std::unique_ptr<model::Policy> policy_;
  bool heuristic_ = false;
  double tolerance_;
  bool handed_over_ = false;
};

// The scripted expert (without noise) as a policy, for harness checks.
class ExpertController final : public Controller {
 public:
  explicit ExpertController(Task task) : task_(task) {}
  Task task() const override { return task_; }
  std::string name() const override { return "expert"; }
  void reset() override { phase_ = {}; }
  Decision decide(const StreamSnapshot& streams, const Observation& current,
                  const sim::Environment& env) override;

 private:
  Task task_;
  demos::PouringPhase phase_;
};

struct TrialResult {
  std::string scenario;
  int trial = 0;
  std::uint64_t seed = 0;
  bool success = false;
  double weight_error = 0.0;  // pouring, grams
  int steps = 0;
  nlohmann::json outcome = nlohmann::json::object();
  std::vector<int> actions;
  std::vector<AttentionScores> attention;  // one row per tick when available
  std::vector<bool> contact;               // packing: bump contact per tick
};

struct RolloutOptions {
  int max_steps = 0;           // 0 uses the environment's own limit
  bool record_episode = false;
};

struct RolloutResult {
  TrialResult trial;
  std::optional<Episode> episode;
};

RolloutResult rollout(Controller& controller, sim::Environment& env, const std::string& scenario,
                      std::uint64_t seed, const RolloutOptions& options = {});

// Checkpoint convenience; raises ConfigError when the tasks differ.
RolloutResult rollout(const training::Checkpoint& checkpoint, sim::Environment& env,
                      const std::string& scenario, std::uint64_t seed, const RolloutOptions& options = {});

struct Protocol {
  std::vector<std::string> scenarios;  // empty means all of the environment's scenarios
  int trials = 10;
  std::uint64_t seed = 0;
  int max_steps = 0;
};

std::uint64_t trial_seed(std::uint64_t protocol_seed, int scenario_index, int trial);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // (n - 1) denominator; 0 for a single value
};
MeanStd mean_std(const std::vector<double>& values);

struct ScenarioSummary {
  std::string scenario;
  int trials = 0;
  double success_rate = 0.0;
  MeanStd weight_error;
};

struct EvalReport {
  Task task = Task::kPacking;
  std::string variant;
  std::string modalities;
  std::vector<ScenarioSummary> scenarios;
  double average_success = 0.0;
  double average_weight_error = 0.0;
  std::vector<TrialResult> trials;
};

// Recomputes all aggregates from the trial list.
void summarize(EvalReport& report);

EvalReport evaluate(Controller& controller, sim::Environment& env, const Protocol& protocol,
                    const std::function<void(const TrialResult&)>& on_trial = {});

nlohmann::json report_json(const EvalReport& report);
// Table-style text: one row per scenario plus the average.
std::string format_table(const EvalReport& report);

// step,score_V,score_A,score_T rows.
std::string timeline_csv(const TrialResult& trial);
void export_timeline(const TrialResult& trial, const std::filesystem::path& path);
// Stacked line plot of the three scores over ticks.
std::string timeline_svg(const TrialResult& trial);

}  // namespace mulsa::evaluation
