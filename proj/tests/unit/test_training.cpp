#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <filesystem>
#include <fstream>

#include "mulsa/common/bytes.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/demos/collect.hpp"
#include "mulsa/evaluation/evaluation.hpp"
#include "mulsa/model/heuristic.hpp"
#include "mulsa/sim/packing.hpp"
#include "mulsa/training/trainer.hpp"

using namespace mulsa;
namespace fs = std::filesystem;

namespace {

Episode expert_episode(Task task, const std::string& scenario, std::uint64_t seed, double noise = 0.05) {
  auto env = sim::make_environment(task);
  return demos::run_expert_episode(*env, scenario, seed, noise);
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mulsa_training_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

training::TrainConfig tiny_config(Task task, int epochs = 2) {
  training::TrainConfig c;
  c.policy = model::PolicyConfig::make(task);
  c.epochs = epochs;
  c.batch_size = 8;
  c.optimizer.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

const training::WindowDataset& small_packing_dataset() {
  static const training::WindowDataset ds = [] {
    training::WindowDataset d{training::DatasetOptions{}};
    d.add_episode(expert_episode(Task::kPacking, "hard_slanted", 1));
    d.add_episode(expert_episode(Task::kPacking, "soft_slanted", 2));
    return d;
  }();
  return ds;
}

}  // namespace

TEST(DatasetTest, SamplesMatchStreamedWindows) {
  const Episode ep = expert_episode(Task::kPacking, "soft_slanted", 11);
  training::WindowDataset ds{training::DatasetOptions{}};
  ds.add_episode(ep);
  ASSERT_EQ(ds.size(), ep.steps.size());
  const auto cfg = model::PolicyConfig::make(Task::kPacking);
  const model::NormalizationStats stats{-5.0, 3.0};
  const model::PreprocessConfig pre;

  // Replay the episode through live stream buffers, as a rollout would.
  SensorStreams streams;
  for (std::size_t k = 0; k < ep.steps.size(); ++k) {
    const Observation& obs = ep.steps[k].observation;
    streams.push(obs);
    const ObservationWindow live =
        model::augment(assemble_window(streams.snapshot(), obs.timestamp()), model::AugmentMode::kEval, nullptr);
    const auto expected = model::make_input({&live}, cfg, stats, pre);
    auto got = model::allocate_input(cfg, 1);
    ds.fill(k, got, 0, model::center_crop_offset(pre), stats);
    for (int m = 0; m < model::kModalityCount; ++m) {
      ASSERT_TRUE(got.maps[m].data == expected.maps[m].data) << "step " << k << " modality " << m;
    }
    EXPECT_EQ(ds.label(k), ep.steps[k].action.class_index);
  }
}

TEST(DatasetTest, FirstStepIsPadded) {
  const auto& ds = small_packing_dataset();
  const auto w = ds.window(0);
  ASSERT_EQ(w.slots(), kWindowSlots);
  for (int n = 1; n < w.slots(); ++n) {
    EXPECT_EQ(w.visual[n], w.visual[0]);
    EXPECT_EQ(w.tactile[n], w.tactile[0]);
  }
  // All slots before the first capture are silence.
  for (int n = 0; n + 1 < w.slots(); ++n) EXPECT_EQ(w.audio[n], w.audio[0]);
  EXPECT_DOUBLE_EQ(w.slot_end_times.back(), 0.0);
}

TEST(DatasetTest, LabelHistogramSumsToSampleCount) {
  const auto& ds = small_packing_dataset();
  const auto hist = ds.label_histogram(27);
  long total = 0;
  for (int h : hist) total += h;
  EXPECT_EQ(total, static_cast<long>(ds.size()));
  EXPECT_THROW(ds.label_histogram(3), ConfigError);
}

TEST(DatasetTest, SampleCountMatchesEpisodeLengths) {
  const fs::path dir = temp_dir("count");
  demos::CollectOptions o;
  o.episodes_per_scenario = 10;
  o.seed = 3;
  const auto r = demos::collect(o, dir);
  ASSERT_EQ(r.episodes.size(), 40u);
  std::size_t expected = 0;
  for (const auto& e : r.episodes) expected += load_episode_manifest(dir / e).at("steps").size();
  training::DatasetOptions opts;
  opts.modalities = {model::Modality::kAudio};
  const auto ds = training::WindowDataset::load(r.manifest, opts);
  EXPECT_EQ(ds.size(), expected);
  EXPECT_EQ(ds.episode_count(), 40u);
  EXPECT_EQ(ds.skipped(), 0);
  fs::remove_all(dir);
}

TEST(DatasetTest, CorruptEpisodeSkipped) {
  const fs::path dir = temp_dir("corrupt");
  save_episode(expert_episode(Task::kPacking, "left_flat", 4), dir / "good");
  save_episode(expert_episode(Task::kPacking, "back_flat", 5), dir / "bad");
  fs::remove(dir / "bad" / "audio.wav");
  save_dataset_manifest(dir / "dataset.json", {"good", "bad", "missing"});
  std::vector<std::string> messages;
  const auto ds = training::WindowDataset::load(dir / "dataset.json", {},
                                                [&](const std::string& m) { messages.push_back(m); });
  EXPECT_EQ(ds.episode_count(), 1u);
  EXPECT_EQ(ds.skipped(), 2);
  EXPECT_FALSE(messages.empty());
  fs::remove_all(dir);
}

TEST(DatasetTest, AudioStatsMatchTwoPassOracle) {
  const auto& ds = small_packing_dataset();
  const auto stats = ds.audio_stats();
  // Distinct segments, keyed by episode and spectrogram index.
  std::vector<audio::MelSpectrogram> store;
  std::set<std::pair<int, int>> keys;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.sample(i);
    const auto w = ds.window(i);
    for (int n = 0; n < w.slots(); ++n) {
      if (keys.insert({s.episode, s.audio[n]}).second) store.push_back(w.audio[n]);
    }
  }
  double sum = 0.0, count = 0.0;
  for (const auto& m : store) {
    for (float v : m.values) sum += v, count += 1.0;
  }
  const double mean = sum / count;
  double ss = 0.0;
  for (const auto& m : store) {
    for (float v : m.values) ss += (v - mean) * (v - mean);
  }
  EXPECT_NEAR(stats.audio_mean, mean, 1e-6 * std::abs(mean) + 1e-9);
  EXPECT_NEAR(stats.audio_std, std::sqrt(ss / (count - 1.0)), 1e-6);
}

TEST(TrainTest, SameSeedSameCheckpoint) {
  const auto& ds = small_packing_dataset();
  const auto cfg = tiny_config(Task::kPacking);
  const auto a = training::train(cfg, ds);
  const auto b = training::train(cfg, ds);
  EXPECT_EQ(training::checkpoint_hash(a), training::checkpoint_hash(b));
  auto other = cfg;
  other.seed = 6;
  EXPECT_NE(training::checkpoint_hash(training::train(other, ds)), training::checkpoint_hash(a));
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_GT(a.step, 0);
  EXPECT_EQ(a.stats, ds.audio_stats());
}

TEST(TrainTest, InitialLossNearUniform) {
  const auto& ds = small_packing_dataset();
  auto cfg = tiny_config(Task::kPacking, 1);
  cfg.optimizer.learning_rate = 1e-12;
  const auto ck = training::train(cfg, ds);
  EXPECT_NEAR(ck.history[0].loss, std::log(27.0), 0.3);
}

TEST(TrainTest, NonFiniteLossReportsDiagnostics) {
  const auto& ds = small_packing_dataset();
  auto cfg = tiny_config(Task::kPacking, 1);
  cfg.stats = model::NormalizationStats{0.0, std::nan("")};
  try {
    training::train(cfg, ds);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("A{"), std::string::npos) << msg;
  }
}

TEST(TrainTest, ConfigMismatchesRejected) {
  const auto& ds = small_packing_dataset();
  EXPECT_THROW(training::train(tiny_config(Task::kPouring), ds), ConfigError);
  training::WindowDataset empty{training::DatasetOptions{}};
  EXPECT_THROW(training::train(tiny_config(Task::kPacking), empty), NoDataError);
  training::DatasetOptions vonly;
  vonly.modalities = {model::Modality::kVisual};
  training::WindowDataset vds{vonly};
  vds.add_episode(expert_episode(Task::kPacking, "hard_slanted", 1));
  EXPECT_THROW(training::train(tiny_config(Task::kPacking), vds), ConfigError);
  auto bad = tiny_config(Task::kPacking);
  bad.preprocess.crop_width = 200;
  EXPECT_THROW(training::train(bad, ds), ConfigError);
}

TEST(TrainTest, ValidationSplitByEpisode) {
  const auto& ds = small_packing_dataset();
  auto cfg = tiny_config(Task::kPacking, 1);
  cfg.val_fraction = 0.5;
  const auto ck = training::train(cfg, ds);
  EXPECT_GT(ck.history[0].val_loss, 0.0);
}

TEST(TrainTest, ConfigJsonRoundTrip) {
  auto cfg = tiny_config(Task::kPouring, 7);
  cfg.dataset = "x/dataset.json";
  cfg.stats = model::NormalizationStats{1.5, 2.5};
  cfg.val_fraction = 0.25;
  const nlohmann::json j = cfg;
  const auto back = j.get<training::TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

class CheckpointTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ckpt_ = new training::Checkpoint(training::train(tiny_config(Task::kPacking, 1), small_packing_dataset()));
  }
  static void TearDownTestSuite() { delete ckpt_; }
  static training::Checkpoint* ckpt_;
};
training::Checkpoint* CheckpointTest::ckpt_ = nullptr;

TEST_F(CheckpointTest, RoundTripIsLosslessAndForwardIdentical) {
  const fs::path dir = temp_dir("ckpt");
  training::save_checkpoint(*ckpt_, dir / "a.ckpt");
  const auto back = training::load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(training::serialize_checkpoint(back), training::serialize_checkpoint(*ckpt_));
  EXPECT_EQ(back.stats, ckpt_->stats);
  EXPECT_EQ(back.history, ckpt_->history);
  EXPECT_EQ(back.policy, ckpt_->policy);

  const auto p1 = ckpt_->make_policy();
  const auto p2 = back.make_policy();
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = model::allocate_input(ckpt_->policy, 1);
    for (auto& m : in.maps) {
      for (Eigen::Index k = 0; k < m.data.size(); ++k) m.data.data()[k] = static_cast<float>(rng.normal());
    }
    const auto a = p1->forward(in);
    const auto b = p2->forward(in);
    ASSERT_EQ(std::memcmp(a.logits.data(), b.logits.data(), sizeof(float) * a.logits.size()), 0);
  }
  fs::remove_all(dir);
}

TEST_F(CheckpointTest, TruncatedFileRejected) {
  const auto bytes = training::serialize_checkpoint(*ckpt_);
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(training::deserialize_checkpoint(part), FormatError) << cut;
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(training::deserialize_checkpoint(flipped), FormatError);
}

TEST_F(CheckpointTest, VersionMismatchRejected) {
  auto bytes = training::serialize_checkpoint(*ckpt_);
  bytes[8] = static_cast<std::uint8_t>(training::kCheckpointVersion + 1);
  EXPECT_THROW(training::deserialize_checkpoint(bytes), VersionMismatchError);
}

TEST_F(CheckpointTest, MissingTensorRejected) {
  auto c = *ckpt_;
  c.tensors.erase(c.tensors.begin());
  EXPECT_THROW(c.make_policy(), FormatError);
}

TEST_F(CheckpointTest, RolloutIsDeterministicAndTaskChecked) {
  auto env = sim::make_environment(Task::kPacking);
  const auto a = evaluation::rollout(*ckpt_, *env, "hard_slanted", 21).trial;
  const auto b = evaluation::rollout(*ckpt_, *env, "hard_slanted", 21).trial;
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.outcome, b.outcome);
  ASSERT_EQ(a.attention.size(), a.actions.size());
  for (const auto& row : a.attention) EXPECT_NEAR(row[0] + row[1] + row[2], 1.0, 1e-5);
  auto pour = sim::make_environment(Task::kPouring);
  EXPECT_THROW(evaluation::rollout(*ckpt_, *pour, "60g", 1), ConfigError);
}

TEST_F(CheckpointTest, EvaluationDoesNotMutateAndRepeats) {
  const auto before = training::serialize_checkpoint(*ckpt_);
  auto env = sim::make_environment(Task::kPacking);
  evaluation::CheckpointController c(*ckpt_);
  evaluation::Protocol p;
  p.trials = 1;
  p.max_steps = 30;
  const auto r1 = evaluation::report_json(evaluation::evaluate(c, *env, p));
  const auto r2 = evaluation::report_json(evaluation::evaluate(c, *env, p));
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(training::serialize_checkpoint(*ckpt_), before);
  EXPECT_EQ(r1.at("scenarios").size(), 4u);
  EXPECT_EQ(r1.at("modalities"), "V+A+T");
}

TEST(EvaluationTest, ExpertAsPolicyReachesGates) {
  auto env = sim::make_environment(Task::kPacking);
  evaluation::ExpertController expert(Task::kPacking);
  evaluation::Protocol p;
  p.trials = 10;
  const auto report = evaluation::evaluate(expert, *env, p);
  EXPECT_DOUBLE_EQ(report.average_success, 1.0);
  EXPECT_NE(evaluation::format_table(report).find("1.00"), std::string::npos);
  EXPECT_THROW(evaluation::timeline_csv(report.trials[0]), NotAvailableError);

  auto pour = sim::make_environment(Task::kPouring);
  evaluation::ExpertController pexpert(Task::kPouring);
  const auto preport = evaluation::evaluate(pexpert, *pour, p);
  for (const auto& t : preport.trials) EXPECT_LE(t.weight_error, 1.0);
}

TEST(EvaluationTest, MeanStdUsesSampleDenominator) {
  const auto r = evaluation::mean_std({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(r.mean, 2.0);
  EXPECT_DOUBLE_EQ(r.std, 1.0);
  EXPECT_DOUBLE_EQ(evaluation::mean_std({4.0}).std, 0.0);
}

TEST(EvaluationTest, SummaryRecomputesFromTrials) {
  evaluation::EvalReport r;
  r.task = Task::kPouring;
  for (double e : {1.0, 2.0, 3.0}) {
    evaluation::TrialResult t;
    t.scenario = "60g";
    t.weight_error = e;
    r.trials.push_back(t);
  }
  evaluation::summarize(r);
  ASSERT_EQ(r.scenarios.size(), 1u);
  EXPECT_DOUBLE_EQ(r.scenarios[0].weight_error.mean, 2.0);
  EXPECT_DOUBLE_EQ(r.scenarios[0].weight_error.std, 1.0);
  const auto j = evaluation::report_json(r);
  EXPECT_DOUBLE_EQ(j.at("scenarios")[0].at("weight_error_std").get<double>(), 1.0);
  EXPECT_NE(evaluation::format_table(r).find("2.00 +- 1.00"), std::string::npos);
}

TEST(EvaluationTest, UniformTimelineIsConstant) {
  evaluation::TrialResult t;
  for (int k = 0; k < 5; ++k) t.attention.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
  const std::string csv = evaluation::timeline_csv(t);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,score_V,score_A,score_T");
  int rows = 0;
  while (std::getline(in, line)) {
    double v, a, tt;
    int step;
    ASSERT_EQ(std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &step, &v, &a, &tt), 4);
    EXPECT_EQ(step, rows);
    EXPECT_NEAR(v, 1.0 / 3, 1e-8);
    EXPECT_NEAR(a, 1.0 / 3, 1e-8);
    EXPECT_NEAR(v + a + tt, 1.0, 1e-5);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
  EXPECT_NE(evaluation::timeline_svg(t).find("<polyline"), std::string::npos);
}

TEST(EvaluationTest, VisionFreePackingStartsWithScriptedApproach) {
  auto cfg = tiny_config(Task::kPacking, 1);
  cfg.policy = model::PolicyConfig::make(Task::kPacking, "small", model::FusionVariant::kMulsa,
                                         {model::Modality::kAudio, model::Modality::kTactile});
  const auto ck = training::train(cfg, small_packing_dataset());
  evaluation::CheckpointController c(ck);
  EXPECT_TRUE(c.uses_heuristic());
  auto env = sim::make_environment(Task::kPacking);
  const auto& sim = dynamic_cast<const sim::PackingSim&>(*env);
  const auto r = evaluation::rollout(c, *env, "back_flat", 8, {60, false}).trial;
  // Approach ticks carry no attention, so the per-tick timeline is dropped.
  EXPECT_TRUE(r.attention.empty());
  const auto s0 = sim.initial_state(sim::PackingScenario::kBackFlat, 8);
  const auto& p = sim.config().pre_insertion;
  const int first = model::heuristic_visual_policy({double(s0.cell[0]), double(s0.cell[1]), double(s0.cell[2])},
                                                   {double(p[0]), double(p[1]), double(p[2])}, 0.5)
                        .action.class_index;
  EXPECT_EQ(r.actions.at(0), first);
}
