// mulsa command-line front end: collect, train, eval, serve, spectrogram, report-plot.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mulsa/audio/mel.hpp"
#include "mulsa/audio/resample.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/common/image.hpp"
#include "mulsa/common/wav.hpp"
#include "mulsa/demos/collect.hpp"
#include "mulsa/evaluation/evaluation.hpp"
#include "mulsa/model/encoder.hpp"
#include "mulsa/sensordata/episode.hpp"
#include "mulsa/sensordata/window.hpp"
#include "mulsa/teleop/server.hpp"
#include "mulsa/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mulsa;

namespace {

fs::path default_data_root() {
  const char* env = std::getenv("MULSA_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// --config: keys are long option names. Top-level scalars apply to every
// subcommand, an object under the subcommand's name applies to it alone.
// Flags given on the command line win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find_if(args.begin(), args.end(),
                         [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
  if (it == args.end()) return args;
  std::string path;
  if (*it == "--config") {
    if (it + 1 == args.end()) throw ConfigError("--config needs a file");
    path = *(it + 1);
    it = args.erase(it, it + 2);
  } else {
    path = it->substr(9);
    it = args.erase(it);
  }
  const json cfg = read_json(path);
  if (!cfg.is_object()) throw ConfigError(path + ": config must be a JSON object");
  const std::string sub = args.size() > 1 ? args[1] : "";
  json merged = json::object();
  for (const auto& [k, v] : cfg.items()) {
    if (!v.is_object()) merged[k] = v;
  }
  if (cfg.contains(sub) && cfg[sub].is_object()) {
    for (const auto& [k, v] : cfg[sub].items()) merged[k] = v;
  }
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  for (const auto& [k, v] : merged.items()) {
    const std::string flag = "--" + k;
    if (given(flag)) continue;
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back(flag);
    } else if (v.is_array()) {
      for (const auto& e : v) {
        args.push_back(flag);
        args.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      }
    } else {
      args.push_back(flag);
      args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
  }
  return args;
}

// Pouring scenarios are named by initial mass ("60g"); accept "60" too.
std::string scenario_name(Task task, const std::string& s) {
  if (task == Task::kPouring && !s.empty() && s.back() != 'g') return s + "g";
  return s;
}

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

// ---------------------------------------------------------------- collect

struct CollectArgs {
  std::string source = "expert";
  std::string task = "packing";
  std::vector<std::string> scenarios;
  std::vector<std::string> initial;
  int episodes = 10;
  std::uint64_t seed = 0;
  double noise = 0.05;
  std::string out;
  std::string scenario_file;
  unsigned short port = 8765;
};

int run_collect(const CollectArgs& a) {
  const Task task = task_from_string(a.task);
  const fs::path out = a.out.empty() ? default_data_root() / a.task : fs::path(a.out);
  std::vector<std::string> scenarios;
  for (const auto& s : a.scenarios) scenarios.push_back(scenario_name(task, s));
  for (const auto& s : a.initial) scenarios.push_back(scenario_name(task, s));

  if (a.source == "expert") {
    demos::CollectOptions opts{task, scenarios, a.episodes, a.seed, a.noise, a.scenario_file};
    const auto result = demos::collect(opts, out, log_line);
    std::cout << result.episodes.size() << " episodes (" << result.failed << " failed) -> " << result.manifest.string()
              << "\n";
    return 0;
  }
  if (a.source != "teleop") throw ConfigError("--source must be expert or teleop");
  // Human demonstrations: serve a session that records every episode and stop
  // once enough have been saved.
  teleop::SessionConfig sc;
  sc.task = task;
  sc.scenario = scenarios.empty() ? "" : scenarios.front();
  sc.seed = a.seed;
  sc.record_dir = out;
  sc.scenario_file = a.scenario_file;
  teleop::Session session(sc);
  teleop::Server server(session, a.port);
  std::signal(SIGINT, on_signal);
  server.start();
  std::cerr << "waiting for " << a.episodes << " teleoperated episodes on ws://127.0.0.1:" << server.port()
            << " (send {\"type\":\"record\",\"on\":true} to start)\n";
  while (session.saved_episodes().size() < static_cast<std::size_t>(a.episodes) && !g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  server.stop();
  session.flush();
  std::vector<fs::path> rel;
  for (const auto& p : session.saved_episodes()) rel.push_back(fs::relative(p, out));
  save_dataset_manifest(out / "dataset.json", rel, {{"task", a.task}, {"source", "teleop"}});
  std::cout << rel.size() << " episodes -> " << (out / "dataset.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out = "checkpoint.mulsa";
  std::string modalities = "VAT";
  std::string variant = "mulsa";
  std::string topology = "small";
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double val_fraction = 0.0;
  std::string history;
};

int run_train(const TrainArgs& a) {
  fs::path manifest = a.data.empty() ? default_data_root() : fs::path(a.data);
  if (fs::is_directory(manifest)) manifest /= "dataset.json";
  const json m = read_json(manifest);
  if (!m.contains("task")) throw FormatError(manifest.string() + " does not name its task");
  const Task task = task_from_string(m["task"].get<std::string>());

  training::TrainConfig cfg;
  cfg.dataset = manifest.string();
  cfg.policy = model::PolicyConfig::make(task, a.topology, model::fusion_variant_from_string(a.variant),
                                         model::parse_modalities(a.modalities));
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.optimizer.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.val_fraction = a.val_fraction;
  const auto ckpt = training::train(cfg, log_line);
  training::save_checkpoint(ckpt, a.out);
  if (!a.history.empty()) {
    json h = json::array();
    for (const auto& e : ckpt.history) h.push_back(e);
    write_text(a.history, h.dump(2) + "\n");
  }
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(training::checkpoint_hash(ckpt)));
  std::cout << "checkpoint -> " << a.out << " (" << hash << ")\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string task;
  int trials = 10;
  std::uint64_t seed = 1000;
  std::vector<std::string> scenarios;
  std::string out = "report.json";
  std::string timelines;
  std::string scenario_file;
  int max_steps = 0;
};

int run_eval(const EvalArgs& a) {
  const auto ckpt = training::load_checkpoint(a.checkpoint);
  if (!a.task.empty() && task_from_string(a.task) != ckpt.policy.task) {
    throw ConfigError("checkpoint was trained for " + to_string(ckpt.policy.task) + ", not " + a.task);
  }
  const Task task = ckpt.policy.task;
  auto env = sim::make_environment(task, a.scenario_file);
  evaluation::CheckpointController controller(ckpt);
  evaluation::Protocol protocol;
  for (const auto& s : a.scenarios) protocol.scenarios.push_back(scenario_name(task, s));
  protocol.trials = a.trials;
  protocol.seed = a.seed;
  protocol.max_steps = a.max_steps;
  const auto report = evaluation::evaluate(controller, *env, protocol, [](const evaluation::TrialResult& t) {
    log_line(t.scenario + " #" + std::to_string(t.trial) + (t.success ? " success" : " failure") +
             " steps=" + std::to_string(t.steps));
  });
  write_text(a.out, evaluation::report_json(report).dump(2) + "\n");
  if (!a.timelines.empty()) {
    for (const auto& t : report.trials) {
      if (t.attention.empty()) continue;
      char name[96];
      std::snprintf(name, sizeof name, "%s_%02d.csv", t.scenario.c_str(), t.trial);
      evaluation::export_timeline(t, fs::path(a.timelines) / name);
    }
  }
  std::cout << evaluation::format_table(report);
  return 0;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string task = "packing";
  std::string scenario;
  std::uint64_t seed = 0;
  unsigned short port = 8765;
  std::string address = "127.0.0.1";
  std::string record_dir;
  std::string scenario_file;
  double period = 0.1;
  bool lockstep = false;
  bool no_telemetry = false;
};

int run_serve(const ServeArgs& a) {
  teleop::SessionConfig sc;
  sc.task = task_from_string(a.task);
  sc.scenario = scenario_name(sc.task, a.scenario);
  sc.seed = a.seed;
  sc.record_dir = a.record_dir.empty() ? default_data_root() / "teleop" : fs::path(a.record_dir);
  sc.scenario_file = a.scenario_file;
  sc.lockstep = a.lockstep;
  sc.telemetry = !a.no_telemetry;
  teleop::Session session(sc);
  teleop::Server server(session, a.port, a.address, a.period);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving " << a.task << "/" << session.scenario() << " on ws://" << a.address << ":" << server.port()
            << (a.lockstep ? " (lockstep)" : "") << "\n";
  server.start();
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  session.flush();
  for (const auto& p : session.saved_episodes()) std::cout << p.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- spectrogram

struct SpectrogramArgs {
  std::string wav;
  std::string episode;
  int step = -1;
  std::string out = "mel.csv";
  std::string png;
};

int run_spectrogram(const SpectrogramArgs& a) {
  AudioChunk segment;
  if (!a.wav.empty()) {
    const auto w = read_wav(a.wav);
    segment.samples = w.samples;
    segment.sample_rate = w.sample_rate;
    const auto need = static_cast<std::size_t>(w.sample_rate * kWindowStride + 0.5);
    if (segment.samples.size() > need) {
      segment.samples.erase(segment.samples.begin() + static_cast<std::ptrdiff_t>(need), segment.samples.end());
    }
  } else if (!a.episode.empty()) {
    const Episode ep = load_episode(a.episode);
    if (ep.steps.empty()) throw FormatError("episode has no steps");
    const int step = a.step < 0 ? static_cast<int>(ep.steps.size()) - 1 : a.step;
    if (step >= static_cast<int>(ep.steps.size())) throw ConfigError("--step beyond the episode");
    segment = extract_audio_segment(ep.audio_track(), ep.steps[step].timestamp, kWindowStride);
  } else {
    throw ConfigError("give --wav or --episode");
  }
  const auto mel = segment_spectrogram(segment);
  std::string csv;
  for (int m = 0; m < mel.n_mels; ++m) {
    for (int f = 0; f < mel.n_frames; ++f) {
      char buf[32];
      std::snprintf(buf, sizeof buf, f ? ",%.6g" : "%.6g", static_cast<double>(mel.at(m, f)));
      csv += buf;
    }
    csv += "\n";
  }
  write_text(a.out, csv);
  if (!a.png.empty()) {
    const auto [lo, hi] = std::minmax_element(mel.values.begin(), mel.values.end());
    const float span = std::max(*hi - *lo, 1e-6f);
    Image img(mel.n_mels, mel.n_frames, 1);
    for (int m = 0; m < mel.n_mels; ++m) {
      for (int f = 0; f < mel.n_frames; ++f) {
        // Low bands at the bottom.
        *img.at(mel.n_mels - 1 - m, f) = static_cast<std::uint8_t>(255.0f * (mel.at(m, f) - *lo) / span + 0.5f);
      }
    }
    write_png(a.png, img);
  }
  std::cout << mel.n_mels << "x" << mel.n_frames << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- report-plot

struct PlotArgs {
  std::string report = "report.json";
  std::string out = "timelines";
  std::string scenario;
  bool csv = false;
};

int run_report_plot(const PlotArgs& a) {
  const json r = read_json(a.report);
  int written = 0;
  for (const auto& t : r.at("trials")) {
    evaluation::TrialResult trial;
    trial.scenario = t.at("scenario").get<std::string>();
    trial.trial = t.at("trial").get<int>();
    if (!a.scenario.empty() && trial.scenario != a.scenario) continue;
    for (const auto& row : t.at("attention")) trial.attention.push_back(row.get<evaluation::AttentionScores>());
    if (t.contains("contact")) trial.contact = t["contact"].get<std::vector<bool>>();
    if (trial.attention.empty()) continue;
    char name[96];
    std::snprintf(name, sizeof name, "%s_%02d", trial.scenario.c_str(), trial.trial);
    write_text(fs::path(a.out) / (std::string(name) + ".svg"), evaluation::timeline_svg(trial));
    if (a.csv) write_text(fs::path(a.out) / (std::string(name) + ".csv"), evaluation::timeline_csv(trial));
    ++written;
  }
  if (written == 0) throw NotAvailableError("report has no attention timelines (only mulsa models record them)");
  std::cout << written << " timelines -> " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mulsa: multisensory self-attention policies on desk-scale simulators"};
  app.require_subcommand(1);
  app.add_option("--config", "JSON file of option overrides");  // consumed by expand_config

  CollectArgs ca;
  auto* collect = app.add_subcommand("collect", "record demonstration episodes");
  collect->add_option("--source", ca.source, "expert | teleop")->check(CLI::IsMember({"expert", "teleop"}));
  collect->add_option("--task", ca.task)->check(CLI::IsMember({"packing", "pouring"}));
  collect->add_option("--scenario", ca.scenarios, "scenario name (repeatable)");
  collect->add_option("--initial", ca.initial, "pouring initial mass in grams (repeatable)");
  collect->add_option("--episodes", ca.episodes, "episodes per scenario")->check(CLI::NonNegativeNumber);
  collect->add_option("--seed", ca.seed);
  collect->add_option("--noise", ca.noise, "expert random-action rate")->check(CLI::Range(0.0, 1.0));
  collect->add_option("--out", ca.out, "output directory (default $MULSA_DATA_DIR/<task>)");
  collect->add_option("--scenario-file", ca.scenario_file);
  collect->add_option("--port", ca.port, "teleop source: listen port");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "behavioral cloning from a dataset manifest");
  train->add_option("--data", ta.data, "dataset.json or its directory");
  train->add_option("--out", ta.out, "checkpoint path");
  train->add_option("--modalities", ta.modalities, "e.g. VAT, V, V+A");
  train->add_option("--variant", ta.variant)->check(CLI::IsMember({"mulsa", "direct_concat", "recurrent"}));
  train->add_option("--topology", ta.topology)->check(CLI::IsMember({"small", "paper_resnet18"}));
  train->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber);
  train->add_option("--batch-size", ta.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.lr)->check(CLI::PositiveNumber);
  train->add_option("--seed", ta.seed);
  train->add_option("--val-fraction", ta.val_fraction)->check(CLI::Range(0.0, 0.9));
  train->add_option("--history", ta.history, "write per-epoch metrics JSON here");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "closed-loop evaluation of a checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--task", ea.task)->check(CLI::IsMember({"packing", "pouring"}));
  eval->add_option("--trials", ea.trials, "trials per scenario")->check(CLI::PositiveNumber);
  eval->add_option("--seed", ea.seed);
  eval->add_option("--scenario", ea.scenarios, "restrict to scenario (repeatable)");
  eval->add_option("--out", ea.out, "report JSON path");
  eval->add_option("--timelines", ea.timelines, "directory for per-trial attention CSVs");
  eval->add_option("--scenario-file", ea.scenario_file);
  eval->add_option("--max-steps", ea.max_steps);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "WebSocket teleoperation session");
  serve->add_option("--task", sa.task)->check(CLI::IsMember({"packing", "pouring"}));
  serve->add_option("--scenario", sa.scenario);
  serve->add_option("--seed", sa.seed);
  serve->add_option("--port", sa.port);
  serve->add_option("--address", sa.address);
  serve->add_option("--record-dir", sa.record_dir, "default $MULSA_DATA_DIR/teleop");
  serve->add_option("--scenario-file", sa.scenario_file);
  serve->add_option("--period", sa.period, "tick period in seconds")->check(CLI::PositiveNumber);
  serve->add_flag("--lockstep", sa.lockstep, "advance one tick per action frame");
  serve->add_flag("--no-telemetry", sa.no_telemetry, "omit simulator state from packets");

  SpectrogramArgs spa;
  auto* spec = app.add_subcommand("spectrogram", "dump the 64x50 log-mel of an audio segment");
  spec->add_option("--wav", spa.wav, "mono 16-bit WAV (first 0.5 s)");
  spec->add_option("--episode", spa.episode, "episode directory");
  spec->add_option("--step", spa.step, "segment ending at this step (default last)");
  spec->add_option("--out", spa.out, "CSV path");
  spec->add_option("--png", spa.png, "optional grayscale image");

  PlotArgs pa;
  auto* plot = app.add_subcommand("report-plot", "attention timeline plots from an eval report");
  plot->add_option("--report", pa.report);
  plot->add_option("--out", pa.out, "output directory");
  plot->add_option("--scenario", pa.scenario);
  plot->add_flag("--csv", pa.csv, "also write CSVs");

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*collect) return run_collect(ca);
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*serve) return run_serve(sa);
    if (*spec) return run_spectrogram(spa);
    if (*plot) return run_report_plot(pa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
