// Acceptance run: one PASS/FAIL line per primary criterion on stdout,
// progress on stderr. Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "mulsa/audio/mel.hpp"
#include "mulsa/common/bytes.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/demos/collect.hpp"
#include "mulsa/demos/experts.hpp"
#include "mulsa/evaluation/evaluation.hpp"
#include "mulsa/model/preprocess.hpp"
#include "mulsa/nn/layers.hpp"
#include "mulsa/sim/packing.hpp"
#include "mulsa/sim/pouring.hpp"
#include "mulsa/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace mulsa;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

struct Report {
  std::vector<std::string> lines;
  int failed = 0;
  std::ofstream file;

  void add(const std::string& name, bool pass, const std::string& detail, const std::vector<std::string>& notes = {}) {
    std::string line = std::string(pass ? "PASS" : "FAIL") + "  " + name + " | " + detail;
    std::cout << line << std::endl;
    if (file) file << line << "\n";
    for (const auto& n : notes) {
      std::cout << "        " << n << std::endl;
      if (file) file << "        " << n << "\n";
    }
    if (file) file.flush();
    failed += !pass;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------------ DSP

// Naive DFT of a centered, reflect-padded, Hann-windowed frame, with an
// explicit twiddle table. Magnitudes.
struct NaiveStft {
  static constexpr int kN = 512, kWin = 400, kHop = 160;
  std::vector<std::complex<double>> tw;
  NaiveStft() : tw(kN) {
    for (int j = 0; j < kN; ++j) tw[j] = std::polar(1.0, -2.0 * std::numbers::pi * j / kN);
  }
  std::vector<double> frame(const std::vector<float>& x, int f) const {
    const int n = static_cast<int>(x.size()), off = (kN - kWin) / 2;
    auto at = [&](int i) -> double {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
      return x[i];
    };
    std::vector<double> buf(kN, 0.0);
    for (int j = 0; j < kWin; ++j) {
      buf[off + j] = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j / kWin)) * at(f * kHop + off + j - kN / 2);
    }
    std::vector<double> mag(kN / 2 + 1);
    for (int k = 0; k <= kN / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (int j = 0; j < kN; ++j) acc += buf[j] * tw[(static_cast<long>(k) * j) % kN];
      mag[k] = std::abs(acc);
    }
    return mag;
  }
};

void criterion_dsp(Report& r) {
  Rng rng(20240);
  NaiveStft oracle;
  const audio::MelParams params;
  int bad_shape = 0;
  double worst = 0.0;
  long bins = 0;
  for (int seg = 0; seg < 100; ++seg) {
    std::vector<float> x(8000);
    // Mix of noise, tones and silence stretches.
    const double amp = rng.uniform(0.01, 0.9);
    const double f0 = rng.uniform(50.0, 7900.0);
    for (int i = 0; i < 8000; ++i) {
      double v = amp * rng.uniform(-1.0, 1.0);
      if (seg % 3 == 1) v = amp * std::sin(2.0 * std::numbers::pi * f0 * i / 16000.0) + 0.01 * v;
      if (seg % 5 == 2 && i > 4000) v = 0.0;
      x[i] = static_cast<float>(v);
    }
    const auto mel = audio::mel_spectrogram(x, params);
    if (mel.n_mels != 64 || mel.n_frames != 50 || mel.values.size() != 64u * 50u) ++bad_shape;
    const auto power = audio::stft_power(x, params);
    for (int f = 0; f < static_cast<int>(power.size()); ++f) {
      const auto ref = oracle.frame(x, f);
      for (int k = 0; k < 257; ++k) {
        const double a = std::sqrt(power[f][k]);
        // Bins at the float noise floor of the frame are compared absolutely.
        const double scale = std::max(ref[k], 1e-9);
        worst = std::max(worst, std::abs(a - ref[k]) / scale);
        ++bins;
      }
    }
  }
  r.add("DSP exactness", bad_shape == 0 && worst <= 1e-6,
        fmt("100 segments: %d wrong shapes (want 64x50); max STFT magnitude rel. error %.3g over %ld bins (tol 1e-6)",
            bad_shape, worst, bins));
}

// ------------------------------------------------------------------ attention

void criterion_attention(Report& r) {
  Rng rng(777);
  double worst = 0.0, peak = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int tokens = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int d = 2 * (1 + static_cast<int>(rng.uniform_int(0, 3)));  // 2..8
    std::vector<int> head_opts;
    for (int h = 1; h <= d; ++h)
      if (d % h == 0) head_opts.push_back(h);
    const int heads = head_opts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(head_opts.size()) - 1))];
    const int batch = 1 + static_cast<int>(rng.uniform_int(0, 1));
    nn::ParameterStore s;
    nn::MultiHeadAttention a(s, "a", d, heads);
    a.init(rng);
    // Biases start at zero; give them values so they are exercised too.
    for (nn::Parameter* p : s.all())
      if (p->name.ends_with("bias")) nn::init_normal(p->value, rng, 0.1);
    nn::Matrix x(batch * tokens, d);
    nn::init_normal(x, rng, 1.0);
    const nn::Matrix y = a.forward(x, tokens, nullptr);
    for (int b = 0; b < batch; ++b) {
      oracle::Rows rows(tokens, std::vector<double>(d));
      for (int i = 0; i < tokens; ++i)
        for (int c = 0; c < d; ++c) rows[i][c] = x(b * tokens + i, c);
      const auto ref = oracle::attention(rows, s, "a", heads);
      for (int i = 0; i < tokens; ++i)
        for (int c = 0; c < d; ++c) {
          worst = std::max(worst, std::abs(static_cast<double>(y(b * tokens + i, c)) - ref[i][c]));
          peak = std::max(peak, std::abs(ref[i][c]));
        }
    }
    ++instances;
  }
  r.add("Attention oracle", worst <= 1e-5,
        fmt("%d random instances (<=4 tokens, D<=8, default init, N(0,1) inputs): max abs deviation %.3g "
            "(tol 1e-5), max |output| %.2f",
            instances, worst, peak));
}

// ------------------------------------------------------------------ gradients

void criterion_gradients(Report& r) {
  std::vector<std::string> notes;
  bool pass = true;
  int total = 0;
  for (auto v : {model::FusionVariant::kMulsa, model::FusionVariant::kDirectConcat, model::FusionVariant::kRecurrent}) {
    const auto cfg = model::PolicyConfig::make(Task::kPacking, "small", v);
    model::Policy p(cfg);
    p.init(5);
    Rng rng(6);
    // A zero-initialized head would leave every upstream gradient at zero.
    nn::init_normal(p.parameters().get("head.out.weight").value, rng, 0.3);
    model::PolicyInput in = model::allocate_input(cfg, 2);
    for (auto& m : in.maps) nn::init_normal(m.data, rng, 1.0);
    const auto res = testing::check_policy_gradients(p, in, {3, 21}, 200, 1e-3f, rng);
    pass = pass && res.coordinates >= 200 && res.vector_relative_error < 1e-2;
    total += res.coordinates;
    notes.push_back(fmt("%s: %d coordinates, relative error %.3g, median per-coordinate %.3g, %d kink draws resampled",
                        model::to_string(v).c_str(), res.coordinates, res.vector_relative_error,
                        res.median_coordinate_error, res.skipped_kinks));
  }
  r.add("Gradient correctness", pass, fmt("small model, %d coordinates across 3 variants (tol 1e-2)", total), notes);
}

// ------------------------------------------------------------------ action codes

void criterion_bijection(Report& r) {
  int failures = 0, checked = 0;
  for (const auto& spec : {ActionSpec::packing(), ActionSpec::pouring()}) {
    const int dims = spec.dim_count();
    int n = 1;
    for (int i = 0; i < dims; ++i) n *= 3;
    std::set<int> seen;
    for (int k = 0; k < n; ++k) {
      // Independent base-3 expansion.
      std::vector<int> digits(dims);
      int rest = k;
      for (int i = dims - 1; i >= 0; --i) {
        digits[i] = rest % 3 - 1;
        rest /= 3;
      }
      const auto decoded = decode_action(k, spec);
      failures += decoded != digits;
      failures += encode_action(decoded, spec) != k;
      failures += Action::from_index(k, spec).values != digits;
      seen.insert(encode_action(digits, spec));
      ++checked;
    }
    failures += static_cast<int>(seen.size()) != n;
  }
  r.add("Action-code bijection", failures == 0, fmt("%d classes (27 packing + 9 pouring), %d failures", checked, failures));
}

// ------------------------------------------------------------------ simulators

double rms(const AudioChunk& c) {
  double s = 0.0;
  for (auto v : c.samples) s += (v / 32768.0) * (v / 32768.0);
  return c.samples.empty() ? 0.0 : std::sqrt(s / c.samples.size());
}

std::vector<std::uint8_t> episode_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, dir).string();
    all.insert(all.end(), rel.begin(), rel.end());
    const auto b = read_file_bytes(f);
    all.insert(all.end(), b.begin(), b.end());
  }
  return all;
}

void criterion_simulators(Report& r, const fs::path& work) {
  std::vector<std::string> notes;
  // (a) mass conservation.
  bool a_ok = true;
  {
    sim::PouringSim sim;
    Rng rng(31);
    sim::PouringState s = sim.initial_state(100, 1);
    long violations = 0, episodes = 1;
    for (int i = 0; i < 100000; ++i) {
      if (s.terminated) {
        s = sim.initial_state(episodes % 2 ? 60 : 100, static_cast<std::uint64_t>(episodes));
        ++episodes;
      }
      const int dx = static_cast<int>(rng.uniform_int(-1, 1));
      const int dphi = rng.uniform() < 0.6 ? 1 : static_cast<int>(rng.uniform_int(-1, 1));
      s = sim.transition(s, {dx, dphi});
      if (s.mass_in_hand + s.mass_in_fixed + s.mass_spilled != s.initial_mass || s.mass_in_hand < 0 ||
          s.mass_in_fixed < 0 || s.mass_spilled < 0) {
        ++violations;
      }
    }
    a_ok = violations == 0;
    notes.push_back(fmt("(a) pouring mass conservation: 100000 random steps over %ld episodes, %ld violations", episodes,
                        violations));
  }
  // (b) observability partition.
  bool b_ok = true;
  {
    sim::PackingSim sim;
    long compared = 0, differing = 0;
    // Every state visited by noisy experts on hard_slanted, relabeled soft.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      demos::Expert expert({Task::kPacking, 0.2, seed});
      sim::PackingSim env;
      env.reset("hard_slanted", seed);
      while (!env.terminated()) {
        sim::PackingState soft = env.state();
        soft.scenario = sim::PackingScenario::kSoftSlanted;
        soft.contact_soft = env.state().contact == sim::ContactKind::kBump;
        ++compared;
        if (sim.render_visual(env.state()) != sim.render_visual(soft) ||
            sim.render_tactile(env.state()) != sim.render_tactile(soft)) {
          ++differing;
        }
        env.step(expert.act(env));
      }
    }
    // Contact audio: descend onto the slanted bump from every column.
    double min_ratio = 1e300;
    int contact_ticks = 0;
    for (int x = -6; x <= 6; ++x)
      for (int y = -6; y <= 6; ++y) {
        sim::PackingState h, so;
        h.scenario = sim::PackingScenario::kHardSlanted;
        so.scenario = sim::PackingScenario::kSoftSlanted;
        h.cell = so.cell = {x, y, 14};
        if (!sim.in_interior(x, y)) continue;
        for (int t = 0; t < 20 && !h.terminated && !so.terminated; ++t) {
          const auto h1 = sim.transition(h, {0, 0, -1});
          const auto s1 = sim.transition(so, {0, 0, -1});
          // Contact ticks: the tick in which contact with the bump begins.
          const bool h_new = h1.contact == sim::ContactKind::kBump && h.contact != sim::ContactKind::kBump;
          const bool s_new = s1.contact == sim::ContactKind::kBump && so.contact != sim::ContactKind::kBump;
          if (h_new && s_new) {
            const std::uint64_t seed = static_cast<std::uint64_t>((x + 10) * 100 + (y + 10) * 3 + t);
            const double ratio = rms(sim.synth_audio(h1, h, seed)) / std::max(rms(sim.synth_audio(s1, so, seed)), 1e-12);
            min_ratio = std::min(min_ratio, ratio);
            ++contact_ticks;
          }
          h = h1;
          so = s1;
        }
      }
    b_ok = differing == 0 && contact_ticks > 0 && min_ratio > 4.0;
    notes.push_back(fmt("(b) hard vs soft slanted: %ld equal states, %ld with differing visual/tactile bytes; "
                        "min hard/soft audio RMS ratio %.2f over %d contact-onset ticks (want > 4)",
                        compared, differing, min_ratio, contact_ticks));
  }
  // (c) seed determinism.
  bool c_ok = true;
  {
    int runs = 0, mismatches = 0;
    for (Task task : {Task::kPacking, Task::kPouring}) {
      auto probe = sim::make_environment(task);
      for (const auto& scen : probe->scenarios()) {
        const fs::path d1 = work / "determinism" / (scen + "_1"), d2 = work / "determinism" / (scen + "_2");
        auto e1 = sim::make_environment(task), e2 = sim::make_environment(task);
        const Episode ep1 = demos::run_expert_episode(*e1, scen, 4242, 0.05);
        const Episode ep2 = demos::run_expert_episode(*e2, scen, 4242, 0.05);
        save_episode(ep1, d1);
        save_episode(ep2, d2);
        mismatches += !(ep1 == ep2) || episode_bytes(d1) != episode_bytes(d2);
        ++runs;
      }
    }
    c_ok = mismatches == 0;
    notes.push_back(fmt("(c) seed determinism: %d scenario pairs, %d byte-level mismatches", runs, mismatches));
  }
  r.add("Simulator contracts", a_ok && b_ok && c_ok,
        fmt("(a) %s (b) %s (c) %s", a_ok ? "ok" : "FAIL", b_ok ? "ok" : "FAIL", c_ok ? "ok" : "FAIL"), notes);
}

// ------------------------------------------------------------------ experts

void criterion_experts(Report& r) {
  int pack_ok = 0, pack_total = 0;
  {
    sim::PackingSim sim;
    for (int scen = 0; scen < 4; ++scen)
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto s = sim.initial_state(static_cast<sim::PackingScenario>(scen), seed);
        while (!s.terminated) {
          const Action a = demos::packing_expert(sim, s);
          s = sim.transition(s, {a.values[0], a.values[1], a.values[2]});
        }
        pack_ok += s.success;
        ++pack_total;
      }
  }
  double worst = 0.0, sum = 0.0;
  int pour_total = 0;
  {
    sim::PouringSim sim;
    for (int mass : {60, 100})
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto s = sim.initial_state(mass, seed);
        demos::PouringPhase phase;
        while (!s.terminated) {
          const Action a = demos::pouring_expert(sim, s, phase);
          s = sim.transition(s, {a.values[0], a.values[1]});
        }
        const double err = std::abs(s.mass_in_fixed - sim.config().target_mg) / 1000.0;
        worst = std::max(worst, err);
        sum += err;
        ++pour_total;
      }
  }
  r.add("Expert gates", pack_ok == pack_total && worst <= 1.0,
        fmt("packing %d/%d successes (want all); pouring max error %.3f g, mean %.3f g over %d runs (want <= 1 g)",
            pack_ok, pack_total, worst, sum / pour_total, pour_total));
}

// ------------------------------------------------------------------ learning

struct Settings {
  fs::path work;
  int seeds = 3;
  int epochs = 5;
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t protocol_seed = 1000;
  int trials = 10;
};

training::TrainConfig train_config(const training::WindowDataset& ds, const Settings& st, model::FusionVariant v,
                                   const std::string& mods, std::uint64_t seed) {
  training::TrainConfig cfg;
  cfg.policy = model::PolicyConfig::make(ds.task(), "small", v, model::parse_modalities(mods));
  cfg.epochs = st.epochs;
  cfg.batch_size = st.batch;
  cfg.optimizer.learning_rate = st.lr;
  cfg.seed = seed;
  return cfg;
}

training::Checkpoint train_logged(const training::WindowDataset& ds, const training::TrainConfig& cfg,
                                  const std::string& tag) {
  const auto t0 = Clock::now();
  auto ck = training::train(cfg, ds, [&](const training::TrainProgress& p) {
    progress(fmt("%s epoch %d loss %.4f acc %.3f (%.0fs)", tag.c_str(), p.metrics.epoch, p.metrics.loss,
                 p.metrics.accuracy, p.seconds));
  });
  progress(fmt("%s trained in %.0fs", tag.c_str(), since(t0)));
  return ck;
}

evaluation::EvalReport eval_logged(const training::Checkpoint& ck, const Settings& st,
                                   const std::vector<std::string>& scenarios, const std::string& tag) {
  auto env = sim::make_environment(ck.policy.task);
  evaluation::CheckpointController c(ck);
  evaluation::Protocol p;
  p.scenarios = scenarios;
  p.trials = st.trials;
  p.seed = st.protocol_seed;
  const auto t0 = Clock::now();
  auto rep = evaluation::evaluate(c, *env, p);
  progress(fmt("%s evaluated in %.0fs", tag.c_str(), since(t0)));
  return rep;
}

// Runs seeds in order until a majority has passed or failed.
struct Majority {
  int passes = 0, fails = 0;
  std::vector<std::string> per_seed;
  bool decided(int seeds) const { return passes > seeds / 2 || fails > seeds / 2; }
  bool pass(int seeds) const { return passes > seeds / 2; }
};

Majority run_majority(int seeds, const std::function<std::pair<bool, std::string>(std::uint64_t)>& run) {
  Majority m;
  for (int s = 0; s < seeds && !m.decided(seeds); ++s) {
    const auto [ok, text] = run(static_cast<std::uint64_t>(s));
    (ok ? m.passes : m.fails)++;
    m.per_seed.push_back(fmt("seed %d: %s (%s)", s, text.c_str(), ok ? "pass" : "fail"));
  }
  return m;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
  return out;
}

// Mean cross-entropy of an untrained policy over the whole dataset, center crops.
double initial_loss(const training::WindowDataset& ds, const training::TrainConfig& cfg) {
  model::Policy policy(cfg.policy);
  policy.init(cfg.seed);
  const auto stats = ds.audio_stats();
  const auto offset = model::center_crop_offset(cfg.preprocess);
  double loss = 0.0;
  for (std::size_t start = 0; start < ds.size(); start += 64) {
    const int nb = static_cast<int>(std::min<std::size_t>(64, ds.size() - start));
    auto in = model::allocate_input(cfg.policy, nb);
    std::vector<int> labels;
    for (int j = 0; j < nb; ++j) {
      ds.fill(start + j, in, j, offset, stats);
      labels.push_back(ds.label(start + j));
    }
    loss += nn::cross_entropy(policy.forward(in).logits, labels, nullptr) * nb;
  }
  return loss / static_cast<double>(ds.size());
}

fs::path collect_dataset(Task task, int per_scenario, const fs::path& dir) {
  const auto t0 = Clock::now();
  demos::CollectOptions o;
  o.task = task;
  o.episodes_per_scenario = per_scenario;
  o.seed = 7;
  o.noise_rate = 0.05;
  const auto res = demos::collect(o, dir);
  progress(fmt("collected %zu %s demos (%d failed) in %.0fs", res.episodes.size(), to_string(task).c_str(), res.failed,
               since(t0)));
  return res.manifest;
}

struct AblationState {
  std::vector<std::string> notes;
  bool pass = true;
  double seconds = 0.0;
};

void criterion_round_trips(Report& r, const training::Checkpoint& ck, const training::WindowDataset& ds,
                           const fs::path& manifest, const fs::path& work) {
  std::vector<std::string> notes;
  // Checkpoint: file round trip is bitwise, and the reloaded policy computes
  // bit-identical logits.
  const fs::path path = work / "roundtrip.ckpt";
  training::save_checkpoint(ck, path);
  const auto bytes1 = read_file_bytes(path);
  const auto back = training::load_checkpoint(path);
  const auto bytes2 = training::serialize_checkpoint(back);
  bool tensors_equal = back.tensors.size() == ck.tensors.size();
  for (const auto& [name, m] : ck.tensors) {
    const auto it = back.tensors.find(name);
    tensors_equal = tensors_equal && it != back.tensors.end() && it->second.rows() == m.rows() &&
                    it->second.cols() == m.cols() &&
                    std::memcmp(it->second.data(), m.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0;
  }
  const auto p1 = ck.make_policy(), p2 = back.make_policy();
  auto in = model::allocate_input(ck.policy, 8);
  for (int j = 0; j < 8; ++j) ds.fill(static_cast<std::size_t>(j) * 97 % ds.size(), in, j, model::center_crop_offset(ck.preprocess), ck.stats);
  const auto l1 = p1->forward(in).logits, l2 = p2->forward(in).logits;
  const bool forward_equal =
      l1.size() == l2.size() && std::memcmp(l1.data(), l2.data(), sizeof(float) * static_cast<std::size_t>(l1.size())) == 0;
  const bool ck_ok = bytes1 == bytes2 && tensors_equal && forward_equal;
  notes.push_back(fmt("checkpoint: %zu bytes, re-serialized identical %s, %zu tensors bitwise %s, forward logits bitwise %s",
                      bytes1.size(), bytes1 == bytes2 ? "yes" : "no", ck.tensors.size(), tensors_equal ? "yes" : "no",
                      forward_equal ? "yes" : "no"));

  // Episodes: load and save again; structures and every file byte agree.
  int episodes = 0, bad = 0;
  const auto dirs = load_dataset_manifest(manifest);
  for (std::size_t i = 0; i < dirs.size(); i += std::max<std::size_t>(1, dirs.size() / 8)) {
    const Episode ep = load_episode(dirs[i]);
    const fs::path copy = work / "episode_roundtrip" / std::to_string(i);
    save_episode(ep, copy);
    const Episode again = load_episode(copy);
    bad += !(again == ep) || episode_bytes(copy) != episode_bytes(dirs[i]);
    ++episodes;
  }
  notes.push_back(fmt("episodes: %d reloaded and re-saved, %d mismatches", episodes, bad));
  r.add("Checkpoint and episode round-trips", ck_ok && bad == 0, ck_ok && bad == 0 ? "bitwise lossless" : "mismatch",
        notes);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mulsa acceptance run"};
  Settings st;
  std::string work = "acceptance_work";
  std::vector<std::string> only;
  app.add_option("--work-dir", work, "scratch directory (datasets, checkpoints, timelines)");
  app.add_option("--only", only, "run only these criteria: dsp attention gradients bijection sim experts learning");
  app.add_option("--seeds", st.seeds)->check(CLI::PositiveNumber);
  app.add_option("--epochs", st.epochs)->check(CLI::PositiveNumber);
  app.add_option("--lr", st.lr);
  CLI11_PARSE(app, argc, argv);
  st.work = work;
  fs::create_directories(st.work);
  auto want = [&](const std::string& k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  Report report;
  report.file.open(st.work / "acceptance_report.txt");
  const auto t_all = Clock::now();
  try {
    if (want("dsp")) criterion_dsp(report);
    if (want("attention")) criterion_attention(report);
    if (want("gradients")) criterion_gradients(report);
    if (want("bijection")) criterion_bijection(report);
    if (want("sim")) criterion_simulators(report, st.work);
    if (want("experts")) criterion_experts(report);

    if (want("learning")) {
      AblationState abl;
      const auto t_abl = Clock::now();
      // ---- packing
      const fs::path pack_manifest = collect_dataset(Task::kPacking, 50, st.work / "data_packing");
      {
        training::DatasetOptions dopt;
        const auto ds = training::WindowDataset::load(pack_manifest, dopt);
        progress(fmt("packing dataset: %zu samples", ds.size()));
        std::optional<training::Checkpoint> vat0;

        const Majority m1 = run_majority(st.seeds, [&](std::uint64_t seed) {
          const auto cfg = train_config(ds, st, model::FusionVariant::kMulsa, "VAT", seed);
          auto ck = train_logged(ds, cfg, fmt("packing V+A+T seed %d", static_cast<int>(seed)));
          const auto rep = eval_logged(ck, st, {}, "packing V+A+T");
          if (seed == 0) vat0 = ck;
          std::string per;
          for (const auto& s : rep.scenarios) per += fmt(" %s=%.1f", s.scenario.c_str(), s.success_rate);
          return std::pair{rep.average_success >= 0.8, fmt("avg %.3f;%s", rep.average_success, per.c_str())};
        });
        abl.pass = abl.pass && m1.pass(st.seeds);
        abl.notes.push_back("(i) V+A+T packing success >= 0.8: " + join(m1.per_seed));

        const Majority m2 = run_majority(st.seeds, [&](std::uint64_t seed) {
          const auto cfg = train_config(ds, st, model::FusionVariant::kMulsa, "V", seed);
          auto ck = train_logged(ds, cfg, fmt("packing V seed %d", static_cast<int>(seed)));
          const auto rep = eval_logged(ck, st, {"hard_slanted", "soft_slanted"}, "packing V");
          return std::pair{rep.average_success <= 0.6,
                           fmt("slanted avg %.3f (hard %.1f, soft %.1f)", rep.average_success,
                               rep.scenarios[0].success_rate, rep.scenarios[1].success_rate)};
        });
        abl.pass = abl.pass && m2.pass(st.seeds);
        abl.notes.push_back("(ii) V-only slanted success <= 0.6: " + join(m2.per_seed));
        abl.seconds += since(t_abl);

        // Baselines.
        {
          std::vector<std::string> notes;
          bool pass = true;
          for (auto v : {model::FusionVariant::kDirectConcat, model::FusionVariant::kRecurrent}) {
            const auto cfg = train_config(ds, st, v, "VAT", 0);
            const double l0 = initial_loss(ds, cfg);
            const auto ck = train_logged(ds, cfg, model::to_string(v));
            const double l5 = ck.history.back().loss;
            const double red = 1.0 - l5 / l0;
            pass = pass && red >= 0.5;
            notes.push_back(fmt("%s: initial loss %.4f, epoch-%d mean loss %.4f, reduction %.1f%%",
                                model::to_string(v).c_str(), l0, st.epochs, l5, 100.0 * red));
          }
          report.add("Baseline plumbing", pass, "direct_concat and recurrent, >= 50% loss reduction in the first 5 epochs",
                     notes);
        }

        // Attention timeline on the seed-0 V+A+T model.
        {
          const auto ck = *vat0;
          auto env = sim::make_environment(Task::kPacking);
          evaluation::CheckpointController c(ck);
          evaluation::Protocol p;
          p.scenarios = {"hard_slanted"};
          p.trials = 10;
          p.seed = st.protocol_seed;
          const auto rep = evaluation::evaluate(c, *env, p);
          const fs::path tdir = st.work / "timelines";
          fs::create_directories(tdir);
          std::ofstream(tdir / "report.json") << evaluation::report_json(rep).dump(2);
          int stochastic_bad = 0, rows = 0, higher = 0;
          std::string per;
          for (const auto& t : rep.trials) {
            const fs::path csv = tdir / fmt("hard_slanted_%02d.csv", t.trial);
            if (!t.attention.empty()) evaluation::export_timeline(t, csv);
            std::ifstream in(csv);
            std::string line;
            std::getline(in, line);
            std::vector<double> score_a;
            while (std::getline(in, line)) {
              double step, v, a, tt;
              if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &step, &v, &a, &tt) != 4) continue;
              ++rows;
              stochastic_bad += std::abs(v + a + tt - 1.0) > 1e-5;
              score_a.push_back(a);
            }
            // Pre-contact ticks precede the first bump contact.
            double pre = 0, con = 0;
            int npre = 0, ncon = 0;
            bool touched = false;
            for (std::size_t k = 0; k < score_a.size() && k < t.contact.size(); ++k) {
              touched = touched || t.contact[k];
              if (t.contact[k]) {
                con += score_a[k];
                ++ncon;
              } else if (!touched) {
                pre += score_a[k];
                ++npre;
              }
            }
            const bool up = ncon > 0 && npre > 0 && con / ncon > pre / npre;
            higher += up;
            per += ncon > 0 && npre > 0 ? fmt(" %.3f/%.3f", pre / npre, con / ncon) : std::string(" no-contact");
          }
          const bool pass = rows > 0 && stochastic_bad == 0 && higher >= 7;
          report.add("Attention timeline sanity", pass,
                     fmt("%d rows, %d not row-stochastic (tol 1e-5); score_A contact > pre-contact in %d/10 "
                         "hard_slanted trials (want >= 7)",
                         rows, stochastic_bad, higher),
                     {"pre/contact mean score_A per trial:" + per, "timelines: " + tdir.string()});
        }

        criterion_round_trips(report, *vat0, ds, pack_manifest, st.work);
      }

      // ---- pouring
      const auto t_pour = Clock::now();
      const fs::path pour_manifest = collect_dataset(Task::kPouring, 50, st.work / "data_pouring");
      {
        training::DatasetOptions dopt;
        const auto ds = training::WindowDataset::load(pour_manifest, dopt);
        progress(fmt("pouring dataset: %zu samples", ds.size()));
        const Majority m3 = run_majority(st.seeds, [&](std::uint64_t seed) {
          const auto cfg = train_config(ds, st, model::FusionVariant::kMulsa, "VAT", seed);
          auto ck = train_logged(ds, cfg, fmt("pouring V+A+T seed %d", static_cast<int>(seed)));
          const auto rep = eval_logged(ck, st, {}, "pouring V+A+T");
          return std::pair{rep.average_weight_error <= 5.0,
                           fmt("mean error %.2f g (60g %.2f, 100g %.2f)", rep.average_weight_error,
                               rep.scenarios[0].weight_error.mean, rep.scenarios[1].weight_error.mean)};
        });
        abl.pass = abl.pass && m3.pass(st.seeds);
        abl.notes.push_back("(iii) V+A+T pouring error <= 5 g: " + join(m3.per_seed));

        const Majority m4 = run_majority(st.seeds, [&](std::uint64_t seed) {
          const auto cfg = train_config(ds, st, model::FusionVariant::kMulsa, "V", seed);
          auto ck = train_logged(ds, cfg, fmt("pouring V seed %d", static_cast<int>(seed)));
          const auto rep = eval_logged(ck, st, {}, "pouring V");
          return std::pair{rep.average_weight_error >= 15.0,
                           fmt("mean error %.2f g (60g %.2f, 100g %.2f)", rep.average_weight_error,
                               rep.scenarios[0].weight_error.mean, rep.scenarios[1].weight_error.mean)};
        });
        abl.pass = abl.pass && m4.pass(st.seeds);
        abl.notes.push_back("(iv) V-only pouring error >= 15 g: " + join(m4.per_seed));
      }
      abl.seconds += since(t_pour);
      const bool in_budget = abl.seconds <= 3600.0;
      abl.notes.push_back(fmt("ablation wall time %.0f s (budget 3600 s; excludes the baseline, timeline and round-trip "
                              "checks)",
                              abl.seconds));
      report.add("Desk-scale ablation", abl.pass && in_budget,
                 fmt("small models, %d epochs, lr %g, batch %d, majority of %d seeds", st.epochs, st.lr, st.batch,
                     st.seeds),
                 abl.notes);
    }
  } catch (const std::exception& e) {
    report.add("acceptance harness", false, std::string("aborted: ") + e.what());
  }
  std::cout << fmt("%d criteria failed; total %.0f s", report.failed, since(t_all)) << std::endl;
  return report.failed == 0 ? 0 : 1;
}
