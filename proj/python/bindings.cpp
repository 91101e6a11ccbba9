#include <fstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mulsa/audio/mel.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/demos/collect.hpp"
#include "mulsa/evaluation/evaluation.hpp"
#include "mulsa/model/encoder.hpp"
#include "mulsa/sensordata/episode.hpp"
#include "mulsa/sim/environment.hpp"
#include "mulsa/training/trainer.hpp"

namespace py = pybind11;
using namespace mulsa;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
using JsonText = std::string;

std::string manifest_task(const std::filesystem::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw Error("cannot read " + manifest.string());
  return nlohmann::json::parse(f).at("task").get<std::string>();
}

py::array_t<std::uint8_t> image_array(const Image& img) {
  py::array_t<std::uint8_t> a({img.height, img.width, img.channels});
  std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
  return a;
}

py::dict observation_dict(const Observation& o) {
  py::dict d;
  d["visual"] = image_array(o.visual.image);
  d["tactile"] = image_array(o.tactile.image);
  py::array_t<std::int16_t> audio(static_cast<py::ssize_t>(o.audio.samples.size()));
  std::copy(o.audio.samples.begin(), o.audio.samples.end(), audio.mutable_data());
  d["audio"] = audio;
  d["audio_rate"] = o.audio.sample_rate;
  d["timestamp"] = o.visual.timestamp;
  d["aux"] = o.aux;
  return d;
}

class PyEnv {
 public:
  PyEnv(const std::string& task, const std::string& scenario_file)
      : env_(sim::make_environment(task_from_string(task), scenario_file)) {}
  std::vector<std::string> scenarios() const { return env_->scenarios(); }
  py::dict reset(const std::string& scenario, std::uint64_t seed) { return observation_dict(env_->reset(scenario, seed)); }
  py::dict step(const std::vector<int>& values) {
    return observation_dict(env_->step(Action::from_values(values, env_->action_spec())));
  }
  bool terminated() const { return env_->terminated(); }
  int step_count() const { return env_->step_count(); }
  JsonText outcome() const { return env_->outcome().dump(); }
  JsonText state() const { return env_->state_json().dump(); }

 private:
  std::unique_ptr<sim::Environment> env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mulsa native core";

  py::register_exception<Error>(m, "MulsaError");

  m.def("encode_action", [](const std::vector<int>& values, const std::string& task) {
    return encode_action(values, ActionSpec::for_task(task_from_string(task)));
  });
  m.def("decode_action", [](int index, const std::string& task) {
    return decode_action(index, ActionSpec::for_task(task_from_string(task)));
  });

  m.def(
      "mel_spectrogram",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> samples) {
        const auto mel = audio::mel_spectrogram(std::span<const float>(samples.data(), samples.size()));
        py::array_t<float> out({mel.n_mels, mel.n_frames});
        std::copy(mel.values.begin(), mel.values.end(), out.mutable_data());
        return out;
      },
      py::arg("samples"), "Log-mel of a 16 kHz float segment; 0.5 s gives (64, 50).");

  py::class_<PyEnv>(m, "Environment")
      .def(py::init<const std::string&, const std::string&>(), py::arg("task"), py::arg("scenario_file") = "")
      .def("scenarios", &PyEnv::scenarios)
      .def("reset", &PyEnv::reset, py::arg("scenario"), py::arg("seed") = 0)
      .def("step", &PyEnv::step, py::arg("values"))
      .def_property_readonly("terminated", &PyEnv::terminated)
      .def_property_readonly("step_count", &PyEnv::step_count)
      .def("_outcome", &PyEnv::outcome)
      .def("_state", &PyEnv::state);

  m.def(
      "collect",
      [](const std::string& task, const std::filesystem::path& out, int episodes, std::uint64_t seed, double noise,
         const std::vector<std::string>& scenarios) {
        py::gil_scoped_release release;
        demos::CollectOptions o{task_from_string(task), scenarios, episodes, seed, noise, ""};
        return demos::collect(o, out).manifest;
      },
      py::arg("task"), py::arg("out"), py::arg("episodes") = 10, py::arg("seed") = 0, py::arg("noise") = 0.05,
      py::arg("scenarios") = std::vector<std::string>{});

  m.def(
      "_episode_summary",
      [](const std::filesystem::path& dir) {
        const Episode ep = load_episode(dir);
        nlohmann::json j;
        j["task"] = to_string(ep.metadata.task);
        j["scenario"] = ep.metadata.scenario;
        j["seed"] = ep.metadata.seed;
        j["steps"] = ep.steps.size();
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& s : ep.steps) actions.push_back(s.action.class_index);
        j["actions"] = actions;
        j["outcome"] = ep.outcome;
        return j.dump();
      },
      py::arg("directory"));

  m.def(
      "train",
      [](const std::filesystem::path& data, const std::filesystem::path& out, const std::string& modalities,
         const std::string& variant, int epochs, double lr, int batch_size, std::uint64_t seed) {
        py::gil_scoped_release release;
        const auto manifest = std::filesystem::is_directory(data) ? data / "dataset.json" : data;
        const auto task = task_from_string(manifest_task(manifest));
        training::TrainConfig cfg;
        cfg.dataset = manifest.string();
        cfg.policy = model::PolicyConfig::make(task, "small", model::fusion_variant_from_string(variant),
                                               model::parse_modalities(modalities));
        cfg.epochs = epochs;
        cfg.optimizer.learning_rate = lr;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        const auto ckpt = training::train(cfg);
        training::save_checkpoint(ckpt, out);
        nlohmann::json h = nlohmann::json::array();
        for (const auto& e : ckpt.history) h.push_back(e);
        return h.dump();
      },
      py::arg("data"), py::arg("out"), py::arg("modalities") = "VAT", py::arg("variant") = "mulsa",
      py::arg("epochs") = 50, py::arg("lr") = 1e-4, py::arg("batch_size") = 32, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, int trials, std::uint64_t seed,
         const std::vector<std::string>& scenarios) {
        py::gil_scoped_release release;
        const auto ckpt = training::load_checkpoint(checkpoint);
        auto env = sim::make_environment(ckpt.policy.task);
        evaluation::CheckpointController controller(ckpt);
        evaluation::Protocol p;
        p.scenarios = scenarios;
        p.trials = trials;
        p.seed = seed;
        return evaluation::report_json(evaluation::evaluate(controller, *env, p)).dump();
      },
      py::arg("checkpoint"), py::arg("trials") = 10, py::arg("seed") = 1000,
      py::arg("scenarios") = std::vector<std::string>{});

  m.def("checkpoint_hash", [](const std::filesystem::path& path) {
    return training::checkpoint_hash(training::load_checkpoint(path));
  });
}
