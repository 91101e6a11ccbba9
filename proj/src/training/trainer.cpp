#include "mulsa/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mulsa/common/error.hpp"
#include "mulsa/common/rng.hpp"

namespace mulsa::training {

using model::Modality;

void TrainConfig::validate() const {
  policy.fusion.validate();
  preprocess.validate();
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must be in [0, 1)");
  for (Modality m : {Modality::kVisual, Modality::kTactile}) {
    if (!policy.fusion.has(m)) continue;
    const auto& e = policy.encoder(m);
    if (e.height != preprocess.crop_height || e.width != preprocess.crop_width) {
      throw ConfigError("encoder input " + std::to_string(e.width) + "x" + std::to_string(e.height) +
                        " differs from the crop size");
    }
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"dataset", c.dataset},
       {"policy", c.policy},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"optimizer",
        {{"learning_rate", c.optimizer.learning_rate},
         {"beta1", c.optimizer.beta1},
         {"beta2", c.optimizer.beta2},
         {"epsilon", c.optimizer.epsilon},
         {"weight_decay", c.optimizer.weight_decay},
         {"grad_clip", c.optimizer.grad_clip}}},
       {"seed", c.seed},
       {"preprocess", c.preprocess},
       {"val_fraction", c.val_fraction}};
  if (c.stats) j["stats"] = *c.stats;
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.dataset = j.value("dataset", std::string());
  if (j.contains("policy")) c.policy = j.at("policy").get<model::PolicyConfig>();
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
    c.optimizer.grad_clip = o.value("grad_clip", c.optimizer.grad_clip);
  }
  c.seed = j.value("seed", c.seed);
  if (j.contains("preprocess")) c.preprocess = j.at("preprocess").get<model::PreprocessConfig>();
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  if (j.contains("stats")) c.stats = j.at("stats").get<model::NormalizationStats>();
}

namespace {

std::string input_diagnostics(const model::PolicyInput& input) {
  std::ostringstream os;
  for (int m = 0; m < model::kModalityCount; ++m) {
    const auto& map = input.maps[static_cast<std::size_t>(m)];
    if (map.channels == 0) continue;
    const auto& d = map.data;
    const double mean = d.cast<double>().mean();
    const double var = (d.cast<double>().array() - mean).square().mean();
    os << " " << model::to_string(static_cast<Modality>(m)) << "{mean=" << mean << " std=" << std::sqrt(var)
       << " min=" << d.minCoeff() << " max=" << d.maxCoeff() << " finite=" << d.allFinite() << "}";
  }
  return os.str();
}

// Mean loss and accuracy over `indices` with center crops.
std::pair<double, double> evaluate_split(const model::Policy& policy, const WindowDataset& dataset,
                                         const std::vector<std::size_t>& indices, int batch_size,
                                         const model::NormalizationStats& stats) {
  if (indices.empty()) return {0.0, 0.0};
  const auto offset = model::center_crop_offset(dataset.options().preprocess);
  double loss = 0.0;
  long correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const int nb = static_cast<int>(std::min<std::size_t>(batch_size, indices.size() - start));
    auto input = model::allocate_input(policy.config(), nb);
    std::vector<int> labels;
    for (int j = 0; j < nb; ++j) {
      dataset.fill(indices[start + j], input, j, offset, stats);
      labels.push_back(dataset.label(indices[start + j]));
    }
    const auto out = policy.forward(input);
    loss += nn::cross_entropy(out.logits, labels, nullptr) * nb;
    for (int j = 0; j < nb; ++j) correct += out.actions[j] == labels[j];
  }
  return {loss / indices.size(), static_cast<double>(correct) / indices.size()};
}

}  // namespace

Checkpoint train(const TrainConfig& config, const WindowDataset& dataset,
                 const std::function<void(const TrainProgress&)>& on_epoch) {
  config.validate();
  if (dataset.size() == 0) throw NoDataError("training dataset is empty");
  if (dataset.task() != config.policy.task) {
    throw ConfigError("dataset task " + to_string(dataset.task()) + " differs from policy task " +
                      to_string(config.policy.task));
  }
  if (!(dataset.options().preprocess == config.preprocess)) {
    throw ConfigError("dataset preprocessing differs from the training config");
  }
  if (dataset.options().slots != config.policy.fusion.slots) {
    throw ConfigError("dataset window slots differ from the policy");
  }
  for (Modality m : config.policy.fusion.modalities) {
    if (!dataset.has(m)) throw ConfigError("dataset does not cache modality " + model::to_string(m));
  }

  // Validation episodes are drawn once from the seed.
  std::vector<std::size_t> train_idx, val_idx;
  {
    std::vector<int> episodes(dataset.episode_count());
    std::iota(episodes.begin(), episodes.end(), 0);
    Rng rng(mix_seed(config.seed, 0x76616c));
    for (std::size_t i = episodes.size(); i > 1; --i) {
      std::swap(episodes[i - 1], episodes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    const auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * episodes.size()));
    std::vector<bool> is_val(episodes.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[static_cast<std::size_t>(episodes[i])] = true;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      (is_val[static_cast<std::size_t>(dataset.sample(i).episode)] ? val_idx : train_idx).push_back(i);
    }
    if (train_idx.empty()) throw NoDataError("validation split leaves no training samples");
  }

  const model::NormalizationStats stats = config.stats ? *config.stats : dataset.audio_stats();
  model::Policy policy(config.policy);
  policy.init(config.seed);
  nn::Adam adam(policy.parameters(), config.optimizer);

  Checkpoint ckpt;
  long long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = mix_seed(config.seed, static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order = train_idx;
    Rng shuffle(mix_seed(epoch_seed, 0x73687566));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    double loss_sum = 0.0;
    long correct = 0;
    model::PolicyInput input;
    for (std::size_t start = 0, batch_index = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const int nb = static_cast<int>(std::min<std::size_t>(config.batch_size, order.size() - start));
      if (input.batch != nb) input = model::allocate_input(config.policy, nb);
      std::vector<int> labels(static_cast<std::size_t>(nb));
      for (int j = 0; j < nb; ++j) {
        const std::size_t idx = order[start + j];
        Rng crop_rng(mix_seed(epoch_seed, idx));
        dataset.fill(idx, input, j, model::random_crop_offset(config.preprocess, crop_rng), stats);
        labels[static_cast<std::size_t>(j)] = dataset.label(idx);
      }
      const auto fail = [&](const std::string& what) {
        throw NumericError(what + " at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index) + "); inputs:" + input_diagnostics(input));
      };
      model::Policy::Tape tape;
      model::PolicyOutput out;
      try {
        out = policy.forward(input, &tape);
      } catch (const NumericError& e) {
        fail(e.what());
      }
      nn::Matrix dlogits;
      const double loss = nn::cross_entropy(out.logits, labels, &dlogits);
      if (!std::isfinite(loss) || !out.logits.allFinite()) fail("non-finite loss");
      policy.parameters().zero_grad();
      policy.backward(dlogits, tape);
      adam.step();
      ++step;
      loss_sum += loss * nb;
      for (int j = 0; j < nb; ++j) correct += out.actions[j] == labels[j];
    }

    TrainProgress progress;
    progress.metrics.epoch = epoch;
    progress.metrics.loss = loss_sum / order.size();
    progress.metrics.accuracy = static_cast<double>(correct) / order.size();
    if (!val_idx.empty()) {
      const auto [vl, va] = evaluate_split(policy, dataset, val_idx, config.batch_size, stats);
      progress.metrics.val_loss = vl;
      progress.metrics.val_accuracy = va;
    }
    progress.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ckpt.history.push_back(progress.metrics);
    if (on_epoch) on_epoch(progress);
  }

  Checkpoint out = Checkpoint::capture(policy);
  out.train_config = config;
  out.stats = stats;
  out.preprocess = config.preprocess;
  out.step = step;
  out.history = std::move(ckpt.history);
  return out;
}

Checkpoint train(const TrainConfig& config, const std::function<void(const std::string&)>& log) {
  config.validate();
  DatasetOptions opts;
  opts.slots = config.policy.fusion.slots;
  opts.preprocess = config.preprocess;
  opts.modalities = config.policy.fusion.modalities;
  const WindowDataset dataset = WindowDataset::load(config.dataset, opts, log);
  if (log) {
    log("loaded " + std::to_string(dataset.size()) + " samples from " + std::to_string(dataset.episode_count()) +
        " episodes");
  }
  return train(config, dataset, [&](const TrainProgress& p) {
    if (!log) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %d loss %.4f acc %.3f val_loss %.4f val_acc %.3f (%.1fs)",
                  p.metrics.epoch, p.metrics.loss, p.metrics.accuracy, p.metrics.val_loss,
                  p.metrics.val_accuracy, p.seconds);
    log(buf);
  });
}

}  // namespace mulsa::training
