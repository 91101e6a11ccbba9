#include "mulsa/model/policy.hpp"

#include <algorithm>

#include "mulsa/common/error.hpp"

namespace mulsa::model {

std::string to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::kMulsa: return "mulsa";
    case FusionVariant::kDirectConcat: return "direct_concat";
    case FusionVariant::kRecurrent: return "recurrent";
  }
  return "?";
}

FusionVariant fusion_variant_from_string(std::string_view name) {
  if (name == "mulsa") return FusionVariant::kMulsa;
  if (name == "direct_concat" || name == "concat") return FusionVariant::kDirectConcat;
  if (name == "recurrent" || name == "lstm") return FusionVariant::kRecurrent;
  throw ConfigError("unknown fusion variant: " + std::string(name));
}

bool FusionConfig::has(Modality m) const { return index_of(m) >= 0; }

int FusionConfig::index_of(Modality m) const {
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i] == m) return static_cast<int>(i);
  }
  return -1;
}

void FusionConfig::validate() const {
  if (modalities.empty()) throw ConfigError("at least one modality must be active");
  for (std::size_t i = 1; i < modalities.size(); ++i) {
    if (static_cast<int>(modalities[i]) <= static_cast<int>(modalities[i - 1])) {
      throw ConfigError("modalities must be unique and in V, A, T order");
    }
  }
  if (slots <= 0) throw ConfigError("slots must be positive");
  if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
  if (variant == FusionVariant::kMulsa) {
    if (heads <= 0 || feature_dim % heads != 0) {
      throw ConfigError("heads * head_dim must equal feature_dim");
    }
    if (layers < 0) throw ConfigError("layers must be non-negative");
  }
  if (class_count <= 0) throw ConfigError("class_count must be positive");
  for (int h : mlp_hidden) {
    if (h <= 0) throw ConfigError("mlp hidden sizes must be positive");
  }
}

void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = {{"variant", to_string(c.variant)},
       {"modalities", modalities_to_string(c.modalities)},
       {"slots", c.slots},
       {"feature_dim", c.feature_dim},
       {"layers", c.layers},
       {"heads", c.heads},
       {"ff_dim", c.ff_dim},
       {"mlp_hidden", c.mlp_hidden},
       {"use_positional_embeddings", c.use_positional_embeddings},
       {"class_count", c.class_count},
       {"recurrent_hidden", c.recurrent_hidden}};
}

void from_json(const nlohmann::json& j, FusionConfig& c) {
  c.variant = fusion_variant_from_string(j.at("variant").get<std::string>());
  c.modalities = parse_modalities(j.at("modalities").get<std::string>());
  c.slots = j.at("slots").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
  c.use_positional_embeddings = j.at("use_positional_embeddings").get<bool>();
  c.class_count = j.at("class_count").get<int>();
  c.recurrent_hidden = j.at("recurrent_hidden").get<int>();
}

const EncoderConfig& PolicyConfig::encoder(Modality m) const {
  switch (m) {
    case Modality::kVisual: return visual;
    case Modality::kAudio: return audio;
    case Modality::kTactile: return tactile;
  }
  return visual;
}

PolicyConfig PolicyConfig::make(Task task, const std::string& topology, FusionVariant variant,
                                std::vector<Modality> modalities) {
  PolicyConfig c;
  c.task = task;
  const int d = topology == "paper_resnet18" ? 512 : 64;
  c.visual = {topology, d, 3, 96, 128};
  c.audio = {topology, d, 1, 64, 50};
  c.tactile = {topology, d, 3, 96, 128};
  c.fusion.variant = variant;
  c.fusion.modalities = std::move(modalities);
  c.fusion.feature_dim = d;
  c.fusion.heads = 8;
  c.fusion.ff_dim = 4 * d;
  c.fusion.mlp_hidden = d == 512 ? std::vector<int>{1024, 256} : std::vector<int>{128, 64};
  c.fusion.recurrent_hidden = d;
  c.fusion.class_count = ActionSpec::for_task(task).class_count();
  return c;
}

void to_json(nlohmann::json& j, const PolicyConfig& c) {
  j = {{"task", to_string(c.task)}, {"fusion", c.fusion}, {"visual", c.visual},
       {"audio", c.audio}, {"tactile", c.tactile}};
}

void from_json(const nlohmann::json& j, PolicyConfig& c) {
  c.task = task_from_string(j.at("task").get<std::string>());
  c.fusion = j.at("fusion").get<FusionConfig>();
  c.visual = j.at("visual").get<EncoderConfig>();
  c.audio = j.at("audio").get<EncoderConfig>();
  c.tactile = j.at("tactile").get<EncoderConfig>();
}

std::array<double, kModalityCount> aggregate_modality_attention(const AttentionTrace& trace) {
  if (trace.empty()) throw NotAvailableError("attention trace is empty for this fusion variant");
  std::array<double, kModalityCount> score{0.0, 0.0, 0.0};
  double rows = 0.0;
  for (const nn::Matrix& a : trace.weights) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        score[static_cast<int>(trace.token_modality[j])] += a(i, j);
      }
      rows += 1.0;
    }
  }
  for (double& s : score) s /= rows;
  return score;
}

Policy::Policy(PolicyConfig config) : config_(std::move(config)) {
  const FusionConfig& f = config_.fusion;
  f.validate();
  for (Modality m : f.modalities) {
    const EncoderConfig& ec = config_.encoder(m);
    if (ec.feature_dim != f.feature_dim) throw ConfigError("encoder feature_dim differs from fusion feature_dim");
    encoders_[static_cast<int>(m)].emplace(ec, store_, "encoder." + to_string(m));
  }
  if (f.variant == FusionVariant::kMulsa) {
    if (f.use_positional_embeddings) {
      modality_embedding_ = &store_.add("fusion.modality_embedding", kModalityCount, f.feature_dim);
      time_embedding_ = &store_.add("fusion.time_embedding", f.slots, f.feature_dim);
    }
    for (int l = 0; l < f.layers; ++l) {
      layers_.emplace_back(store_, "fusion.layer" + std::to_string(l), f.feature_dim, f.heads, f.ff_dim);
    }
  } else if (f.variant == FusionVariant::kRecurrent) {
    lstm_ = nn::Lstm(store_, "fusion.lstm", static_cast<int>(f.modalities.size()) * f.feature_dim,
                     f.recurrent_hidden);
  }
  int in = f.variant == FusionVariant::kRecurrent ? f.recurrent_hidden : f.token_count() * f.feature_dim;
  for (std::size_t i = 0; i < f.mlp_hidden.size(); ++i) {
    mlp_.emplace_back(store_, "head.fc" + std::to_string(i), in, f.mlp_hidden[i]);
    in = f.mlp_hidden[i];
  }
  mlp_.emplace_back(store_, "head.out", in, f.class_count);
}

void Policy::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& e : encoders_) {
    if (e) e->init(rng);
  }
  if (modality_embedding_) {
    nn::init_normal(modality_embedding_->value, rng, 0.1);
    nn::init_normal(time_embedding_->value, rng, 0.1);
  }
  for (auto& l : layers_) l.init(rng);
  if (config_.fusion.variant == FusionVariant::kRecurrent) lstm_.init(rng);
  for (std::size_t i = 0; i + 1 < mlp_.size(); ++i) mlp_[i].init(rng);
  mlp_.back().init_scaled(rng, 0.01);
}

std::vector<Modality> Policy::token_modalities() const {
  std::vector<Modality> out;
  for (Modality m : config_.fusion.modalities) {
    for (int n = 0; n < config_.fusion.slots; ++n) out.push_back(m);
  }
  return out;
}

std::vector<int> Policy::token_slots() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < config_.fusion.modalities.size(); ++i) {
    for (int n = 0; n < config_.fusion.slots; ++n) out.push_back(n);
  }
  return out;
}

ModalityFeatures Policy::encode(const PolicyInput& input, Tape* tape) const {
  const FusionConfig& f = config_.fusion;
  if (input.slots != f.slots) {
    throw ShapeError("policy expects " + std::to_string(f.slots) + " slots, got " +
                     std::to_string(input.slots));
  }
  ModalityFeatures out;
  for (Modality m : f.modalities) {
    const int idx = static_cast<int>(m);
    const nn::FeatureMap& x = input[m];
    if (x.batch != input.batch * input.slots) {
      throw ShapeError("modality " + to_string(m) + " has " + std::to_string(x.batch) +
                       " images, expected " + std::to_string(input.batch * input.slots));
    }
    out[idx] = encoders_[idx]->forward(x, tape ? &tape->encoders[idx] : nullptr);
  }
  return out;
}

nn::Matrix Policy::build_tokens(const ModalityFeatures& features, int batch) const {
  const FusionConfig& f = config_.fusion;
  const int T = f.token_count(), N = f.slots, D = f.feature_dim;
  nn::Matrix tokens(static_cast<Eigen::Index>(batch) * T, D);
  for (std::size_t mi = 0; mi < f.modalities.size(); ++mi) {
    const int m = static_cast<int>(f.modalities[mi]);
    const nn::Matrix& feat = features[m];
    if (feat.rows() != static_cast<Eigen::Index>(batch) * N || feat.cols() != D) {
      throw ConfigError("modality " + to_string(f.modalities[mi]) + " must contribute " +
                        std::to_string(N) + " embeddings of width " + std::to_string(D) +
                        " per sample");
    }
    for (int b = 0; b < batch; ++b) {
      tokens.middleRows(static_cast<Eigen::Index>(b) * T + mi * N, N) = feat.middleRows(b * N, N);
    }
  }
  if (modality_embedding_) {
    for (int b = 0; b < batch; ++b) {
      for (std::size_t mi = 0; mi < f.modalities.size(); ++mi) {
        const int m = static_cast<int>(f.modalities[mi]);
        for (int n = 0; n < N; ++n) {
          auto row = tokens.row(static_cast<Eigen::Index>(b) * T + mi * N + n);
          row += modality_embedding_->value.row(m);
          row += time_embedding_->value.row(n);
        }
      }
    }
  }
  return tokens;
}

nn::Matrix Policy::self_attention(const nn::Matrix& tokens, Tape* tape,
                                  std::vector<AttentionTrace>* traces) const {
  const FusionConfig& f = config_.fusion;
  const int T = f.token_count();
  const int batch = static_cast<int>(tokens.rows() / T);
  if (tape) tape->layers.resize(layers_.size());
  if (traces) {
    traces->assign(batch, AttentionTrace{});
    const auto mods = token_modalities();
    const auto slots = token_slots();
    for (auto& t : *traces) {
      t.layers = static_cast<int>(layers_.size());
      t.heads = f.heads;
      t.tokens = T;
      t.token_modality = mods;
      t.token_slot = slots;
    }
  }
  nn::Matrix h = tokens;
  std::vector<nn::Matrix> weights;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l].forward(h, T, tape ? &tape->layers[l] : nullptr, traces ? &weights : nullptr);
    if (traces) {
      for (int b = 0; b < batch; ++b) {
        for (int hd = 0; hd < f.heads; ++hd) {
          (*traces)[b].weights.push_back(std::move(weights[static_cast<std::size_t>(b) * f.heads + hd]));
        }
      }
    }
  }
  return h;
}

nn::Matrix Policy::classify(const nn::Matrix& fused, Tape* tape) const {
  if (tape) {
    tape->mlp.resize(mlp_.size());
    tape->mlp_relu.resize(mlp_.size() - 1);
  }
  nn::Matrix h = fused;
  for (std::size_t i = 0; i + 1 < mlp_.size(); ++i) {
    h = nn::relu_forward(mlp_[i].forward(h, tape ? &tape->mlp[i] : nullptr),
                         tape ? &tape->mlp_relu[i] : nullptr);
  }
  return mlp_.back().forward(h, tape ? &tape->mlp.back() : nullptr);
}

nn::Matrix Policy::fuse(const ModalityFeatures& features, int batch, Tape* tape,
                        std::vector<AttentionTrace>* traces) const {
  const FusionConfig& f = config_.fusion;
  const int T = f.token_count(), D = f.feature_dim, N = f.slots;
  switch (f.variant) {
    case FusionVariant::kMulsa: {
      const nn::Matrix out = self_attention(build_tokens(features, batch), tape, traces);
      return Eigen::Map<const nn::Matrix>(out.data(), batch, static_cast<Eigen::Index>(T) * D);
    }
    case FusionVariant::kDirectConcat: {
      const nn::Matrix tokens = build_tokens(features, batch);
      return Eigen::Map<const nn::Matrix>(tokens.data(), batch, static_cast<Eigen::Index>(T) * D);
    }
    case FusionVariant::kRecurrent: {
      const int k = static_cast<int>(f.modalities.size());
      std::vector<nn::Matrix> xs(N, nn::Matrix(batch, k * D));
      for (int mi = 0; mi < k; ++mi) {
        const nn::Matrix& feat = features[static_cast<int>(f.modalities[mi])];
        for (int b = 0; b < batch; ++b) {
          for (int n = 0; n < N; ++n) xs[n].block(b, mi * D, 1, D) = feat.row(b * N + n);
        }
      }
      const auto hs = lstm_.forward(xs, tape ? &tape->lstm : nullptr);
      return hs.back();
    }
  }
  return {};
}

PolicyOutput Policy::forward(const PolicyInput& input, Tape* tape, bool with_trace) const {
  if (tape) tape->batch = input.batch;
  PolicyOutput out;
  const ModalityFeatures features = encode(input, tape);
  const bool trace = with_trace && config_.fusion.variant == FusionVariant::kMulsa;
  const nn::Matrix fused = fuse(features, input.batch, tape, trace ? &out.traces : nullptr);
  out.logits = classify(fused, tape);
  if (!out.logits.allFinite()) throw NumericError("non-finite policy logits");
  out.actions.resize(input.batch);
  for (int b = 0; b < input.batch; ++b) {
    out.actions[b] = nn::argmax(out.logits.row(b).data(), static_cast<int>(out.logits.cols()));
  }
  return out;
}

void Policy::backward(const nn::Matrix& dlogits, Tape& tape) {
  const FusionConfig& f = config_.fusion;
  const int batch = tape.batch;
  const int T = f.token_count(), D = f.feature_dim, N = f.slots;

  nn::Matrix d = mlp_.back().backward(dlogits, tape.mlp.back());
  for (std::size_t i = mlp_.size() - 1; i-- > 0;) {
    d = mlp_[i].backward(nn::relu_backward(d, tape.mlp_relu[i]), tape.mlp[i]);
  }

  ModalityFeatures dfeat;
  for (Modality m : f.modalities) {
    dfeat[static_cast<int>(m)] = nn::Matrix::Zero(static_cast<Eigen::Index>(batch) * N, D);
  }
  if (f.variant == FusionVariant::kRecurrent) {
    const auto dxs = lstm_.backward(d, tape.lstm);
    for (std::size_t mi = 0; mi < f.modalities.size(); ++mi) {
      nn::Matrix& df = dfeat[static_cast<int>(f.modalities[mi])];
      for (int b = 0; b < batch; ++b) {
        for (int n = 0; n < N; ++n) df.row(b * N + n) = dxs[n].block(b, mi * D, 1, D);
      }
    }
  } else {
    nn::Matrix dtokens = Eigen::Map<const nn::Matrix>(d.data(), static_cast<Eigen::Index>(batch) * T, D);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      dtokens = layers_[l].backward(dtokens, T, tape.layers[l]);
    }
    for (std::size_t mi = 0; mi < f.modalities.size(); ++mi) {
      const int m = static_cast<int>(f.modalities[mi]);
      for (int b = 0; b < batch; ++b) {
        for (int n = 0; n < N; ++n) {
          const auto row = dtokens.row(static_cast<Eigen::Index>(b) * T + mi * N + n);
          dfeat[m].row(b * N + n) = row;
          if (modality_embedding_) {
            modality_embedding_->grad.row(m) += row;
            time_embedding_->grad.row(n) += row;
          }
        }
      }
    }
  }
  for (Modality m : f.modalities) {
    const int idx = static_cast<int>(m);
    encoders_[idx]->backward(dfeat[idx], tape.encoders[idx]);
  }
}

}  // namespace mulsa::model
