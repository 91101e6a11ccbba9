#include "mulsa/training/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mulsa/common/bytes.hpp"
#include "mulsa/common/error.hpp"

namespace mulsa::training {

namespace {

constexpr char kMagic[8] = {'M', 'U', 'L', 'S', 'A', 'C', 'K', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end, std::string origin)
      : bytes_(bytes), end_(end), origin_(std::move(origin)) {}

  const std::uint8_t* take(std::size_t n) {
    if (n > end_ - pos_) throw FormatError("checkpoint is truncated", origin_);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace

void to_json(nlohmann::json& j, const EpochMetrics& m) {
  j = {{"epoch", m.epoch},
       {"loss", m.loss},
       {"accuracy", m.accuracy},
       {"val_loss", m.val_loss},
       {"val_accuracy", m.val_accuracy}};
}

void from_json(const nlohmann::json& j, EpochMetrics& m) {
  m.epoch = j.at("epoch").get<int>();
  m.loss = j.at("loss").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  m.val_loss = j.value("val_loss", 0.0);
  m.val_accuracy = j.value("val_accuracy", 0.0);
}

Checkpoint Checkpoint::capture(const model::Policy& policy) {
  Checkpoint c;
  c.policy = policy.config();
  for (const nn::Parameter* p : policy.parameters().all()) c.tensors[p->name] = p->value;
  return c;
}

std::unique_ptr<model::Policy> Checkpoint::make_policy() const {
  auto policy = std::make_unique<model::Policy>(this->policy);
  auto params = policy->parameters().all();
  if (params.size() != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (nn::Parameter* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw ShapeError("tensor " + p->name + " has shape " + std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", model expects " +
                       std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    }
    p->value = it->second;
  }
  return policy;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  nlohmann::json header = {{"policy", c.policy},
                           {"train_config", c.train_config},
                           {"stats", c.stats},
                           {"preprocess", c.preprocess},
                           {"step", c.step},
                           {"history", c.history}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, m] : c.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) put_u32(out, std::bit_cast<std::uint32_t>(m.data()[k]));
  }
  put_u64(out, fnv1a64(out));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 8 + 4 + 8 + 8) throw FormatError("checkpoint is truncated", origin);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("not a checkpoint file", origin);
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, body, origin);
  r.take(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + " is incompatible with " +
                               std::to_string(kCheckpointVersion));
  }
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(std::span(bytes.data(), body))) {
    throw FormatError("checkpoint checksum mismatch (truncated or corrupt)", origin);
  }

  Checkpoint c;
  const std::uint64_t header_len = r.u64();
  const auto* text = r.take(header_len);
  try {
    const auto header = nlohmann::json::parse(text, text + header_len);
    c.policy = header.at("policy").get<model::PolicyConfig>();
    c.train_config = header.at("train_config");
    c.stats = header.at("stats").get<model::NormalizationStats>();
    c.preprocess = header.at("preprocess").get<model::PreprocessConfig>();
    c.step = header.at("step").get<long long>();
    c.history = header.at("history").get<std::vector<EpochMetrics>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), origin);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t len = r.u32();
    const auto* name = r.take(len);
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw FormatError("unsupported tensor rank " + std::to_string(rank), origin);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    nn::Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<float>(r.u32());
    c.tensors.emplace(std::string(reinterpret_cast<const char*>(name), len), std::move(m));
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint", origin);
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_bytes(path.string(), serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path.string()), path.string());
}

std::uint64_t checkpoint_hash(const Checkpoint& checkpoint) { return fnv1a64(serialize_checkpoint(checkpoint)); }

}  // namespace mulsa::training
