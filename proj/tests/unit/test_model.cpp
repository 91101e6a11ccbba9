#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/model/policy.hpp"
#include "mulsa/model/preprocess.hpp"
#include "oracles.hpp"

namespace mulsa::model {
namespace {

constexpr Modality V = Modality::kVisual, A = Modality::kAudio, T = Modality::kTactile;

PolicyInput random_input(const PolicyConfig& cfg, int batch, Rng& rng) {
  PolicyInput in = allocate_input(cfg, batch);
  for (auto& m : in.maps) nn::init_normal(m.data, rng, 1.0);
  return in;
}

// Copies every parameter whose name and shape also exist in `from`.
void copy_matching(const Policy& from, Policy& to) {
  for (nn::Parameter* p : to.parameters().all()) {
    if (!from.parameters().contains(p->name)) continue;
    const auto& src = from.parameters().get(p->name).value;
    if (src.rows() == p->value.rows() && src.cols() == p->value.cols()) p->value = src;
  }
}

TEST(EncoderTest, ShapesPerModality) {
  const auto cfg = PolicyConfig::make(Task::kPacking);
  Policy policy(cfg);
  policy.init(1);
  Rng rng(2);
  const PolicyInput in = random_input(cfg, 1, rng);
  const auto feats = policy.encode(in, nullptr);
  for (Modality m : {V, A, T}) {
    EXPECT_EQ(feats[static_cast<int>(m)].rows(), 6);
    EXPECT_EQ(feats[static_cast<int>(m)].cols(), 64);
  }
}

TEST(EncoderTest, ShapeMismatchNamesModality) {
  nn::ParameterStore s;
  Encoder enc({"small", 64, 1, 64, 50}, s, "encoder.A");
  nn::FeatureMap wrong(1, 2, 64, 49);
  try {
    enc.forward(wrong, nullptr);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.A"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("1x64x50"), std::string::npos);
  }
}

// Straight-line forward of the small topology using the oracle layers.
std::vector<double> oracle_small_encoder(const nn::ParameterStore& s, const std::string& p,
                                         const oracle::Grid& x, int stem) {
  auto W = [&](const std::string& n) { return s.get(p + "." + n + ".weight").value; };
  auto B = [&](const std::string& n) { return s.get(p + "." + n + ".bias").value; };
  oracle::Grid h = oracle::relu(oracle::conv(x, W("stem"), B("stem"), stem, stem, 0));
  h = oracle::relu(oracle::conv(h, W("conv2"), B("conv2"), 3, 2, 1));
  h = oracle::relu(oracle::conv(h, W("conv3"), B("conv3"), 3, 2, 1));
  oracle::Grid r = oracle::relu(oracle::conv(h, W("block.conv1"), B("block.conv1"), 3, 1, 1));
  r = oracle::conv(r, W("block.conv2"), B("block.conv2"), 3, 1, 1);
  h = oracle::relu(oracle::add(r, h));
  std::vector<double> flat;
  for (const auto& c : h)
    for (const auto& row : c)
      for (double v : row) flat.push_back(v);
  const auto out = oracle::linear({flat}, W("head"), s.get(p + ".head.bias").value);
  return out[0];
}

TEST(EncoderTest, MatchesStraightLineOracle) {
  for (int channels : {3, 1}) {
    nn::ParameterStore s;
    const EncoderConfig cfg = channels == 3 ? EncoderConfig{"small", 64, 3, 96, 128}
                                            : EncoderConfig{"small", 64, 1, 64, 50};
    Encoder enc(cfg, s, "enc");
    Rng rng(3);
    enc.init(rng);
    for (bool zero : {true, false}) {
      nn::FeatureMap x(cfg.input_channels, 1, cfg.height, cfg.width);
      if (!zero) nn::init_normal(x.data, rng, 1.0);
      oracle::Grid g(cfg.input_channels,
                     std::vector<std::vector<double>>(cfg.height, std::vector<double>(cfg.width)));
      for (int c = 0; c < cfg.input_channels; ++c)
        for (int i = 0; i < cfg.height; ++i)
          for (int j = 0; j < cfg.width; ++j) g[c][i][j] = x.data(c, i * cfg.width + j);
      const nn::Matrix y = enc.forward(x, nullptr);
      const auto ref = oracle_small_encoder(s, "enc", g, channels == 3 ? 4 : 2);
      for (int d = 0; d < 64; ++d) ASSERT_NEAR(y(0, d), ref[d], 1e-5 * std::max(1.0, std::abs(ref[d])));
    }
  }
}

TEST(EncoderTest, SlotsAreIndependentAndEquivariant) {
  nn::ParameterStore s;
  Encoder enc({"small", 64, 3, 96, 128}, s, "enc");
  Rng rng(4);
  enc.init(rng);
  nn::FeatureMap x(3, 6, 96, 128);
  nn::init_normal(x.data, rng, 1.0);
  const int plane = x.plane();
  // Slot 4 duplicates slot 1.
  x.data.middleCols(4 * plane, plane) = x.data.middleCols(1 * plane, plane);
  const nn::Matrix y = enc.forward(x, nullptr);
  // Equal up to GEMM blocking, which depends on the column position.
  EXPECT_TRUE(y.row(4).isApprox(y.row(1), 1e-6f));
  // Swapping slots 0 and 5 swaps their embeddings.
  nn::FeatureMap swapped = x;
  swapped.data.middleCols(0, plane) = x.data.middleCols(5 * plane, plane);
  swapped.data.middleCols(5 * plane, plane) = x.data.middleCols(0, plane);
  const nn::Matrix z = enc.forward(swapped, nullptr);
  EXPECT_TRUE(z.row(0).isApprox(y.row(5), 1e-6f));
  EXPECT_TRUE(z.row(5).isApprox(y.row(0), 1e-6f));
  EXPECT_TRUE(z.row(2).isApprox(y.row(2), 1e-6f));
}

TEST(EncoderTest, PaperResnet18Builds) {
  nn::ParameterStore s;
  Encoder enc({"paper_resnet18", 512, 1, 64, 50}, s, "enc");
  Rng rng(5);
  enc.init(rng);
  nn::FeatureMap x(1, 2, 64, 50);
  nn::init_normal(x.data, rng, 1.0);
  const nn::Matrix y = enc.forward(x, nullptr);
  EXPECT_EQ(y.rows(), 2);
  EXPECT_EQ(y.cols(), 512);
  EXPECT_TRUE(y.allFinite());
  // 11.2M parameters without the final classifier and with a 1-channel stem.
  EXPECT_GT(s.scalar_count(), 11'000'000u);
}

TEST(TokenTest, CountsFollowActiveModalities) {
  Rng rng(6);
  for (auto [mods, expected] : std::vector<std::pair<std::vector<Modality>, int>>{
           {{V, A, T}, 18}, {{V, T}, 12}, {{V}, 6}, {{A, T}, 12}}) {
    auto cfg = PolicyConfig::make(Task::kPacking, "small", FusionVariant::kMulsa, mods);
    Policy p(cfg);
    p.init(1);
    const auto in = random_input(cfg, 2, rng);
    EXPECT_EQ(p.build_tokens(p.encode(in, nullptr), 2).rows(), 2 * expected);
    EXPECT_EQ(cfg.fusion.token_count(), expected);
  }
}

TEST(TokenTest, AblationKeepsRemainingTokensBitIdentical) {
  Rng rng(7);
  const auto full_cfg = PolicyConfig::make(Task::kPacking);
  Policy full(full_cfg);
  full.init(11);
  auto vt_cfg = PolicyConfig::make(Task::kPacking, "small", FusionVariant::kMulsa, {V, T});
  Policy vt(vt_cfg);
  vt.init(12);
  copy_matching(full, vt);
  const auto in = random_input(full_cfg, 2, rng);
  const nn::Matrix a = full.build_tokens(full.encode(in, nullptr), 2);
  const nn::Matrix b = vt.build_tokens(vt.encode(in, nullptr), 2);
  for (int s = 0; s < 2; ++s) {
    EXPECT_EQ(b.middleRows(s * 12, 6), a.middleRows(s * 18, 6));
    EXPECT_EQ(b.middleRows(s * 12 + 6, 6), a.middleRows(s * 18 + 12, 6));
  }
}

TEST(TokenTest, ModalityCountMismatchIsConfigError) {
  const auto cfg = PolicyConfig::make(Task::kPacking);
  Policy p(cfg);
  ModalityFeatures f;
  f[0] = nn::Matrix::Zero(6, 64);
  f[1] = nn::Matrix::Zero(5, 64);
  f[2] = nn::Matrix::Zero(6, 64);
  EXPECT_THROW(p.build_tokens(f, 1), ConfigError);
}

TEST(AttentionTraceTest, PolicyAttentionMatchesOracleAndIsStochastic) {
  Rng rng(8);
  auto cfg = PolicyConfig::make(Task::kPouring);
  cfg.fusion.layers = 2;
  Policy p(cfg);
  p.init(3);
  const auto in = random_input(cfg, 2, rng);
  const nn::Matrix tokens = p.build_tokens(p.encode(in, nullptr), 2);
  std::vector<AttentionTrace> traces;
  const nn::Matrix out = p.self_attention(tokens, nullptr, &traces);
  ASSERT_EQ(traces.size(), 2u);
  for (int s = 0; s < 2; ++s) {
    oracle::Rows rows(18, std::vector<double>(64));
    for (int i = 0; i < 18; ++i)
      for (int c = 0; c < 64; ++c) rows[i][c] = tokens(s * 18 + i, c);
    std::vector<oracle::Rows> weights;
    rows = oracle::transformer_layer(rows, p.parameters(), "fusion.layer0", 8, &weights);
    rows = oracle::transformer_layer(rows, p.parameters(), "fusion.layer1", 8, &weights);
    for (int i = 0; i < 18; ++i)
      for (int c = 0; c < 64; ++c) ASSERT_NEAR(out(s * 18 + i, c), rows[i][c], 1e-4);
    const auto& tr = traces[s];
    ASSERT_EQ(tr.weights.size(), 16u);
    for (int k = 0; k < 16; ++k) {
      for (int i = 0; i < 18; ++i) {
        EXPECT_NEAR(tr.weights[k].row(i).sum(), 1.0f, 1e-5f);
        for (int j = 0; j < 18; ++j) ASSERT_NEAR(tr.weights[k](i, j), weights[k][i][j], 1e-5);
      }
    }
  }
}

TEST(AggregateTest, FlatLoopOracle) {
  Rng rng(9);
  AttentionTrace tr;
  tr.layers = 2;
  tr.heads = 3;
  tr.tokens = 18;
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 6; ++n) {
      tr.token_modality.push_back(static_cast<Modality>(m));
      tr.token_slot.push_back(n);
    }
  for (int k = 0; k < 6; ++k) {
    nn::Matrix w(18, 18);
    nn::init_normal(w, rng, 1.0);
    tr.weights.push_back(nn::softmax_rows(w));
  }
  double ref[3] = {0, 0, 0};
  int count = 0;
  for (const auto& w : tr.weights)
    for (int i = 0; i < 18; ++i, ++count)
      for (int j = 0; j < 18; ++j) ref[j / 6] += w(i, j);
  const auto s = aggregate_modality_attention(tr);
  for (int m = 0; m < 3; ++m) EXPECT_NEAR(s[m], ref[m] / count, 1e-6);
  EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-5);
}

TEST(AggregateTest, UniformAndOneHotAndEmpty) {
  AttentionTrace tr;
  tr.layers = 1;
  tr.heads = 1;
  tr.tokens = 18;
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 6; ++n) tr.token_modality.push_back(static_cast<Modality>(m));
  tr.weights = {nn::Matrix::Constant(18, 18, 1.0f / 18.0f)};
  auto s = aggregate_modality_attention(tr);
  for (double v : s) EXPECT_NEAR(v, 1.0 / 3.0, 1e-6);
  nn::Matrix onehot = nn::Matrix::Zero(18, 18);
  onehot.col(0).setOnes();
  tr.weights = {onehot};
  s = aggregate_modality_attention(tr);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_DOUBLE_EQ(s[2], 0.0);
  tr.weights.clear();
  EXPECT_THROW(aggregate_modality_attention(tr), NotAvailableError);
}

TEST(AttentionTest, PermutationEquivariantWithoutEmbeddings) {
  Rng rng(10);
  auto cfg = PolicyConfig::make(Task::kPacking);
  cfg.fusion.use_positional_embeddings = false;
  Policy p(cfg);
  p.init(4);
  nn::Matrix tokens(18, 64);
  nn::init_normal(tokens, rng, 1.0);
  nn::Matrix swapped = tokens;
  swapped.row(1) = tokens.row(4);
  swapped.row(4) = tokens.row(1);
  const nn::Matrix a = p.self_attention(tokens, nullptr, nullptr);
  const nn::Matrix b = p.self_attention(swapped, nullptr, nullptr);
  EXPECT_TRUE(b.row(1).isApprox(a.row(4), 1e-5f));
  EXPECT_TRUE(b.row(4).isApprox(a.row(1), 1e-5f));
  EXPECT_TRUE(b.row(10).isApprox(a.row(10), 1e-5f));
}

TEST(HeadTest, ClassCountsAndTieRule) {
  Rng rng(11);
  for (Task task : {Task::kPacking, Task::kPouring}) {
    const auto cfg = PolicyConfig::make(task);
    Policy p(cfg);
    p.init(5);
    p.parameters().get("head.out.weight").value.setZero();
    p.parameters().get("head.out.bias").value.setZero();
    const auto out = p.forward(random_input(cfg, 3, rng));
    EXPECT_EQ(out.logits.cols(), task == Task::kPacking ? 27 : 9);
    for (int b = 0; b < 3; ++b) {
      EXPECT_EQ(out.actions[b], 0);
      EXPECT_EQ(out.logits.row(b).maxCoeff(), out.logits.row(b).minCoeff());
    }
  }
}

TEST(HeadTest, InitialLossNearLogClassCount) {
  Rng rng(12);
  const auto cfg = PolicyConfig::make(Task::kPacking);
  Policy p(cfg);
  p.init(6);
  const auto out = p.forward(random_input(cfg, 8, rng));
  const double loss = nn::cross_entropy(out.logits, {0, 3, 7, 13, 13, 20, 26, 1}, nullptr);
  EXPECT_NEAR(loss, std::log(27.0), 0.3);
}

TEST(VariantTest, DirectConcatInputWidths) {
  auto full = PolicyConfig::make(Task::kPacking, "small", FusionVariant::kDirectConcat);
  Policy p(full);
  EXPECT_EQ(p.parameters().get("head.fc0.weight").value.rows(), 18 * 64);
  auto vonly = PolicyConfig::make(Task::kPacking, "small", FusionVariant::kDirectConcat, {V});
  Policy q(vonly);
  EXPECT_EQ(q.parameters().get("head.fc0.weight").value.rows(), 6 * 64);
  EXPECT_FALSE(q.parameters().contains("fusion.modality_embedding"));
  Rng rng(13);
  q.init(1);
  const auto out = q.forward(random_input(vonly, 2, rng), nullptr, true);
  EXPECT_TRUE(out.traces.empty());
}

// With one token, value/output projections set to identity, a zero feed-forward
// branch and already-normalized rows, the attention block is the identity, so
// mulsa and direct_concat agree given identical heads.
TEST(VariantTest, SingleTokenIdentityAttentionEqualsDirectConcat) {
  auto mcfg = PolicyConfig::make(Task::kPacking, "small", FusionVariant::kMulsa, {V});
  mcfg.fusion.slots = 1;
  mcfg.fusion.use_positional_embeddings = false;
  auto dcfg = mcfg;
  dcfg.fusion.variant = FusionVariant::kDirectConcat;
  Policy m(mcfg), d(dcfg);
  m.init(7);
  d.init(8);
  copy_matching(m, d);
  auto& ps = m.parameters();
  ps.get("fusion.layer0.attn.v.weight").value.setIdentity();
  ps.get("fusion.layer0.attn.o.weight").value.setIdentity();
  ps.get("fusion.layer0.ff2.weight").value.setZero();
  Rng rng(14);
  nn::Matrix tok(3, 64);
  nn::init_normal(tok, rng, 1.0);
  for (int r = 0; r < 3; ++r) {
    tok.row(r).array() -= tok.row(r).mean();
    tok.row(r) /= std::sqrt(tok.row(r).squaredNorm() / 64.0f);
  }
  const nn::Matrix attended = m.self_attention(tok, nullptr, nullptr);
  EXPECT_TRUE(attended.isApprox(tok, 1e-4f));
  EXPECT_TRUE(m.classify(attended, nullptr).isApprox(d.classify(tok, nullptr), 1e-4f));
}

TEST(VariantTest, RecurrentShapesAndSingleStep) {
  Rng rng(15);
  for (Task task : {Task::kPacking, Task::kPouring}) {
    auto cfg = PolicyConfig::make(task, "small", FusionVariant::kRecurrent);
    Policy p(cfg);
    p.init(2);
    EXPECT_EQ(p.parameters().get("fusion.lstm.wh").value.rows(), 64);
    EXPECT_EQ(p.forward(random_input(cfg, 2, rng)).logits.cols(), task == Task::kPacking ? 27 : 9);
  }
  auto one = PolicyConfig::make(Task::kPacking, "small", FusionVariant::kRecurrent);
  one.fusion.slots = 1;
  Policy p(one);
  p.init(3);
  EXPECT_EQ(p.forward(random_input(one, 1, rng)).logits.cols(), 27);
}

TEST(VariantTest, ContractiveLstmConvergesOnConstantInput) {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    nn::ParameterStore s;
    nn::Lstm l(s, "l", 8, 8);
    for (auto* p : s.all()) nn::init_uniform(p->value, rng, 0.1);
    nn::Matrix x(1, 8);
    nn::init_normal(x, rng, 1.0);
    const auto hs = l.forward(std::vector<nn::Matrix>(30, x), nullptr);
    double prev = 1e300;
    for (std::size_t t = 1; t < hs.size(); ++t) {
      const double diff = (hs[t] - hs[t - 1]).norm();
      EXPECT_LE(diff, prev + 1e-7) << "seed " << seed << " step " << t;
      prev = diff;
    }
  }
}

TEST(GradientTest, EndToEndSmallModelMatchesFiniteDifferences) {
  for (FusionVariant v : {FusionVariant::kMulsa, FusionVariant::kDirectConcat, FusionVariant::kRecurrent}) {
    const auto cfg = PolicyConfig::make(Task::kPouring, "small", v);
    Policy p(cfg);
    p.init(21);
    Rng rng(22);
    nn::init_normal(p.parameters().get("head.out.weight").value, rng, 0.3);
    const auto in = random_input(cfg, 1, rng);
    const auto res = testing::check_policy_gradients(p, in, {4}, 60, 1e-3f, rng);
    EXPECT_LT(res.vector_relative_error, 1e-2) << to_string(v);
  }
}

TEST(ConfigTest, JsonRoundTripAndValidation) {
  auto cfg = PolicyConfig::make(Task::kPouring, "small", FusionVariant::kRecurrent, {A, T});
  const nlohmann::json j = cfg;
  EXPECT_EQ(j.get<PolicyConfig>(), cfg);
  EXPECT_EQ(parse_modalities("V+A+T").size(), 3u);
  EXPECT_EQ(parse_modalities("VT"), (std::vector<Modality>{V, T}));
  EXPECT_EQ(parse_modalities("T,V"), (std::vector<Modality>{V, T}));
  EXPECT_THROW(parse_modalities(""), ConfigError);
  cfg.fusion.variant = FusionVariant::kMulsa;
  cfg.fusion.heads = 5;
  EXPECT_THROW(cfg.fusion.validate(), ConfigError);
}

TEST(PreprocessTest, CropShapesAndSharedOffset) {
  ObservationWindow w;
  for (int i = 0; i < 6; ++i) {
    Image v(240, 320, 3), t(300, 400, 3);
    for (std::size_t k = 0; k < v.pixels.size(); ++k) v.pixels[k] = static_cast<std::uint8_t>(k * 7 + i);
    for (std::size_t k = 0; k < t.pixels.size(); ++k) t.pixels[k] = static_cast<std::uint8_t>(k * 3 + i);
    w.visual.push_back(v);
    w.tactile.push_back(t);
    w.slot_end_times.push_back(i * 0.5);
  }
  Rng rng(16);
  CropOffset off;
  const auto out = augment(w, AugmentMode::kTrain, &rng, {}, &off);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(out.visual[i].height, 96);
    EXPECT_EQ(out.visual[i].width, 128);
    EXPECT_EQ(out.visual[i], crop(area_resize(w.visual[i], 105, 140), off.top, off.left, 96, 128));
    EXPECT_EQ(out.tactile[i], crop(area_resize(w.tactile[i], 105, 140), off.top, off.left, 96, 128));
  }
  const auto e1 = augment(w, AugmentMode::kEval, nullptr);
  const auto e2 = augment(w, AugmentMode::kEval, nullptr);
  EXPECT_EQ(e1.visual, e2.visual);
  EXPECT_EQ(center_crop_offset({}), (CropOffset{4, 6}));
}

TEST(PreprocessTest, CropOffsetsUniformOverGrid) {
  Rng rng(17);
  PreprocessConfig c;
  std::vector<int> counts(13 * 10, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto o = random_crop_offset(c, rng);
    ASSERT_GE(o.left, 0);
    ASSERT_LE(o.left, 12);
    ASSERT_GE(o.top, 0);
    ASSERT_LE(o.top, 9);
    ++counts[o.top * 13 + o.left];
  }
  const double expected = static_cast<double>(draws) / counts.size();
  double chi2 = 0.0;
  for (int n : counts) chi2 += (n - expected) * (n - expected) / expected;
  // 129 degrees of freedom; the 0.999 quantile is about 181.
  EXPECT_LT(chi2, 181.0);
}

TEST(PreprocessTest, PixelAndMelNormalization) {
  nn::FeatureMap m(3, 1, 2, 2);
  Image img(2, 2, 3, 255);
  img.at(0, 0)[1] = 0;
  write_image(img, m, 0, PreprocessConfig{.crop_height = 2, .crop_width = 2});
  EXPECT_FLOAT_EQ(m.data(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(m.data(1, 0), -2.0f);
  nn::FeatureMap a(1, 1, 2, 2);
  const float mel[4] = {1, 2, 3, 4};
  write_mel(mel, 2, 2, a, 0, {2.0, 0.5});
  EXPECT_FLOAT_EQ(a.data(0, 3), 4.0f);
}

}  // namespace
}  // namespace mulsa::model
