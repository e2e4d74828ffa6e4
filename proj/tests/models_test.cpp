#include <gtest/gtest.h>

#include "robosig/corpus.hpp"
#include "robosig/models.hpp"
#include "support.hpp"

using namespace robosig;
using robosig::testing::check_param_gradients;
using robosig::testing::gradients_agree;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0) {
  Tensor<double> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Autoencoder, ShapesAndDeterminism) {
  const auto ae = init_autoencoder<float>(1);
  const auto x = synthetic_corpus<float>(3, 64, 0);
  const auto z = encode(ae, x);
  EXPECT_EQ(z.shape(), (Shape{3, 4, 8, 8}));
  EXPECT_EQ(z, encode(ae, x));
  const auto dec = decoder_of(ae);
  EXPECT_EQ(dec.role(), ParamRole::decoder_only);
  const auto y = decode(dec, z);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y, decode(ae, z));
  EXPECT_NO_THROW(check_image_batch(y));
}

TEST(Autoencoder, DecodeShapeFollowsLatentSize) {
  const auto dec = decoder_of(init_autoencoder<double>(2));
  for (std::size_t side : {1u, 2u, 5u}) {
    const auto y = decode(dec, random_tensor({2, 4, side, side}, side));
    EXPECT_EQ(y.shape(), (Shape{2, 3, side * 8, side * 8}));
  }
  EXPECT_THROW(decode(dec, random_tensor({1, 3, 2, 2}, 1)), ContractViolation);
}

TEST(Autoencoder, OutputStaysInUnitRangeForWildParameters) {
  auto dec = decoder_of(init_autoencoder<double>(3));
  for (auto& e : dec.entries())
    for (auto& v : e.value.values()) v *= 25.0;
  const auto y = decode(dec, random_tensor({2, 4, 2, 2}, 3, 5.0));
  for (double v : y.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Autoencoder, HiddenStatesAreTheThreeUpBlocks) {
  const auto dec = decoder_of(init_autoencoder<double>(4));
  HiddenStates<double> h;
  decode(dec, random_tensor({2, 4, 2, 2}, 4), &h);
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(h[0].dim(2), 4u);
  EXPECT_EQ(h[1].dim(2), 8u);
  EXPECT_EQ(h[2].dim(2), 16u);
}

TEST(Autoencoder, DecoderGradientsMatchFiniteDifferences) {
  const auto dec = decoder_of(init_autoencoder<double>(5));
  const auto z = random_tensor({4, 4, 2, 2}, 5);
  const auto w = random_tensor({4, 3, 16, 16}, 6);
  HiddenStates<double> h;
  decode(dec, z, &h);
  std::vector<Tensor<double>> hw;
  for (std::size_t b = 0; b < h.size(); ++b) hw.push_back(random_tensor(h[b].shape(), 10 + b));

  auto loss = [&](const ParamSet<double>& p) {
    HiddenStates<double> hs;
    const auto y = decode(p, z, &hs);
    double s = dot(w, y);
    for (std::size_t b = 0; b < hs.size(); ++b) s += dot(hw[b], hs[b]);
    return s;
  };
  const auto pass = decode_forward(dec, z);
  const auto g = decode_backward(dec, pass, w, &hw, true);
  check_param_gradients(dec, g.params, loss, 3, 7);

  for (std::size_t i = 0; i < z.size(); i += 5) {
    auto up = z, down = z;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double numeric = (dot(w, decode(dec, up)) - dot(w, decode(dec, down))) / 2e-6;
    const auto g_img = decode_backward<double>(dec, pass, w, nullptr, true);
    EXPECT_TRUE(gradients_agree(g_img.latents[i], numeric)) << "latent " << i;
  }
}

TEST(Autoencoder, EncoderGradientsMatchFiniteDifferences) {
  const auto ae = init_autoencoder<double>(8);
  const auto x = synthetic_corpus<double>(2, 16, 8);
  const auto w = random_tensor(x.shape(), 9);
  auto loss = [&](const ParamSet<double>& p) { return dot(w, autoencode_forward(p, x).decoder.images); };
  const auto g = autoencode_backward(ae, autoencode_forward(ae, x), w);
  check_param_gradients(ae, g, loss, 3, 9);
}

TEST(Extractor, ShapeAndDeterminism) {
  const auto ext = init_extractor<float>(48, 1);
  const auto x = synthetic_corpus<float>(3, 64, 1);
  const auto logits = extract(ext, x);
  EXPECT_EQ(logits.shape(), (Shape{3, 48}));
  EXPECT_EQ(logits, extract(ext, x));
  EXPECT_EQ(extractor_key_bits(ext), 48u);
  EXPECT_EQ(soft_messages(logits).size(), 3u);
  EXPECT_THROW(extract(init_autoencoder<float>(1), x), ContractViolation);
}

TEST(Extractor, GradientsMatchFiniteDifferences) {
  const auto ext = init_extractor<double>(12, 2);
  const auto x = synthetic_corpus<double>(1, 16, 2);
  const auto w = random_tensor({1, 12}, 3);
  auto loss_p = [&](const ParamSet<double>& p) { return dot(w, extract(p, x)); };
  const auto pass = extract_forward(ext, x);
  const auto g = extract_backward(ext, pass, w, true);
  ASSERT_TRUE(g.params.has_value());
  check_param_gradients(ext, *g.params, loss_p, 3, 4);

  for (std::size_t i = 0; i < x.size(); i += 11) {
    auto up = x, down = x;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double numeric = (dot(w, extract(ext, up)) - dot(w, extract(ext, down))) / 2e-6;
    EXPECT_TRUE(gradients_agree(g.images[i], numeric)) << "pixel " << i;
  }
}

TEST(Embedder, ResidualShapeRangeAndDeterminism) {
  const auto emb = init_embedder<float>(48, 3);
  const auto x = synthetic_corpus<float>(2, 32, 3);
  const auto key = random_key(48, 3);
  const auto r = embed(emb, x, key);
  EXPECT_EQ(r.shape(), x.shape());
  EXPECT_EQ(r, embed(emb, x, key));
  for (float v : r.values()) EXPECT_LE(std::abs(v), 1.0f);
}

TEST(Embedder, FlippingOneKeyBitChangesTheResidual) {
  const auto emb = init_embedder<float>(48, 4);
  const auto x = synthetic_corpus<float>(1, 32, 4);
  const auto key = random_key(48, 4);
  auto bits = std::vector<std::uint8_t>(key.bits().begin(), key.bits().end());
  bits[17] ^= 1u;
  EXPECT_NE(embed(emb, x, key), embed(emb, x, MessageKey(bits)));
}

TEST(Embedder, GradientsMatchFiniteDifferences) {
  const auto emb = init_embedder<double>(6, 5);
  const auto x = synthetic_corpus<double>(2, 16, 5);
  const std::vector<MessageKey> keys{random_key(6, 1), random_key(6, 2)};
  const auto w = random_tensor(x.shape(), 6);
  auto loss = [&](const ParamSet<double>& p) { return dot(w, embed_forward(p, x, keys).residual); };
  const auto g = embed_backward(emb, embed_forward(emb, x, keys), w);
  check_param_gradients(emb, g, loss, 3, 6);
}

TEST(AverageParams, Identities) {
  const auto a = init_autoencoder<float>(1), b = init_autoencoder<float>(2), c = init_autoencoder<float>(3);
  EXPECT_EQ(average_params(std::vector{a}), a);
  EXPECT_EQ(average_params(std::vector{a, a}), a);
  auto neg = a;
  neg.scale(-1.0f);
  const auto cancelled = average_params(std::vector{a, neg});
  for (const auto& e : cancelled.entries())
    for (float v : e.value.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(average_params(std::vector{a, b}), average_params(std::vector{b, a}));
  EXPECT_LT(max_abs_difference(average_params(std::vector{a, b, c}), average_params(std::vector{c, a, b})), 1e-6);
  EXPECT_THROW(average_params(std::vector<ParamSet<float>>{}), ContractViolation);
  EXPECT_THROW(average_params(std::vector{a, init_extractor<float>(48, 1)}), ContractViolation);
}

TEST(ParamSets, CombinableAndCast) {
  const auto a = init_autoencoder<float>(1);
  EXPECT_TRUE(a.combinable(init_autoencoder<float>(9)));
  EXPECT_FALSE(a.combinable(decoder_of(a)));
  const auto d = a.cast<double>().cast<float>();
  EXPECT_EQ(d, a);
  auto z = a.zeros_like();
  EXPECT_DOUBLE_EQ(squared_norm(z), 0.0);
  EXPECT_THROW(z.add(a.entries().front().name, Tensor<float>({1})), ContractViolation);
}
