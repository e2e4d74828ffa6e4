#include <gtest/gtest.h>

#include "robosig/corpus.hpp"
#include "robosig/tar.hpp"
#include "support.hpp"

using namespace robosig;
using robosig::testing::check_param_gradients;

namespace {

// 16-pixel images keep every decoder pass cheap.
const Substrate& tiny_substrate() {
  static const Substrate s = make_substrate(init_autoencoder<float>(1), init_extractor<float>(48, 2),
                                            synthetic_corpus<float>(12, 16, 0), synthetic_corpus<float>(4, 16, 500));
  return s;
}

Checkpoint tiny_victim(const MessageKey& key, long steps = 5) {
  SignatureConfig cfg;
  cfg.target_key = key;
  cfg.steps = steps;
  cfg.lr = 1e-3;
  return run_signature(tiny_substrate(), cfg);
}

TarConfig tiny_tar() {
  TarConfig cfg;
  cfg.outer_steps = 2;
  cfg.inner_attacks = 2;
  cfg.attack_steps = 2;
  cfg.eta = 1e-3;
  return cfg;
}

}  // namespace

TEST(DecoderObjective, GradientMatchesFiniteDifferences) {
  const auto s = tiny_substrate();
  const auto dec = s.original_decoder().cast<double>();
  const auto ext = s.extractor.cast<double>();
  const auto z = slice_items(s.train.latents, 0, 4).cast<double>();
  auto perturbed = dec;
  for (auto& e : perturbed.entries())
    for (std::size_t i = 0; i < e.value.size(); i += 3) e.value[i] *= 1.05;
  HiddenStates<double> hidden;
  const auto reference = decode(perturbed, z, &hidden);
  const auto key = random_key(48, 3);

  DecoderObjective<double> obj;
  obj.key = &key;
  obj.reference = &reference;
  obj.lambda_i = 8.0;
  obj.hidden_reference = &hidden;
  obj.lambda_hidden = 0.5;
  const auto r = decoder_objective(dec, ext, z, obj);
  ASSERT_TRUE(r.losses.finite());
  EXPECT_GT(r.losses.hidden, 0.0);
  auto loss = [&](const ParamSet<double>& p) { return decoder_objective(p, ext, z, obj).losses.total; };
  check_param_gradients(dec, r.grads, loss, 3, 11);
}

TEST(DecoderObjective, HiddenTermAloneMatchesFiniteDifferences) {
  const auto s = tiny_substrate();
  const auto dec = s.original_decoder().cast<double>();
  const auto z = slice_items(s.train.latents, 0, 2).cast<double>();
  auto other = dec;
  other.get("dec.up2.weight")[5] += 0.3;
  HiddenStates<double> hidden;
  decode(other, z, &hidden);
  DecoderObjective<double> obj;
  obj.hidden_reference = &hidden;
  obj.lambda_hidden = 1.0;
  const auto r = decoder_objective(dec, s.extractor.cast<double>(), z, obj);
  auto loss = [&](const ParamSet<double>& p) { return decoder_objective(p, s.extractor.cast<double>(), z, obj).losses.total; };
  check_param_gradients(dec, r.grads, loss, 2, 12);
}

TEST(DecoderObjective, ReferenceTermsVanishAtTheReference) {
  const auto& s = tiny_substrate();
  const auto dec = s.original_decoder();
  const auto z = slice_items(s.train.latents, 0, 4);
  HiddenStates<float> hidden;
  const auto reference = decode(dec, z, &hidden);
  DecoderObjective<float> obj;
  obj.reference = &reference;
  obj.lambda_i = 8.0;
  obj.hidden_reference = &hidden;
  obj.lambda_hidden = 1.0;
  const auto r = decoder_objective(dec, s.extractor, z, obj);
  EXPECT_EQ(r.losses.image, 0.0);
  EXPECT_EQ(r.losses.hidden, 0.0);
  EXPECT_EQ(r.losses.message, 0.0);
}

TEST(DecoderObjective, SaturatedCorrectLogitsLeaveNothingToLearn) {
  const auto& s = tiny_substrate();
  const auto key = random_key(48, 13);
  auto ext = s.extractor;
  ext.get("ext.fc.weight").fill(0.0f);
  for (std::size_t i = 0; i < 48; ++i) ext.get("ext.fc.bias")[i] = key[i] ? 60.0f : -60.0f;
  const auto dec = s.original_decoder();
  const auto z = slice_items(s.train.latents, 0, 4);
  HiddenStates<float> hidden;
  const auto reference = decode(dec, z, &hidden);
  DecoderObjective<float> obj;
  obj.key = &key;
  obj.reference = &reference;
  obj.lambda_i = 0.0;
  obj.hidden_reference = &hidden;
  obj.lambda_hidden = 1.0;
  const auto r = decoder_objective(dec, ext, z, obj);
  EXPECT_LT(r.losses.message, 1e-20);
  EXPECT_LT(squared_norm(r.grads), 1e-20);
}

TEST(Signature, OnlyTheDecoderMoves) {
  const auto& s = tiny_substrate();
  const auto ae_before = s.autoencoder;
  const auto ext_before = s.extractor;
  const auto key = random_key(48, 5);
  const auto cp = tiny_victim(key);
  EXPECT_EQ(s.autoencoder, ae_before);
  EXPECT_EQ(s.extractor, ext_before);
  EXPECT_TRUE(cp.params.combinable(s.original_decoder()));
  EXPECT_NE(cp.params, s.original_decoder());
  EXPECT_EQ(cp.manifest.phase, "signature");
  EXPECT_EQ(cp.manifest.key, key);
}

TEST(Signature, RejectsKeyOfTheWrongLength) {
  SignatureConfig cfg;
  cfg.target_key = random_key(32, 1);
  EXPECT_THROW(run_signature(tiny_substrate(), cfg), ContractViolation);
}

TEST(Signature, LoggedLossFallsOverARun) {
  const auto& s = tiny_substrate();
  SignatureConfig cfg;
  cfg.target_key = random_key(48, 6);
  cfg.steps = 40;
  cfg.lr = 1e-3;
  cfg.log_every = 10;
  std::vector<double> totals;
  run_signature(s, cfg, [&](long, const ParamSet<float>&, const LossTerms& l) { totals.push_back(l.total); });
  ASSERT_EQ(totals.size(), 4u);
  EXPECT_LT(totals.back(), totals.front());
}

TEST(Attacks, ZeroStepsReturnTheVictim) {
  const auto victim = tiny_victim(random_key(48, 7));
  for (auto kind : {AttackKind::random_key, AttackKind::gradual_random_key, AttackKind::purification}) {
    AttackConfig cfg;
    cfg.kind = kind;
    cfg.steps = 0;
    const auto out = run_attack(victim, tiny_substrate(), cfg);
    EXPECT_EQ(out.params, victim.params) << to_string(kind);
    EXPECT_EQ(out.manifest.phase, attack_phase(kind));
  }
}

TEST(Attacks, SeededAttacksRepeatExactly) {
  const auto victim = tiny_victim(random_key(48, 8));
  AttackConfig cfg;
  cfg.steps = 4;
  const auto a = run_attack(victim, tiny_substrate(), cfg);
  const auto b = run_attack(victim, tiny_substrate(), cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params, victim.params);
  cfg.seed += 1;
  EXPECT_NE(run_attack(victim, tiny_substrate(), cfg).params, a.params);
}

TEST(Attacks, NeverTouchEncoderOrExtractor) {
  const auto& s = tiny_substrate();
  const auto ae = s.autoencoder;
  const auto ext = s.extractor;
  const auto victim = tiny_victim(random_key(48, 9));
  for (auto kind : {AttackKind::random_key, AttackKind::gradual_random_key, AttackKind::purification}) {
    AttackConfig cfg;
    cfg.kind = kind;
    cfg.steps = 2;
    const auto out = run_attack(victim, s, cfg);
    EXPECT_TRUE(out.params.combinable(victim.params));
  }
  EXPECT_EQ(s.autoencoder, ae);
  EXPECT_EQ(s.extractor, ext);
}

TEST(Attacks, RandomScheduleDrawsFreshKeys) {
  const auto schedule = random_key_schedule(48, 3);
  EXPECT_NE(*schedule(1), *schedule(2));
  EXPECT_EQ(*schedule(5), *random_key_schedule(48, 3)(5));
}

TEST(Attacks, GradualScheduleStartsOneBitAway) {
  const auto base = random_key(48, 10);
  const auto schedule = gradual_key_schedule(base, 100, 11);
  EXPECT_EQ(hamming_distance(base, *schedule(1)), 1u);
  EXPECT_EQ(hamming_distance(base, *schedule(50)), 24u);
}

TEST(Attacks, GradualNeedsTheRootedKey) {
  auto victim = tiny_victim(random_key(48, 11));
  victim.manifest.key.reset();
  AttackConfig cfg;
  cfg.kind = AttackKind::gradual_random_key;
  cfg.steps = 2;
  EXPECT_THROW(run_attack(victim, tiny_substrate(), cfg), ContractViolation);
}

TEST(Attacks, PurificationDropsTheMessageTerm) {
  const auto victim = tiny_victim(random_key(48, 12));
  AttackConfig cfg;
  cfg.kind = AttackKind::purification;
  cfg.steps = 3;
  cfg.log_every = 1;
  run_attack(victim, tiny_substrate(), cfg, [&](long, const ParamSet<float>&, const LossTerms& l) {
    EXPECT_EQ(l.message, 0.0);
    EXPECT_GT(l.image, 0.0);
  });
}

TEST(Collusion, IdentitiesAndErrors) {
  const auto a = tiny_victim(random_key(48, 13), 3);
  const auto b = tiny_victim(random_key(48, 14), 3);
  EXPECT_EQ(collusion_attack({a, a}).params, a.params);
  EXPECT_EQ(collusion_attack({a, b}).params, collusion_attack({b, a}).params);
  EXPECT_FALSE(collusion_attack({a, b}).manifest.key.has_value());
  EXPECT_THROW(collusion_attack({a}), ContractViolation);
  Checkpoint wrong{init_extractor<float>(48, 1), {}};
  EXPECT_THROW(collusion_attack({a, wrong}), ContractViolation);
}

TEST(Tar, ContextSplitsAreDisjointHalves) {
  const auto victim = tiny_victim(random_key(48, 15));
  const auto ctx = make_tar_context(tiny_substrate(), victim, tiny_tar());
  EXPECT_EQ(ctx.retain_latents.dim(0), 6u);
  EXPECT_EQ(ctx.tr_latents.dim(0), 6u);
  EXPECT_EQ(ctx.retain_latents, slice_items(tiny_substrate().train.latents, 0, 6));
  EXPECT_EQ(ctx.tr_latents, slice_items(tiny_substrate().train.latents, 6, 6));
}

TEST(Tar, ZeroAttackStepsGivePlainGradient) {
  const auto victim = tiny_victim(random_key(48, 16));
  auto cfg = tiny_tar();
  cfg.attack_steps = 0;
  const auto ctx = make_tar_context(tiny_substrate(), victim, cfg);
  auto theta = victim.params;
  theta.get("dec.up1.bias")[0] += 0.2f;
  const std::vector<std::size_t> idx{0, 2, 3, 5};
  const auto batch = ctx.batch(ctx.tr_latents, idx);
  const std::vector<std::uint64_t> seeds{99};
  const auto g = tamper_resistance_gradient(theta, ctx, batch, cfg, seeds);
  DecoderObjective<float> obj;
  obj.key = &ctx.target_key;
  obj.reference = &batch.reference;
  obj.lambda_i = cfg.lambda_i;
  const auto plain = decoder_objective(theta, ctx.extractor, batch.latents, obj);
  EXPECT_EQ(g.grad, plain.grads);
  EXPECT_EQ(g.succeeded, 1);
}

TEST(Tar, DuplicatedSeedsLeaveTheAverageUnchanged) {
  const auto victim = tiny_victim(random_key(48, 17));
  const auto cfg = tiny_tar();
  const auto ctx = make_tar_context(tiny_substrate(), victim, cfg);
  const std::vector<std::size_t> idx{1, 4};
  const auto batch = ctx.batch(ctx.tr_latents, idx);
  const std::vector<std::uint64_t> once{5, 6}, twice{5, 6, 5, 6};
  const auto a = tamper_resistance_gradient(victim.params, ctx, batch, cfg, once);
  const auto b = tamper_resistance_gradient(victim.params, ctx, batch, cfg, twice);
  EXPECT_LT(max_abs_difference(a.grad, b.grad), 1e-7);
}

TEST(Tar, InnerAttacksLeaveThetaAlone) {
  const auto victim = tiny_victim(random_key(48, 18));
  auto cfg = tiny_tar();
  cfg.workers = 2;
  const auto ctx = make_tar_context(tiny_substrate(), victim, cfg);
  const auto theta = victim.params;
  const auto copy = theta;
  const std::vector<std::size_t> idx{0, 1};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto threaded = tamper_resistance_gradient(theta, ctx, ctx.batch(ctx.tr_latents, idx), cfg, seeds);
  EXPECT_EQ(theta, copy);
  cfg.workers = 1;
  const auto serial = tamper_resistance_gradient(theta, ctx, ctx.batch(ctx.tr_latents, idx), cfg, seeds);
  EXPECT_EQ(threaded.grad, serial.grad);
}

TEST(Tar, RetainHiddenTermIsZeroAtTheSignatureDecoder) {
  const auto victim = tiny_victim(random_key(48, 19));
  const auto ctx = make_tar_context(tiny_substrate(), victim, tiny_tar());
  const std::vector<std::size_t> idx{0, 1, 2};
  const auto r = retain_gradient(victim.params, ctx, ctx.batch(ctx.retain_latents, idx), tiny_tar());
  EXPECT_EQ(r.losses.hidden, 0.0);
  EXPECT_EQ(r.losses.image, 0.0);
}

TEST(Tar, UpdateRuleIsLinear) {
  const auto victim = tiny_victim(random_key(48, 20), 2);
  auto g1 = victim.params, g2 = victim.params;
  g1.scale(0.5f);
  g2.scale(-0.25f);
  auto a = victim.params, b = victim.params;
  tar_update(a, &g1, g2, 0.02, 1.0, 1.0);
  tar_update(b, &g1, g2, 0.04, 0.5, 0.5);
  EXPECT_EQ(a, b);
  auto c = victim.params;
  tar_update(c, nullptr, g2, 0.02, 1.0, 1.0);
  auto d = victim.params;
  auto zero = victim.params.zeros_like();
  tar_update(d, &zero, g2, 0.02, 1.0, 1.0);
  EXPECT_EQ(c, d);
}

TEST(Tar, WithoutTamperWeightItIsRetainOnlyFineTuning) {
  const auto& s = tiny_substrate();
  const auto victim = tiny_victim(random_key(48, 21));
  auto cfg = tiny_tar();
  cfg.lambda_tr = 0.0;
  cfg.outer_steps = 3;
  long observed = 0;
  const auto out = tar_finetune(victim, s, cfg, [&](const TarStepInfo& info, const ParamSet<float>&) {
    EXPECT_EQ(info.tr.total, 0.0);
    EXPECT_EQ(info.skipped_attacks, 0);
    ++observed;
  });
  EXPECT_EQ(observed, 3);

  const auto ctx = make_tar_context(s, victim, cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7a2));
  auto theta = victim.params;
  for (long step = 1; step <= cfg.outer_steps; ++step) {
    detail::sample_indices(ctx.tr_latents.dim(0), cfg.batch_size, rng);
    const auto r_idx = detail::sample_indices(ctx.retain_latents.dim(0), cfg.batch_size, rng);
    const auto g = retain_gradient(theta, ctx, ctx.batch(ctx.retain_latents, r_idx), cfg);
    tar_update(theta, nullptr, g.grads, cfg.eta, cfg.lambda_tr, cfg.lambda_retain);
  }
  EXPECT_EQ(out.params, theta);
  EXPECT_EQ(out.manifest.phase, "tar");
  EXPECT_EQ(out.manifest.key, victim.manifest.key);
}

TEST(Tar, SeededRunsRepeat) {
  const auto victim = tiny_victim(random_key(48, 22));
  const auto a = tar_finetune(victim, tiny_substrate(), tiny_tar());
  const auto b = tar_finetune(victim, tiny_substrate(), tiny_tar());
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params, victim.params);
}

TEST(Tar, RejectsBadConfigs) {
  const auto victim = tiny_victim(random_key(48, 23));
  auto cfg = tiny_tar();
  cfg.inner_attacks = 0;
  EXPECT_THROW(tar_finetune(victim, tiny_substrate(), cfg), ContractViolation);
  cfg = tiny_tar();
  cfg.lambda_tr = -1;
  EXPECT_THROW(tar_finetune(victim, tiny_substrate(), cfg), ContractViolation);
  auto keyless = victim;
  keyless.manifest.key.reset();
  EXPECT_THROW(tar_finetune(keyless, tiny_substrate(), tiny_tar()), ContractViolation);
}
