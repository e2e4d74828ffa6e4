#pragma once

// Tamper-resistant fine-tuning: attack-in-the-loop gradients (first order,
// taken at the attacked parameters) plus a retain objective.

#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "robosig/attacks.hpp"

namespace robosig {

struct TarConfig {
  long outer_steps = 20;
  long inner_attacks = 20;
  long attack_steps = 100;
  double eta = 1e-4;
  double lambda_tr = 1.0;
  double lambda_retain = 1.0;
  double lambda_i = kDefaultLambdaI;
  double lambda_hidden = 1.0;
  double retain_fraction = 0.5;
  std::size_t batch_size = 4;
  double attack_lr = kDefaultFinetuneLr;
  std::uint64_t seed = 21;
  unsigned workers = 1;
  long log_every = 1;
};

inline void validate(const TarConfig& cfg) {
  require(cfg.outer_steps >= 1 && cfg.inner_attacks >= 1 && cfg.attack_steps >= 0,
          "TAR needs outer_steps >= 1, inner_attacks >= 1 and attack_steps >= 0");
  require(cfg.lambda_tr >= 0 && cfg.lambda_retain >= 0, "TAR weights must be non-negative");
  require(cfg.retain_fraction > 0 && cfg.retain_fraction < 1, "retain_fraction must lie in (0, 1)");
  require(cfg.batch_size >= 1 && cfg.workers >= 1, "TAR needs batch_size >= 1 and workers >= 1");
}

// A batch of latents with the post-signature decoder's outputs and hidden
// states for them.
struct TarBatch {
  Tensor<float> latents;
  ImageBatch<float> reference;
  HiddenStates<float> hidden;
};

// Frozen inputs of one TAR run. D_retain and D_TR are disjoint slices of the
// training latents.
struct TarContext {
  ParamSet<float> extractor;
  ParamSet<float> signature_decoder;
  MessageKey target_key;
  Tensor<float> retain_latents;
  Tensor<float> tr_latents;

  TarBatch batch(const Tensor<float>& pool, std::span<const std::size_t> idx) const {
    TarBatch b;
    b.latents = gather_items(pool, idx);
    b.reference = decode(signature_decoder, b.latents, &b.hidden);
    return b;
  }
};

inline TarContext make_tar_context(const Substrate& s, const Checkpoint& victim, const TarConfig& cfg) {
  validate(cfg);
  require_decoder(victim.params);
  require(victim.manifest.key.has_value(), "TAR needs a signature-rooted victim with a key in its manifest");
  require(victim.manifest.key->size() == s.key_bits(), "victim key length does not match the extractor");
  const std::size_t n = s.train.size();
  const auto retain = static_cast<std::size_t>(static_cast<double>(n) * cfg.retain_fraction);
  require(retain >= 1 && retain < n, "TAR splits must both be non-empty");
  return {s.extractor, victim.params, *victim.manifest.key, slice_items(s.train.latents, 0, retain),
          slice_items(s.train.latents, retain, n - retain)};
}

struct TarGradient {
  ParamSet<float> grad;
  LossTerms mean;  // over successful inner attacks
  long succeeded = 0;
  long skipped = 0;
};

inline AttackConfig inner_attack_config(const TarConfig& cfg, std::uint64_t seed) {
  AttackConfig a;
  a.kind = AttackKind::random_key;
  a.steps = cfg.attack_steps;
  a.batch_size = cfg.batch_size;
  a.lr = cfg.attack_lr;
  a.lambda_i = cfg.lambda_i;
  a.seed = seed;
  a.log_every = cfg.attack_steps + 1;
  return a;
}

// One inner Random Key Attack per seed on a private copy of theta, then the
// gradient of L_TR at the attacked parameters, averaged over the attacks that
// did not diverge.
inline TarGradient tamper_resistance_gradient(const ParamSet<float>& theta, const TarContext& ctx,
                                              const TarBatch& x_tr, const TarConfig& cfg,
                                              std::span<const std::uint64_t> attack_seeds, long step = 0) {
  require(!attack_seeds.empty(), "tamper_resistance_gradient needs at least one inner attack");
  const auto attack_reference = decode_all(theta, ctx.tr_latents);
  struct Outcome {
    std::optional<ObjectiveResult<float>> result;
  };
  std::vector<Outcome> outcomes(attack_seeds.size());
  DecoderObjective<float> obj;
  obj.key = &ctx.target_key;
  obj.reference = &x_tr.reference;
  obj.lambda_i = cfg.lambda_i;

  auto run_one = [&](std::size_t i) {
    try {
      const auto attacked = random_key_attack(theta, ctx.extractor, ctx.tr_latents, attack_reference,
                                              inner_attack_config(cfg, attack_seeds[i]));
      auto r = decoder_objective(attacked, ctx.extractor, x_tr.latents, obj);
      if (r.losses.finite()) outcomes[i].result = std::move(r);
    } catch (const TrainingDiverged&) {
    }
  };
  const std::size_t workers = std::min<std::size_t>(cfg.workers, attack_seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < attack_seeds.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < attack_seeds.size(); i += workers) run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  TarGradient g{theta.zeros_like(), {}, 0, 0};
  for (const auto& o : outcomes) {
    if (!o.result) {
      ++g.skipped;
      continue;
    }
    ++g.succeeded;
    g.grad.axpy(1.0f, o.result->grads);
    g.mean.message += o.result->losses.message;
    g.mean.image += o.result->losses.image;
    g.mean.total += o.result->losses.total;
  }
  if (g.succeeded == 0) throw TrainingDiverged("every inner attack diverged", step);
  const double inv = 1.0 / static_cast<double>(g.succeeded);
  g.grad.scale(static_cast<float>(inv));
  g.mean.message *= inv;
  g.mean.image *= inv;
  g.mean.total *= inv;
  return g;
}

// Retain objective: L_m + lambda_i * L_i against the post-signature outputs
// plus the hidden-state term.
inline ObjectiveResult<float> retain_gradient(const ParamSet<float>& theta, const TarContext& ctx,
                                              const TarBatch& x_r, const TarConfig& cfg, long step = 0) {
  DecoderObjective<float> obj;
  obj.key = &ctx.target_key;
  obj.reference = &x_r.reference;
  obj.lambda_i = cfg.lambda_i;
  obj.hidden_reference = &x_r.hidden;
  obj.lambda_hidden = cfg.lambda_hidden;
  auto r = decoder_objective(theta, ctx.extractor, x_r.latents, obj);
  if (!r.losses.finite()) throw TrainingDiverged("retain loss is not finite", step);
  return r;
}

// theta -= eta * (lambda_tr * g_tr + lambda_retain * g_retain)
inline void tar_update(ParamSet<float>& theta, const ParamSet<float>* g_tr, const ParamSet<float>& g_retain,
                       double eta, double lambda_tr, double lambda_retain) {
  require(theta.combinable(g_retain) && (!g_tr || theta.combinable(*g_tr)), "TAR update shape mismatch");
  const auto e = static_cast<float>(eta);
  const auto a = static_cast<float>(lambda_tr), b = static_cast<float>(lambda_retain);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto& p = theta.entries()[i].value;
    const auto& r = g_retain.entries()[i].value;
    if (g_tr) {
      const auto& t = g_tr->entries()[i].value;
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= e * (a * t[j] + b * r[j]);
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= e * (b * r[j]);
    }
  }
}

struct TarStepInfo {
  long step = 0;
  LossTerms tr;
  LossTerms retain;
  long skipped_attacks = 0;
};

using TarObserver = std::function<void(const TarStepInfo&, const ParamSet<float>& theta)>;

inline std::vector<std::uint64_t> inner_attack_seeds(std::uint64_t seed, long outer_step, long count) {
  std::vector<std::uint64_t> seeds;
  for (long k = 1; k <= count; ++k)
    seeds.push_back(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(outer_step)),
                                static_cast<std::uint64_t>(k)));
  return seeds;
}

inline Checkpoint tar_finetune(const Checkpoint& victim, const Substrate& s, const TarConfig& cfg,
                               const TarObserver& observer = {}) {
  const TarContext ctx = make_tar_context(s, victim, cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7a2));
  ParamSet<float> theta = victim.params;
  for (long step = 1; step <= cfg.outer_steps; ++step) {
    TarStepInfo info;
    info.step = step;
    const auto tr_idx = detail::sample_indices(ctx.tr_latents.dim(0), cfg.batch_size, rng);
    const auto r_idx = detail::sample_indices(ctx.retain_latents.dim(0), cfg.batch_size, rng);
    std::optional<TarGradient> g_tr;
    if (cfg.lambda_tr > 0) {
      const auto x_tr = ctx.batch(ctx.tr_latents, tr_idx);
      const auto seeds = inner_attack_seeds(cfg.seed, step, cfg.inner_attacks);
      g_tr = tamper_resistance_gradient(theta, ctx, x_tr, cfg, seeds, step);
      info.tr = g_tr->mean;
      info.skipped_attacks = g_tr->skipped;
    }
    const auto x_r = ctx.batch(ctx.retain_latents, r_idx);
    const auto g_retain = retain_gradient(theta, ctx, x_r, cfg, step);
    info.retain = g_retain.losses;
    tar_update(theta, g_tr ? &g_tr->grad : nullptr, g_retain.grads, cfg.eta, cfg.lambda_tr, cfg.lambda_retain);
    if (!all_finite(theta)) throw TrainingDiverged("TAR parameters became non-finite", step);
    if (observer && (step % std::max(1L, cfg.log_every) == 0 || step == cfg.outer_steps)) observer(info, theta);
  }
  Checkpoint cp;
  cp.params = std::move(theta);
  cp.manifest.phase = "tar";
  cp.manifest.step = cfg.outer_steps;
  cp.manifest.key = victim.manifest.key;
  cp.manifest.rng_seed = cfg.seed;
  return cp;
}

}  // namespace robosig
