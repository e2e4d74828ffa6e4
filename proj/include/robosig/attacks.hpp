#pragma once

#include <optional>
#include <string>
#include <vector>

#include "robosig/signature.hpp"

namespace robosig {

enum class AttackKind { random_key, gradual_random_key, purification, collusion };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::random_key: return "random_key";
    case AttackKind::gradual_random_key: return "gradual_random_key";
    case AttackKind::purification: return "purification";
    case AttackKind::collusion: return "collusion";
  }
  return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
  for (auto k : {AttackKind::random_key, AttackKind::gradual_random_key, AttackKind::purification,
                 AttackKind::collusion})
    if (to_string(k) == s) return k;
  if (s == "random-key") return AttackKind::random_key;
  if (s == "gradual") return AttackKind::gradual_random_key;
  if (s == "purify") return AttackKind::purification;
  if (s == "collude") return AttackKind::collusion;
  throw ContractViolation("unknown attack kind '" + s + "'");
}

inline std::string attack_phase(AttackKind k) {
  switch (k) {
    case AttackKind::random_key: return "attack-random-key";
    case AttackKind::gradual_random_key: return "attack-gradual";
    case AttackKind::purification: return "attack-purify";
    case AttackKind::collusion: return "attack-collude";
  }
  return "attack";
}

struct AttackConfig {
  AttackKind kind = AttackKind::random_key;
  long steps = 100;
  std::size_t batch_size = 4;
  double lr = kDefaultFinetuneLr;
  double lambda_i = kDefaultLambdaI;
  std::uint64_t seed = 11;
  long log_every = 10;

  FinetuneSpec spec() const { return {steps, batch_size, lr, lambda_i, seed, log_every}; }
};

// Fresh uniform key every step.
inline KeySchedule random_key_schedule(std::size_t k, std::uint64_t seed) {
  return [k, seed](long step) {
    return std::optional<MessageKey>(random_key(k, derive_seed(seed, 0x4b00 + static_cast<std::uint64_t>(step))));
  };
}

inline KeySchedule gradual_key_schedule(const MessageKey& base, long total, std::uint64_t seed) {
  return [base, total, seed](long step) { return std::optional<MessageKey>(gradual_key(base, step, total, seed)); };
}

// Random Key Attack on raw decoder params. `reference` holds the victim's own
// outputs for `latents`.
inline ParamSet<float> random_key_attack(const ParamSet<float>& victim, const ParamSet<float>& extractor,
                                         const Tensor<float>& latents, const ImageBatch<float>& reference,
                                         const AttackConfig& cfg, const FinetuneObserver& observer = {}) {
  return finetune_decoder(victim, extractor, latents, reference,
                          random_key_schedule(extractor_key_bits(extractor), cfg.seed), cfg.spec(), observer);
}

namespace detail {

inline Checkpoint attacked_checkpoint(ParamSet<float> params, const Checkpoint& victim, const AttackConfig& cfg) {
  Checkpoint cp;
  cp.params = std::move(params);
  cp.manifest.phase = attack_phase(cfg.kind);
  cp.manifest.step = cfg.steps;
  cp.manifest.key = victim.manifest.key;
  cp.manifest.rng_seed = cfg.seed;
  return cp;
}

inline void require_victim(const Checkpoint& victim, const Substrate& s) {
  require_decoder(victim.params);
  require(victim.params.combinable(s.original_decoder()),
          "victim decoder does not match the substrate's decoder layout");
}

}  // namespace detail

// Fine-tuning attacks (random_key, gradual_random_key, purification) against a
// signature checkpoint. The manifest keeps the victim's rooted key.
inline Checkpoint run_attack(const Checkpoint& victim, const Substrate& s, const AttackConfig& cfg,
                             const FinetuneObserver& observer = {}) {
  require(cfg.kind != AttackKind::collusion, "collusion is a weight operation; use collusion_attack");
  require(cfg.steps >= 0, "attack steps must be >= 0");
  detail::require_victim(victim, s);
  const std::size_t k = s.key_bits();
  KeySchedule keys;
  ImageBatch<float> reference;
  switch (cfg.kind) {
    case AttackKind::random_key:
      keys = random_key_schedule(k, cfg.seed);
      break;
    case AttackKind::gradual_random_key:
      require(victim.manifest.key.has_value(), "gradual random key attack needs the victim's rooted key");
      require(victim.manifest.key->size() == k, "victim key length does not match the extractor");
      keys = gradual_key_schedule(*victim.manifest.key, cfg.steps, cfg.seed);
      break;
    default:
      break;
  }
  const bool purify = cfg.kind == AttackKind::purification;
  if (cfg.steps == 0) return detail::attacked_checkpoint(victim.params, victim, cfg);
  if (!purify) reference = decode_split(victim.params, s.train);
  auto params = finetune_decoder(victim.params, s.extractor, s.train.latents,
                                 purify ? s.train.original : reference, keys, cfg.spec(), observer);
  return detail::attacked_checkpoint(std::move(params), victim, cfg);
}

// Weight averaging of several rooted decoders. The result carries no key.
inline Checkpoint collusion_attack(const std::vector<Checkpoint>& victims) {
  require(victims.size() >= 2, "collusion needs at least two victims");
  std::vector<ParamSet<float>> params;
  for (const auto& v : victims) {
    require_decoder(v.params);
    params.push_back(v.params);
  }
  Checkpoint cp;
  cp.params = average_params(params);
  cp.manifest.phase = attack_phase(AttackKind::collusion);
  return cp;
}

}  // namespace robosig
