#pragma once

// Decoder-only fine-tuning. The objective here is shared by signature
// rooting, the fine-tuning attacks and TAR.

#include <cmath>
#include <functional>
#include <optional>
#include <random>

#include "robosig/checkpoint.hpp"
#include "robosig/evaluation.hpp"
#include "robosig/optim.hpp"
#include "robosig/pretrain.hpp"

namespace robosig {

inline constexpr double kDefaultLambdaI = 64.0;
inline constexpr double kDefaultFinetuneLr = 1e-3;

struct LossTerms {
  double message = 0.0;  // L_m, per-bit mean BCE
  double image = 0.0;    // L_i, pixel MSE against the reference
  double hidden = 0.0;   // mean squared hidden-state difference, summed over blocks
  double total = 0.0;

  bool finite() const { return std::isfinite(total); }
};

// Pieces left null contribute nothing.
template <typename T>
struct DecoderObjective {
  const MessageKey* key = nullptr;
  const ImageBatch<T>* reference = nullptr;
  double lambda_i = 0.0;
  const HiddenStates<T>* hidden_reference = nullptr;
  double lambda_hidden = 0.0;
};

template <typename T>
struct ObjectiveResult {
  LossTerms losses;
  ParamSet<T> grads;  // empty when the loss is not finite
};

// total = L_m + lambda_i * L_i + lambda_hidden * L_h, differentiated w.r.t. the
// decoder only. Extractor params are constants.
template <typename T>
ObjectiveResult<T> decoder_objective(const ParamSet<T>& decoder, const ParamSet<T>& extractor,
                                     const Tensor<T>& latents, const DecoderObjective<T>& obj) {
  ObjectiveResult<T> out;
  const auto pass = decode_forward(decoder, latents);
  const std::size_t n = latents.dim(0);
  auto bad = [&] {
    out.losses.total = std::numeric_limits<double>::quiet_NaN();
    return out;
  };
  if (!all_finite(pass.images)) return bad();
  Tensor<T> grad_images(pass.images.shape());

  if (obj.key) {
    const auto ext = extract_forward(extractor, pass.images);
    if (!all_finite(ext.logits)) return bad();
    const std::size_t k = obj.key->size();
    require(k == ext.logits.dim(1), "objective key length does not match the extractor");
    Tensor<T> grad_logits(ext.logits.shape());
    double lm = 0;
    for (std::size_t i = 0; i < n; ++i)
      lm += static_cast<double>(
          message_loss(std::span<const T>(ext.logits.item(i)), *obj.key, grad_logits.item(i)));
    const T scale = T(1) / static_cast<T>(n * k);
    grad_logits *= scale;
    out.losses.message = lm / static_cast<double>(n * k);
    grad_images += extract_backward(extractor, ext, grad_logits, false).images;
  }

  if (obj.reference) {
    require(obj.reference->same_shape(pass.images), "objective reference images have the wrong shape");
    out.losses.image = static_cast<double>(
        detail::mse_with_grad(pass.images, *obj.reference, static_cast<T>(obj.lambda_i), grad_images));
  }

  std::vector<Tensor<T>> hidden_grads;
  if (obj.hidden_reference) {
    const auto hidden = pass.hidden();
    require(obj.hidden_reference->size() == hidden.size(), "hidden reference has the wrong block count");
    for (std::size_t b = 0; b < hidden.size(); ++b) {
      const auto& h = hidden[b];
      const auto& r = (*obj.hidden_reference)[b];
      require(h.same_shape(r), "hidden reference block " + std::to_string(b) + " has the wrong shape");
      Tensor<T> g(h.shape());
      out.losses.hidden += static_cast<double>(
          detail::mse_with_grad(h, r, static_cast<T>(obj.lambda_hidden), g));
      hidden_grads.push_back(std::move(g));
    }
  }

  out.losses.total = out.losses.message + obj.lambda_i * out.losses.image +
                     obj.lambda_hidden * out.losses.hidden;
  if (!out.losses.finite()) return out;
  out.grads = decode_backward(decoder, pass, grad_images, obj.hidden_reference ? &hidden_grads : nullptr)
                  .params;
  return out;
}

// One optimizer step on L = L_m + lambda_i * L_i. `key` null drops L_m.
inline LossTerms signature_step(ParamSet<float>& decoder, Adam<float>& opt, const ParamSet<float>& extractor,
                                const Tensor<float>& latents, const ImageBatch<float>& reference,
                                const MessageKey* key, double lambda_i) {
  DecoderObjective<float> obj;
  obj.key = key;
  obj.reference = &reference;
  obj.lambda_i = lambda_i;
  auto r = decoder_objective(decoder, extractor, latents, obj);
  if (!r.losses.finite())
    throw TrainingDiverged("decoder fine-tuning loss is not finite (L_m=" + std::to_string(r.losses.message) +
                               ", L_i=" + std::to_string(r.losses.image) + ")",
                           opt.steps_taken() + 1);
  opt.step(decoder, r.grads);
  return r.losses;
}

// Target key for step t (1-based); nullopt means no message term.
using KeySchedule = std::function<std::optional<MessageKey>(long step)>;

struct FinetuneSpec {
  long steps = 100;
  std::size_t batch_size = 4;
  double lr = kDefaultFinetuneLr;
  double lambda_i = kDefaultLambdaI;
  std::uint64_t seed = 0;
  long log_every = 10;
};

// Called after `step` with the mean losses since the previous call.
using FinetuneObserver = std::function<void(long step, const ParamSet<float>& decoder, const LossTerms& mean)>;

// Adam fine-tuning of a decoder on (latent, reference image) pairs with a
// fresh optimizer. Zero steps returns the input unchanged.
inline ParamSet<float> finetune_decoder(ParamSet<float> decoder, const ParamSet<float>& extractor,
                                        const Tensor<float>& latents, const ImageBatch<float>& reference,
                                        const KeySchedule& keys, const FinetuneSpec& spec,
                                        const FinetuneObserver& observer = {}) {
  require(spec.steps >= 0 && spec.batch_size >= 1, "fine-tuning needs steps >= 0 and batch_size >= 1");
  require(latents.dim(0) == reference.dim(0), "latent/reference count mismatch");
  if (spec.steps == 0) return decoder;
  std::mt19937_64 rng(derive_seed(spec.seed, 0xba7c));
  Adam<float> opt(decoder, {spec.lr});
  LossTerms acc;
  long since = 0;
  for (long step = 1; step <= spec.steps; ++step) {
    const auto idx = detail::sample_indices(latents.dim(0), spec.batch_size, rng);
    const std::span<const std::size_t> sel(idx);
    const auto z = gather_items(latents, sel);
    const auto ref = gather_items(reference, sel);
    const auto key = keys ? keys(step) : std::optional<MessageKey>{};
    const auto l = signature_step(decoder, opt, extractor, z, ref, key ? &*key : nullptr, spec.lambda_i);
    acc.message += l.message;
    acc.image += l.image;
    acc.total += l.total;
    ++since;
    if (observer && (step % std::max(1L, spec.log_every) == 0 || step == spec.steps)) {
      const double inv = 1.0 / static_cast<double>(since);
      observer(step, decoder, {acc.message * inv, acc.image * inv, 0.0, acc.total * inv});
      acc = {};
      since = 0;
    }
  }
  return decoder;
}

struct SignatureConfig {
  MessageKey target_key;
  long steps = 1000;
  std::size_t batch_size = 4;
  double lr = kDefaultFinetuneLr;
  double lambda_i = kDefaultLambdaI;
  std::uint64_t seed = 3;
  long log_every = 100;

  FinetuneSpec spec() const { return {steps, batch_size, lr, lambda_i, seed, log_every}; }
};

// Roots cfg.target_key into the substrate's decoder. Encoder and extractor
// stay frozen; L_i compares against the original decoder's output.
inline Checkpoint run_signature(const Substrate& s, const SignatureConfig& cfg,
                                const FinetuneObserver& observer = {}) {
  require(cfg.steps >= 1 && cfg.batch_size >= 1, "signature needs steps >= 1 and batch_size >= 1");
  require(cfg.target_key.size() == s.key_bits(),
          "target key has " + std::to_string(cfg.target_key.size()) + " bits but the extractor emits " +
              std::to_string(s.key_bits()));
  const MessageKey key = cfg.target_key;
  auto decoder = finetune_decoder(s.original_decoder(), s.extractor, s.train.latents, s.train.original,
                                  [&](long) { return std::optional<MessageKey>(key); }, cfg.spec(), observer);
  Checkpoint cp;
  cp.params = std::move(decoder);
  cp.manifest.phase = "signature";
  cp.manifest.step = cfg.steps;
  cp.manifest.key = key;
  cp.manifest.rng_seed = cfg.seed;
  return cp;
}

}  // namespace robosig
