#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "robosig/models.hpp"
#include "robosig/optim.hpp"

namespace robosig {

struct AutoencoderTrainConfig {
  long steps = 1500;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 1;
  long log_every = 50;
};

struct HiddenTrainConfig {
  std::size_t key_bits = kDefaultKeyBits;
  double alpha = 0.15;
  double lambda_img = 0.2;
  long steps = 8000;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 2;
  long log_every = 500;
  std::size_t crop_size = 32;  // train on random square crops; 0 = full images
  std::vector<Transformation> transformations = training_transformations();
};

struct TrainingInterval {
  long step = 0;           // last step of the interval
  double mean_loss = 0.0;  // mean training loss over the interval
  double metric = 0.0;     // held-out PSNR (autoencoder) or bit accuracy (watermark)
};

using IntervalObserver = std::function<void(const TrainingInterval&)>;

namespace detail {

// Cosine decay to 10% of the base rate.
inline double cosine_lr(double base, long step, long total) {
  const double progress = static_cast<double>(step) / static_cast<double>(std::max(1L, total));
  return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

template <typename Rng>
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng) {
  require(population > 0, "cannot sample from an empty corpus");
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = static_cast<std::size_t>(rng() % population);
  return idx;
}

template <typename T>
T mse_with_grad(const Tensor<T>& pred, const Tensor<T>& target, T weight, Tensor<T>& grad) {
  double acc = 0;
  const T scale = weight * T(2) / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    acc += static_cast<double>(d) * static_cast<double>(d);
    grad[i] += scale * d;
  }
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

// Independent random square crops, one per image.
template <typename T, typename Rng>
ImageBatch<T> random_crops(const ImageBatch<T>& images, std::size_t size, Rng& rng) {
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  require(size >= 1 && size <= h && size <= w, "crop size exceeds the image size");
  ImageBatch<T> out({n, c, size, size});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y0 = rng() % (h - size + 1), x0 = rng() % (w - size + 1);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < size; ++y) {
        const T* src = images.data() + ((i * c + ch) * h + y0 + y) * w + x0;
        std::copy(src, src + size, out.data() + ((i * c + ch) * size + y) * size);
      }
  }
  return out;
}

}  // namespace detail

struct AutoencoderTrainResult {
  ParamSet<float> params;
  std::vector<TrainingInterval> log;
};

// Pixel-MSE reconstruction training of the toy latent autoencoder.
inline AutoencoderTrainResult pretrain_autoencoder(const ImageBatch<float>& train,
                                                   const ImageBatch<float>& heldout,
                                                   const AutoencoderTrainConfig& cfg,
                                                   const IntervalObserver& observer = {}) {
  require(!train.empty() && train.dim(0) > 0, "autoencoder pretraining needs a non-empty corpus");
  require(cfg.steps >= 1 && cfg.batch_size >= 1, "autoencoder pretraining needs steps, batch_size >= 1");
  check_image_batch(train);
  std::mt19937_64 rng(cfg.seed);
  AutoencoderTrainResult result{init_autoencoder<float>(derive_seed(cfg.seed, 1)), {}};
  Adam<float> opt(result.params, {cfg.lr});
  double interval_loss = 0;
  long interval_steps = 0;

  for (long step = 1; step <= cfg.steps; ++step) {
    opt.set_lr(detail::cosine_lr(cfg.lr, step - 1, cfg.steps));
    const auto idx = detail::sample_indices(train.dim(0), cfg.batch_size, rng);
    const auto batch = gather_items(train, std::span<const std::size_t>(idx));
    const auto pass = autoencode_forward(result.params, batch);
    Tensor<float> grad(batch.shape());
    const float loss = detail::mse_with_grad(pass.decoder.images, batch, 1.0f, grad);
    if (!std::isfinite(loss)) throw TrainingDiverged("autoencoder loss is not finite", step);
    opt.step(result.params, autoencode_backward(result.params, pass, grad));
    interval_loss += loss;
    ++interval_steps;

    if (step % cfg.log_every == 0 || step == cfg.steps) {
      TrainingInterval iv{step, interval_loss / static_cast<double>(interval_steps), 0.0};
      if (!heldout.empty()) {
        const auto recon = decode(result.params, encode(result.params, heldout));
        iv.metric = psnr(heldout, recon);
      }
      result.log.push_back(iv);
      if (observer) observer(iv);
      interval_loss = 0;
      interval_steps = 0;
    }
  }
  return result;
}

struct HiddenTrainResult {
  ParamSet<float> extractor;
  ParamSet<float> embedder;
  std::vector<TrainingInterval> log;
};

// Mean watermark bit accuracy of an embedder/extractor pair on fresh keys.
inline double hidden_bit_accuracy(const ParamSet<float>& embedder, const ParamSet<float>& extractor,
                                  const ImageBatch<float>& images, double alpha,
                                  const Transformation& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = images.dim(0);
  const std::size_t k = extractor_key_bits(extractor);
  double acc = 0;
  for (std::size_t first = 0; first < n; first += 25) {
    const std::size_t count = std::min<std::size_t>(25, n - first);
    const auto batch = slice_items(images, first, count);
    std::vector<MessageKey> keys;
    for (std::size_t i = 0; i < count; ++i) keys.push_back(random_key(k, rng));
    const auto residual = embed_forward(embedder, batch, keys).residual;
    const auto marked = apply_residual(batch, residual, static_cast<float>(alpha));
    const auto logits = extract(extractor, apply_transformation(t, marked, rng()));
    for (std::size_t i = 0; i < count; ++i)
      acc += bit_accuracy(keys[i], harden(std::span<const float>(logits.item(i))));
  }
  return acc / static_cast<double>(n);
}

// Joint embedder/extractor training: fresh uniform keys per image, one
// randomly chosen training transformation per step.
inline HiddenTrainResult train_hidden(const ImageBatch<float>& train, const ImageBatch<float>& heldout,
                                      const HiddenTrainConfig& cfg,
                                      const IntervalObserver& observer = {}) {
  require(!train.empty() && train.dim(0) > 0, "watermark training needs a non-empty corpus");
  require(cfg.steps >= 1 && cfg.batch_size >= 1, "watermark training needs steps, batch_size >= 1");
  require(cfg.alpha >= 0, "alpha must be >= 0");
  check_image_batch(train);
  std::mt19937_64 rng(cfg.seed);
  HiddenTrainResult result{init_extractor<float>(cfg.key_bits, derive_seed(cfg.seed, 1)),
                           init_embedder<float>(cfg.key_bits, derive_seed(cfg.seed, 2)),
                           {}};
  Adam<float> ext_opt(result.extractor, {cfg.lr});
  Adam<float> emb_opt(result.embedder, {cfg.lr});
  require(!cfg.transformations.empty(), "watermark training needs at least one transformation");
  for (const auto& t : cfg.transformations)
    require(!t.eval_only(), "transformation " + t.name() + " is evaluation-only");
  const auto& transforms = cfg.transformations;
  const auto alpha = static_cast<float>(cfg.alpha);
  const float bits_scale = 1.0f / static_cast<float>(cfg.batch_size * cfg.key_bits);
  double interval_loss = 0;
  long interval_steps = 0;

  for (long step = 1; step <= cfg.steps; ++step) {
    const double lr = detail::cosine_lr(cfg.lr, step - 1, cfg.steps);
    ext_opt.set_lr(lr);
    emb_opt.set_lr(lr);
    const auto idx = detail::sample_indices(train.dim(0), cfg.batch_size, rng);
    auto images = gather_items(train, std::span<const std::size_t>(idx));
    if (cfg.crop_size > 0 && cfg.crop_size < images.dim(2)) images = detail::random_crops(images, cfg.crop_size, rng);
    std::vector<MessageKey> keys;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) keys.push_back(random_key(cfg.key_bits, rng));
    const auto& t = transforms[rng() % transforms.size()];

    const auto emb = embed_forward(result.embedder, images, keys);
    const auto marked = apply_residual(images, emb.residual, alpha);
    const auto seen = transform_forward(t, marked, rng(), TransformContext::differentiable);
    const auto ext = extract_forward(result.extractor, seen.images);

    Tensor<float> grad_logits(ext.logits.shape());
    double loss_m = 0;
    for (std::size_t i = 0; i < cfg.batch_size; ++i)
      loss_m += message_loss(std::span<const float>(ext.logits.item(i)), keys[i], grad_logits.item(i));
    loss_m *= bits_scale;
    grad_logits *= bits_scale;

    auto ext_grads = extract_backward(result.extractor, ext, grad_logits, true);
    Tensor<float> grad_marked = transform_backward(seen, ext_grads.images);
    const float loss_img = detail::mse_with_grad(marked, images, static_cast<float>(cfg.lambda_img), grad_marked);
    const double loss = loss_m + cfg.lambda_img * loss_img;
    if (!std::isfinite(loss)) throw TrainingDiverged("watermark training loss is not finite", step);

    const auto grad_residual = apply_residual_backward(images, emb.residual, alpha, grad_marked);
    const auto emb_grads = embed_backward(result.embedder, emb, grad_residual);
    ext_opt.step(result.extractor, *ext_grads.params);
    emb_opt.step(result.embedder, emb_grads);
    interval_loss += loss;
    ++interval_steps;

    if (step % cfg.log_every == 0 || step == cfg.steps) {
      TrainingInterval iv{step, interval_loss / static_cast<double>(interval_steps), 0.0};
      if (!heldout.empty())
        iv.metric = hidden_bit_accuracy(result.embedder, result.extractor, heldout, cfg.alpha,
                                        Transformation::identity(), derive_seed(cfg.seed, 99));
      result.log.push_back(iv);
      if (observer) observer(iv);
      interval_loss = 0;
      interval_steps = 0;
    }
  }
  return result;
}

}  // namespace robosig
