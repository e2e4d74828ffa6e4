#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "robosig/models.hpp"

namespace robosig {

// Latents of a fixed image set under the frozen encoder, together with the
// never-fine-tuned decoder's reconstructions of them.
struct LatentSplit {
  Tensor<float> latents;
  ImageBatch<float> original;

  std::size_t size() const { return latents.empty() ? 0 : latents.dim(0); }
};

// Frozen pieces shared by signature fine-tuning, attacks and TAR. The encoder
// is frozen, so latents are computed once up front.
struct Substrate {
  ParamSet<float> autoencoder;
  ParamSet<float> extractor;
  LatentSplit train;
  LatentSplit eval;

  std::size_t key_bits() const { return extractor_key_bits(extractor); }
  ParamSet<float> original_decoder() const { return decoder_of(autoencoder); }
};

inline constexpr std::size_t kEvalChunk = 25;

inline LatentSplit make_latent_split(const ParamSet<float>& autoencoder, const ImageBatch<float>& images) {
  check_image_batch(images);
  LatentSplit split;
  const std::size_t n = images.dim(0);
  std::vector<Tensor<float>> zs, xs;
  for (std::size_t first = 0; first < n; first += kEvalChunk) {
    const auto chunk = slice_items(images, first, std::min(kEvalChunk, n - first));
    auto z = encode(autoencoder, chunk);
    xs.push_back(decode(autoencoder, z));
    zs.push_back(std::move(z));
  }
  auto join = [](const std::vector<Tensor<float>>& parts) {
    Shape shape = parts.front().shape();
    shape[0] = 0;
    std::vector<float> data;
    for (const auto& p : parts) {
      shape[0] += p.dim(0);
      data.insert(data.end(), p.values().begin(), p.values().end());
    }
    return Tensor<float>(shape, std::move(data));
  };
  split.latents = join(zs);
  split.original = join(xs);
  return split;
}

inline Substrate make_substrate(ParamSet<float> autoencoder, ParamSet<float> extractor,
                                const ImageBatch<float>& train_images,
                                const ImageBatch<float>& eval_images) {
  require(autoencoder.role() == ParamRole::autoencoder, "substrate needs an autoencoder checkpoint");
  require_extractor(extractor);
  Substrate s;
  s.train = make_latent_split(autoencoder, train_images);
  s.eval = make_latent_split(autoencoder, eval_images);
  s.autoencoder = std::move(autoencoder);
  s.extractor = std::move(extractor);
  return s;
}

struct EvalResult {
  Transformation transformation;
  double bit_accuracy = 0.0;  // mean of per-image accuracies
  double psnr_db = 0.0;       // against the supplied reference images
};

// Decodes every latent of `split`, optionally transforms the images, and
// compares the extracted bits with `key`. PSNR is measured on the
// untransformed decoder output against `reference` (defaults to the
// original decoder's output).
inline std::vector<EvalResult> evaluate_decoder(const ParamSet<float>& decoder,
                                                const ParamSet<float>& extractor,
                                                const LatentSplit& split, const MessageKey& key,
                                                std::span<const Transformation> transformations,
                                                std::uint64_t seed = 0,
                                                const ImageBatch<float>* reference = nullptr) {
  require(key.size() == extractor_key_bits(extractor),
          "evaluation key has " + std::to_string(key.size()) + " bits but the extractor emits " +
              std::to_string(extractor_key_bits(extractor)));
  require(!transformations.empty(), "evaluate_decoder needs at least one transformation");
  const ImageBatch<float>& ref = reference ? *reference : split.original;
  const std::size_t n = split.size();
  require(n > 0 && ref.dim(0) == n, "evaluation split/reference size mismatch");

  std::vector<double> acc(transformations.size(), 0.0);
  double psnr_sum = 0.0;
  for (std::size_t first = 0; first < n; first += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, n - first);
    const auto images = decode(decoder, slice_items(split.latents, first, count));
    psnr_sum += psnr(slice_items(ref, first, count), images) * static_cast<double>(count);
    for (std::size_t t = 0; t < transformations.size(); ++t) {
      const auto seen = apply_transformation(transformations[t], images, derive_seed(seed, first * 131 + t));
      const auto logits = extract(extractor, seen);
      for (std::size_t i = 0; i < count; ++i)
        acc[t] += bit_accuracy(key, harden(std::span<const float>(logits.item(i))));
    }
  }
  std::vector<EvalResult> out;
  for (std::size_t t = 0; t < transformations.size(); ++t)
    out.push_back({transformations[t], acc[t] / static_cast<double>(n), psnr_sum / static_cast<double>(n)});
  return out;
}

inline EvalResult evaluate_identity(const ParamSet<float>& decoder, const ParamSet<float>& extractor,
                                    const LatentSplit& split, const MessageKey& key,
                                    const ImageBatch<float>* reference = nullptr) {
  const Transformation id = Transformation::identity();
  return evaluate_decoder(decoder, extractor, split, key, std::span<const Transformation>(&id, 1), 0,
                          reference)
      .front();
}

// Decoder outputs for a latent batch of any size, in chunks.
inline ImageBatch<float> decode_all(const ParamSet<float>& decoder, const Tensor<float>& latents) {
  require_latents(latents);
  const std::size_t n = latents.dim(0);
  ImageBatch<float> out;
  for (std::size_t first = 0; first < n; first += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, n - first);
    const auto images = decode(decoder, slice_items(latents, first, count));
    if (first == 0) {
      Shape shape = images.shape();
      shape[0] = n;
      out = ImageBatch<float>(shape);
    }
    std::copy(images.values().begin(), images.values().end(), out.item(first).data());
  }
  return out;
}

// Decoder outputs for every latent of a split (used as L_i references).
inline ImageBatch<float> decode_split(const ParamSet<float>& decoder, const LatentSplit& split) {
  return decode_all(decoder, split.latents);
}

}  // namespace robosig
