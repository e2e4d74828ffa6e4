#pragma once

// Toy networks standing in for the latent autoencoder, the watermark
// embedder and the watermark extractor. Parameters live in ParamSets; every
// network has a forward pass that records a tape and a backward pass that
// returns exact gradients.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "robosig/imaging.hpp"
#include "robosig/keys.hpp"
#include "robosig/nn.hpp"
#include "robosig/params.hpp"

namespace robosig {

namespace arch {
inline const std::string kAutoencoder = "toy-ae-v1";
inline const std::string kExtractor = "hidden-extractor-v1";
inline const std::string kEmbedder = "hidden-embedder-v1";

inline constexpr std::size_t kLatentChannels = 4;
inline constexpr std::size_t kDownsample = 8;
}  // namespace arch

enum class Activation { none, leaky_relu, sigmoid, tanh };

// One convolution, optionally preceded by a 2x nearest upsample.
struct ConvStage {
  std::string name;
  std::size_t in = 0, out = 0;
  nn::ConvGeometry geometry;
  bool upsample = false;
  Activation activation = Activation::leaky_relu;
  double init_gain = std::sqrt(2.0 / (1.0 + nn::kLeakySlope * nn::kLeakySlope));
};

inline const std::vector<ConvStage>& encoder_stages() {
  static const std::vector<ConvStage> stages = {
      {"enc.conv1", 3, 32, {3, 2, 1}},
      {"enc.conv2", 32, 32, {3, 2, 1}},
      {"enc.conv3", 32, 64, {3, 2, 1}},
      {"enc.proj", 64, arch::kLatentChannels, {1, 1, 0}, false, Activation::none, 1.0},
  };
  return stages;
}

// The three up-block outputs (indices 1..3) are the decoder's hidden states.
inline const std::vector<ConvStage>& decoder_stages() {
  static const std::vector<ConvStage> stages = {
      {"dec.conv_in", arch::kLatentChannels, 64, {3, 1, 1}},
      {"dec.up1", 64, 32, {3, 1, 1}, true},
      {"dec.up2", 32, 16, {3, 1, 1}, true},
      {"dec.up3", 16, 16, {3, 1, 1}, true},
      {"dec.conv_out", 16, 3, {3, 1, 1}, false, Activation::sigmoid, 1.0},
  };
  return stages;
}

inline constexpr std::size_t kDecoderHiddenFirst = 1;
inline constexpr std::size_t kDecoderHiddenCount = 3;

inline const std::vector<ConvStage>& extractor_stages() {
  static const std::vector<ConvStage> stages = {
      {"ext.conv1", 3, 16, {3, 2, 1}},
      {"ext.conv2", 16, 32, {3, 2, 1}},
      {"ext.conv3", 32, 128, {3, 2, 1}},
      {"ext.conv4", 128, 128, {3, 1, 1}},
  };
  return stages;
}

inline constexpr std::size_t kExtractorFeatures = 128;

namespace detail {

template <typename T, typename Rng>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T, typename Rng>
void add_conv(ParamSet<T>& p, const ConvStage& s, Rng& rng) {
  const std::size_t k = s.geometry.kernel;
  const double fan_in = static_cast<double>(s.in * k * k);
  p.add(s.name + ".weight", normal_tensor<T>({s.out, s.in, k, k}, s.init_gain / std::sqrt(fan_in), rng));
  p.add(s.name + ".bias", Tensor<T>({s.out}));
}

template <typename T>
void activate(Activation a, Tensor<T>& x) {
  switch (a) {
    case Activation::none: break;
    case Activation::leaky_relu: nn::leaky_relu_inplace(x); break;
    case Activation::sigmoid: nn::sigmoid_inplace(x); break;
    case Activation::tanh: nn::tanh_inplace(x); break;
  }
}

template <typename T>
void activate_backward(Activation a, const Tensor<T>& out, Tensor<T>& grad) {
  switch (a) {
    case Activation::none: break;
    case Activation::leaky_relu: nn::leaky_relu_backward_inplace(out, grad); break;
    case Activation::sigmoid: nn::sigmoid_backward_inplace(out, grad); break;
    case Activation::tanh: nn::tanh_backward_inplace(out, grad); break;
  }
}

template <typename T>
Tensor<T> conv_stage(const ParamSet<T>& p, const ConvStage& s, const Tensor<T>& x) {
  auto y = nn::conv2d(x, p.get(s.name + ".weight"), p.get(s.name + ".bias"), s.geometry);
  activate(s.activation, y);
  return y;
}

// grad_out is consumed (activation backward is applied in place).
template <typename T>
Tensor<T> conv_stage_backward(const ParamSet<T>& p, const ConvStage& s, const Tensor<T>& input,
                              const Tensor<T>& output, Tensor<T> grad_out, ParamSet<T>& grads,
                              bool need_input_grad) {
  activate_backward(s.activation, output, grad_out);
  Tensor<T> gx;
  nn::conv2d_backward(input, p.get(s.name + ".weight"), s.geometry, grad_out,
                      need_input_grad ? &gx : nullptr, grads.get(s.name + ".weight"),
                      grads.get(s.name + ".bias"));
  return gx;
}

}  // namespace detail

// Activations recorded by a sequential forward pass. inputs[i] is what stage
// i's convolution saw (after any upsample); outputs[i] is its activation.
template <typename T>
struct SequentialTape {
  std::vector<Tensor<T>> inputs;
  std::vector<Tensor<T>> outputs;
};

template <typename T>
Tensor<T> run_stages(const std::vector<ConvStage>& stages, const ParamSet<T>& p, Tensor<T> x,
                     SequentialTape<T>* tape) {
  for (const auto& s : stages) {
    if (s.upsample) x = nn::upsample2x(x);
    auto y = detail::conv_stage(p, s, x);
    if (tape) {
      tape->inputs.push_back(std::move(x));
      tape->outputs.push_back(y);
    }
    x = std::move(y);
  }
  return x;
}

// `extra_output_grads[i]`, when non-null, is added to the gradient arriving
// at stage i's output. Returns the gradient w.r.t. the stages' input, or an
// empty tensor when need_input_grad is false.
template <typename T>
Tensor<T> backprop_stages(const std::vector<ConvStage>& stages, const ParamSet<T>& p,
                          const SequentialTape<T>& tape, Tensor<T> grad, ParamSet<T>& grads,
                          const std::vector<const Tensor<T>*>& extra_output_grads,
                          bool need_input_grad) {
  for (std::size_t r = stages.size(); r-- > 0;) {
    const auto& s = stages[r];
    if (r < extra_output_grads.size() && extra_output_grads[r]) grad += *extra_output_grads[r];
    const bool want_input = need_input_grad || r > 0;
    grad = detail::conv_stage_backward(p, s, tape.inputs[r], tape.outputs[r], std::move(grad),
                                       grads, want_input);
    if (want_input && s.upsample) grad = nn::upsample2x_backward(grad);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Autoencoder

template <typename T>
ParamSet<T> init_autoencoder(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<T> p(arch::kAutoencoder, ParamRole::autoencoder);
  for (const auto& s : encoder_stages()) detail::add_conv(p, s, rng);
  for (const auto& s : decoder_stages()) detail::add_conv(p, s, rng);
  return p;
}

template <typename T>
ParamSet<T> decoder_of(const ParamSet<T>& autoencoder) {
  require(autoencoder.role() == ParamRole::autoencoder, "decoder_of expects an autoencoder");
  return autoencoder.subset("dec.", ParamRole::decoder_only);
}

// Replaces the decoder entries of an autoencoder.
template <typename T>
ParamSet<T> with_decoder(const ParamSet<T>& autoencoder, const ParamSet<T>& decoder) {
  ParamSet<T> out = autoencoder;
  for (const auto& e : decoder.entries()) out.get(e.name) = e.value;
  return out;
}

template <typename T>
void require_decoder(const ParamSet<T>& p) {
  require(p.architecture_id() == arch::kAutoencoder,
          "decoder architecture mismatch: " + p.architecture_id());
  require(p.role() == ParamRole::autoencoder || p.role() == ParamRole::decoder_only,
          "decode requires an autoencoder or decoder_only parameter set, got " + to_string(p.role()));
}

template <typename T>
void require_latents(const Tensor<T>& z) {
  require(z.rank() == 4 && z.dim(1) == arch::kLatentChannels,
          "latents must be (N, 4, h, w), got " + shape_string(z.shape()));
}

// Per-block decoder activations for one latent batch.
template <typename T>
using HiddenStates = std::vector<Tensor<T>>;

template <typename T>
struct DecoderPass {
  ImageBatch<T> images;
  SequentialTape<T> tape;

  HiddenStates<T> hidden() const {
    return {tape.outputs.begin() + kDecoderHiddenFirst,
            tape.outputs.begin() + kDecoderHiddenFirst + kDecoderHiddenCount};
  }
};

template <typename T>
DecoderPass<T> decode_forward(const ParamSet<T>& decoder, const Tensor<T>& latents) {
  require_decoder(decoder);
  require_latents(latents);
  DecoderPass<T> pass;
  pass.images = run_stages(decoder_stages(), decoder, latents, &pass.tape);
  return pass;
}

template <typename T>
ImageBatch<T> decode(const ParamSet<T>& decoder, const Tensor<T>& latents,
                     HiddenStates<T>* hidden = nullptr) {
  if (hidden) {
    auto pass = decode_forward(decoder, latents);
    *hidden = pass.hidden();
    return std::move(pass.images);
  }
  require_decoder(decoder);
  require_latents(latents);
  return run_stages<T>(decoder_stages(), decoder, latents, nullptr);
}

template <typename T>
struct DecoderGradients {
  ParamSet<T> params;
  Tensor<T> latents;  // empty unless requested
};

// hidden_grads, when given, holds one gradient per hidden state.
template <typename T>
DecoderGradients<T> decode_backward(const ParamSet<T>& decoder, const DecoderPass<T>& pass,
                                    const Tensor<T>& grad_images,
                                    const std::vector<Tensor<T>>* hidden_grads = nullptr,
                                    bool need_latent_grad = false) {
  DecoderGradients<T> g{decoder.zeros_like(), {}};
  std::vector<const Tensor<T>*> extra(decoder_stages().size(), nullptr);
  if (hidden_grads) {
    require(hidden_grads->size() == kDecoderHiddenCount, "expected one gradient per hidden state");
    for (std::size_t i = 0; i < kDecoderHiddenCount; ++i)
      extra[kDecoderHiddenFirst + i] = &(*hidden_grads)[i];
  }
  g.latents = backprop_stages(decoder_stages(), decoder, pass.tape, grad_images, g.params, extra,
                              need_latent_grad);
  return g;
}

template <typename T>
Tensor<T> encode(const ParamSet<T>& encoder, const ImageBatch<T>& images) {
  require(encoder.architecture_id() == arch::kAutoencoder && encoder.role() == ParamRole::autoencoder,
          "encode requires a toy-ae-v1 autoencoder parameter set");
  require(images.rank() == 4 && images.dim(1) == kImageChannels &&
              images.dim(2) % arch::kDownsample == 0 && images.dim(3) % arch::kDownsample == 0,
          "encode expects (N, 3, H, W) with H, W divisible by 8, got " + shape_string(images.shape()));
  return run_stages<T>(encoder_stages(), encoder, images, nullptr);
}

// Full reconstruction pass for autoencoder pretraining.
template <typename T>
struct AutoencoderPass {
  SequentialTape<T> encoder_tape;
  DecoderPass<T> decoder;
};

template <typename T>
AutoencoderPass<T> autoencode_forward(const ParamSet<T>& ae, const ImageBatch<T>& images) {
  AutoencoderPass<T> pass;
  auto z = run_stages(encoder_stages(), ae, images, &pass.encoder_tape);
  pass.decoder = decode_forward(ae, z);
  return pass;
}

template <typename T>
ParamSet<T> autoencode_backward(const ParamSet<T>& ae, const AutoencoderPass<T>& pass,
                                const Tensor<T>& grad_images) {
  auto dec = decode_backward<T>(ae, pass.decoder, grad_images, nullptr, true);
  ParamSet<T> grads = std::move(dec.params);
  backprop_stages(encoder_stages(), ae, pass.encoder_tape, std::move(dec.latents), grads, {}, false);
  return grads;
}

// ---------------------------------------------------------------------------
// Extractor

template <typename T>
ParamSet<T> init_extractor(std::size_t key_bits, std::uint64_t seed) {
  require(key_bits >= 1, "extractor needs key_bits >= 1");
  std::mt19937_64 rng(seed);
  ParamSet<T> p(arch::kExtractor, ParamRole::extractor);
  for (const auto& s : extractor_stages()) detail::add_conv(p, s, rng);
  // Zero-mean first-layer kernels: smooth image content starts out invisible.
  auto& w1 = p.get("ext.conv1.weight");
  const std::size_t taps = w1.dim(2) * w1.dim(3);
  for (std::size_t f = 0; f < w1.dim(0) * w1.dim(1); ++f) {
    T* kernel = w1.data() + f * taps;
    T mean = 0;
    for (std::size_t t = 0; t < taps; ++t) mean += kernel[t];
    mean /= static_cast<T>(taps);
    for (std::size_t t = 0; t < taps; ++t) kernel[t] -= mean;
  }
  p.add("ext.fc.weight",
        detail::normal_tensor<T>({key_bits, kExtractorFeatures}, 1.0 / std::sqrt(double(kExtractorFeatures)), rng));
  p.add("ext.fc.bias", Tensor<T>({key_bits}));
  return p;
}

template <typename T>
std::size_t extractor_key_bits(const ParamSet<T>& p) {
  return p.get("ext.fc.bias").size();
}

template <typename T>
struct ExtractorPass {
  SequentialTape<T> tape;
  Tensor<T> pooled;
  Tensor<T> logits;  // (N, k)
};

template <typename T>
void require_extractor(const ParamSet<T>& p) {
  require(p.architecture_id() == arch::kExtractor && p.role() == ParamRole::extractor,
          "extract requires a hidden-extractor-v1 extractor parameter set");
}

template <typename T>
ExtractorPass<T> extract_forward(const ParamSet<T>& extractor, const ImageBatch<T>& images) {
  require_extractor(extractor);
  require(images.rank() == 4 && images.dim(1) == kImageChannels,
          "extract expects (N, 3, H, W) images, got " + shape_string(images.shape()));
  ExtractorPass<T> pass;
  auto features = run_stages(extractor_stages(), extractor, images, &pass.tape);
  pass.pooled = nn::global_avg_pool(features);
  pass.logits = nn::linear(pass.pooled, extractor.get("ext.fc.weight"), extractor.get("ext.fc.bias"));
  return pass;
}

// (N, k) logits, one soft message per image.
template <typename T>
Tensor<T> extract(const ParamSet<T>& extractor, const ImageBatch<T>& images) {
  return extract_forward(extractor, images).logits;
}

template <typename T>
std::vector<SoftMessage> soft_messages(const Tensor<T>& logits) {
  std::vector<SoftMessage> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = logits.item(i);
    out[i].logits.assign(row.begin(), row.end());
  }
  return out;
}

template <typename T>
struct ExtractorGradients {
  std::optional<ParamSet<T>> params;
  Tensor<T> images;
};

template <typename T>
ExtractorGradients<T> extract_backward(const ParamSet<T>& extractor, const ExtractorPass<T>& pass,
                                       const Tensor<T>& grad_logits, bool need_param_grads) {
  ParamSet<T> grads = extractor.zeros_like();
  Tensor<T> grad_pooled;
  nn::linear_backward(pass.pooled, extractor.get("ext.fc.weight"), grad_logits, &grad_pooled,
                      grads.get("ext.fc.weight"), grads.get("ext.fc.bias"));
  auto grad_features = nn::global_avg_pool_backward(grad_pooled, pass.tape.outputs.back().shape());
  ExtractorGradients<T> g;
  g.images = backprop_stages(extractor_stages(), extractor, pass.tape, std::move(grad_features),
                             grads, {}, true);
  if (need_param_grads) g.params = std::move(grads);
  return g;
}

// ---------------------------------------------------------------------------
// Embedder (U-Net-lite; key bits enter as constant +-1 planes at 1/4 scale)

namespace embedder_layers {
inline ConvStage down1() { return {"emb.down1", 3, 16, {3, 2, 1}}; }
inline ConvStage down2() { return {"emb.down2", 16, 32, {3, 2, 1}}; }
inline ConvStage mid(std::size_t k) { return {"emb.mid", 32 + k, 64, {3, 1, 1}}; }
inline ConvStage up1() { return {"emb.up1", 80, 16, {3, 1, 1}, true}; }
inline ConvStage up2() { return {"emb.up2", 19, 16, {3, 1, 1}, true}; }
inline ConvStage out() { return {"emb.out", 16, 3, {3, 1, 1}, false, Activation::tanh, 0.5}; }
}  // namespace embedder_layers

template <typename T>
ParamSet<T> init_embedder(std::size_t key_bits, std::uint64_t seed) {
  require(key_bits >= 1, "embedder needs key_bits >= 1");
  namespace L = embedder_layers;
  std::mt19937_64 rng(seed);
  ParamSet<T> p(arch::kEmbedder, ParamRole::embedder);
  for (const auto& s : {L::down1(), L::down2(), L::mid(key_bits), L::up1(), L::up2(), L::out()})
    detail::add_conv(p, s, rng);
  return p;
}

template <typename T>
Tensor<T> key_planes(const std::vector<MessageKey>& keys, std::size_t h, std::size_t w) {
  const std::size_t k = keys.front().size();
  Tensor<T> planes({keys.size(), k, h, w});
  for (std::size_t i = 0; i < keys.size(); ++i) {
    require(keys[i].size() == k, "all keys in a batch must have equal length");
    for (std::size_t b = 0; b < k; ++b)
      std::fill_n(planes.data() + (i * k + b) * h * w, h * w, keys[i][b] ? T(1) : T(-1));
  }
  return planes;
}

template <typename T>
struct EmbedderPass {
  Tensor<T> images, d1, d2, mid_in, mid, up1_in, up1, up2_in, up2;
  Tensor<T> residual;
};

template <typename T>
EmbedderPass<T> embed_forward(const ParamSet<T>& embedder, const ImageBatch<T>& images,
                              const std::vector<MessageKey>& keys) {
  namespace L = embedder_layers;
  require(embedder.architecture_id() == arch::kEmbedder && embedder.role() == ParamRole::embedder,
          "embed requires a hidden-embedder-v1 embedder parameter set");
  require(images.rank() == 4 && images.dim(1) == kImageChannels && images.dim(2) % 4 == 0 &&
              images.dim(3) % 4 == 0,
          "embed expects (N, 3, H, W) with H, W divisible by 4, got " + shape_string(images.shape()));
  require(keys.size() == images.dim(0), "embed needs one key per image");
  const std::size_t k = embedder.get("emb.mid.weight").dim(1) - 32;
  require(keys.front().size() == k, "embed key length does not match the embedder");

  EmbedderPass<T> p;
  p.images = images;
  p.d1 = detail::conv_stage(embedder, L::down1(), images);
  p.d2 = detail::conv_stage(embedder, L::down2(), p.d1);
  p.mid_in = nn::concat_channels(p.d2, key_planes<T>(keys, p.d2.dim(2), p.d2.dim(3)));
  p.mid = detail::conv_stage(embedder, L::mid(k), p.mid_in);
  p.up1_in = nn::concat_channels(nn::upsample2x(p.mid), p.d1);
  p.up1 = detail::conv_stage(embedder, L::up1(), p.up1_in);
  p.up2_in = nn::concat_channels(nn::upsample2x(p.up1), images);
  p.up2 = detail::conv_stage(embedder, L::up2(), p.up2_in);
  p.residual = detail::conv_stage(embedder, L::out(), p.up2);
  return p;
}

// Residual in [-1, 1] with the images' shape.
template <typename T>
Tensor<T> embed(const ParamSet<T>& embedder, const ImageBatch<T>& images, const MessageKey& key) {
  return embed_forward(embedder, images, std::vector<MessageKey>(images.dim(0), key)).residual;
}

template <typename T>
ParamSet<T> embed_backward(const ParamSet<T>& embedder, const EmbedderPass<T>& p,
                           const Tensor<T>& grad_residual) {
  namespace L = embedder_layers;
  const std::size_t k = embedder.get("emb.mid.weight").dim(1) - 32;
  ParamSet<T> g = embedder.zeros_like();
  auto g_up2 = detail::conv_stage_backward(embedder, L::out(), p.up2, p.residual, grad_residual, g, true);
  auto g_up2_in = detail::conv_stage_backward(embedder, L::up2(), p.up2_in, p.up2, std::move(g_up2), g, true);
  auto g_up1 = nn::upsample2x_backward(nn::split_channels(g_up2_in, 16).first);
  auto g_up1_in = detail::conv_stage_backward(embedder, L::up1(), p.up1_in, p.up1, std::move(g_up1), g, true);
  auto [g_mid_up, g_d1_skip] = nn::split_channels(g_up1_in, 64);
  auto g_mid = nn::upsample2x_backward(g_mid_up);
  auto g_mid_in = detail::conv_stage_backward(embedder, L::mid(k), p.mid_in, p.mid, std::move(g_mid), g, true);
  auto g_d2 = nn::split_channels(g_mid_in, 32).first;
  auto g_d1 = detail::conv_stage_backward(embedder, L::down2(), p.d1, p.d2, std::move(g_d2), g, true);
  g_d1 += g_d1_skip;
  detail::conv_stage_backward(embedder, L::down1(), p.images, p.d1, std::move(g_d1), g, false);
  return g;
}

}  // namespace robosig
