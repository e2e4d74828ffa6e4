#pragma once

// JSON <-> config structs. Missing keys keep their defaults; unknown keys are
// rejected so typos do not silently fall back to defaults.

#include <set>
#include <string>

#include "json.hpp"
#include "robosig/tar.hpp"

namespace robosig {

using Json = nlohmann::json;

struct CorpusConfig {
  std::size_t image_size = 64;
  std::size_t train_size = 400;
  std::size_t eval_size = 100;
  std::string corpus_path;  // empty = synthetic
};

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& what) {
  require(j.is_object(), what + " config must be a JSON object");
  for (const auto& item : j.items())
    require(allowed.count(item.key()) > 0, "unknown key '" + item.key() + "' in " + what + " config");
}

template <typename V>
void read(const Json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline CorpusConfig corpus_config_from_json(const Json& j) {
  detail::check_keys(j, {"image_size", "train_size", "eval_size", "corpus_path", "synthetic"}, "corpus");
  CorpusConfig c;
  detail::read(j, "image_size", c.image_size);
  detail::read(j, "train_size", c.train_size);
  detail::read(j, "eval_size", c.eval_size);
  detail::read(j, "corpus_path", c.corpus_path);
  if (j.value("synthetic", false)) c.corpus_path.clear();
  require(c.image_size % 8 == 0 && c.image_size >= 16, "image_size must be a multiple of 8 and >= 16");
  require(c.train_size >= 2 && c.eval_size >= 1, "corpus needs train_size >= 2 and eval_size >= 1");
  return c;
}

inline Json to_json(const CorpusConfig& c) {
  Json j = {{"image_size", c.image_size}, {"train_size", c.train_size}, {"eval_size", c.eval_size}};
  if (c.corpus_path.empty()) j["synthetic"] = true;
  else j["corpus_path"] = c.corpus_path;
  return j;
}

inline AutoencoderTrainConfig autoencoder_config_from_json(const Json& j) {
  detail::check_keys(j, {"steps", "batch_size", "lr", "seed", "log_every"}, "autoencoder");
  AutoencoderTrainConfig c;
  detail::read(j, "steps", c.steps);
  detail::read(j, "batch_size", c.batch_size);
  detail::read(j, "lr", c.lr);
  detail::read(j, "seed", c.seed);
  detail::read(j, "log_every", c.log_every);
  return c;
}

inline Json to_json(const AutoencoderTrainConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"seed", c.seed}, {"log_every", c.log_every}};
}

inline HiddenTrainConfig hidden_config_from_json(const Json& j) {
  detail::check_keys(j,
                     {"key_bits", "alpha", "lambda_img", "steps", "batch_size", "lr", "seed", "log_every",
                      "crop_size", "transformations"},
                     "watermark");
  HiddenTrainConfig c;
  detail::read(j, "key_bits", c.key_bits);
  detail::read(j, "alpha", c.alpha);
  detail::read(j, "lambda_img", c.lambda_img);
  detail::read(j, "steps", c.steps);
  detail::read(j, "batch_size", c.batch_size);
  detail::read(j, "lr", c.lr);
  detail::read(j, "seed", c.seed);
  detail::read(j, "log_every", c.log_every);
  detail::read(j, "crop_size", c.crop_size);
  if (j.contains("transformations")) {
    c.transformations.clear();
    for (const auto& t : j.at("transformations")) c.transformations.push_back(Transformation::parse(t.get<std::string>()));
  }
  return c;
}

inline Json to_json(const HiddenTrainConfig& c) {
  Json ts = Json::array();
  for (const auto& t : c.transformations) ts.push_back(t.name());
  return {{"key_bits", c.key_bits}, {"alpha", c.alpha},         {"lambda_img", c.lambda_img},
          {"steps", c.steps},       {"batch_size", c.batch_size}, {"lr", c.lr},
          {"seed", c.seed},         {"log_every", c.log_every},   {"crop_size", c.crop_size},
          {"transformations", ts}};
}

// "key" may be a bit string or "random" (drawn from key_seed).
inline SignatureConfig signature_config_from_json(const Json& j, std::size_t key_bits) {
  detail::check_keys(j, {"key", "key_seed", "steps", "batch_size", "lr", "lambda_i", "seed", "log_every"},
                     "signature");
  SignatureConfig c;
  std::string key = "random";
  std::uint64_t key_seed = 7;
  detail::read(j, "key", key);
  detail::read(j, "key_seed", key_seed);
  c.target_key = key == "random" ? random_key(key_bits, key_seed) : MessageKey::from_string(key);
  detail::read(j, "steps", c.steps);
  detail::read(j, "batch_size", c.batch_size);
  detail::read(j, "lr", c.lr);
  detail::read(j, "lambda_i", c.lambda_i);
  detail::read(j, "seed", c.seed);
  detail::read(j, "log_every", c.log_every);
  return c;
}

inline Json to_json(const SignatureConfig& c) {
  return {{"key", c.target_key.to_string()}, {"steps", c.steps},   {"batch_size", c.batch_size},
          {"lr", c.lr},                      {"lambda_i", c.lambda_i}, {"seed", c.seed},
          {"log_every", c.log_every}};
}

inline AttackConfig attack_config_from_json(const Json& j) {
  detail::check_keys(j, {"kind", "steps", "batch_size", "lr", "lambda_i", "seed", "log_every"}, "attack");
  AttackConfig c;
  if (j.contains("kind")) c.kind = parse_attack_kind(j.at("kind").get<std::string>());
  detail::read(j, "steps", c.steps);
  detail::read(j, "batch_size", c.batch_size);
  detail::read(j, "lr", c.lr);
  detail::read(j, "lambda_i", c.lambda_i);
  detail::read(j, "seed", c.seed);
  detail::read(j, "log_every", c.log_every);
  return c;
}

inline Json to_json(const AttackConfig& c) {
  return {{"kind", to_string(c.kind)}, {"steps", c.steps},       {"batch_size", c.batch_size}, {"lr", c.lr},
          {"lambda_i", c.lambda_i},    {"seed", c.seed},         {"log_every", c.log_every}};
}

inline TarConfig tar_config_from_json(const Json& j, TarConfig c = {}) {
  detail::check_keys(j,
                     {"outer_steps", "inner_attacks", "attack_steps", "eta", "lambda_tr", "lambda_retain",
                      "lambda_i", "lambda_hidden", "retain_fraction", "batch_size", "attack_lr", "seed",
                      "workers", "log_every"},
                     "tar");
  detail::read(j, "outer_steps", c.outer_steps);
  detail::read(j, "inner_attacks", c.inner_attacks);
  detail::read(j, "attack_steps", c.attack_steps);
  detail::read(j, "eta", c.eta);
  detail::read(j, "lambda_tr", c.lambda_tr);
  detail::read(j, "lambda_retain", c.lambda_retain);
  detail::read(j, "lambda_i", c.lambda_i);
  detail::read(j, "lambda_hidden", c.lambda_hidden);
  detail::read(j, "retain_fraction", c.retain_fraction);
  detail::read(j, "batch_size", c.batch_size);
  detail::read(j, "attack_lr", c.attack_lr);
  detail::read(j, "seed", c.seed);
  detail::read(j, "workers", c.workers);
  detail::read(j, "log_every", c.log_every);
  validate(c);
  return c;
}

// `workers` only changes scheduling, so it is left out of the hash input.
inline Json to_json(const TarConfig& c) {
  return {{"outer_steps", c.outer_steps},
          {"inner_attacks", c.inner_attacks},
          {"attack_steps", c.attack_steps},
          {"eta", c.eta},
          {"lambda_tr", c.lambda_tr},
          {"lambda_retain", c.lambda_retain},
          {"lambda_i", c.lambda_i},
          {"lambda_hidden", c.lambda_hidden},
          {"retain_fraction", c.retain_fraction},
          {"batch_size", c.batch_size},
          {"attack_lr", c.attack_lr},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

}  // namespace robosig
