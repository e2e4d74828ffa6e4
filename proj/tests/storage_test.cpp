#include <gtest/gtest.h>

#include <fstream>

#include "robosig/harness.hpp"
#include "support.hpp"

using namespace robosig;
using robosig::testing::TempDir;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint cp;
  cp.params = decoder_of(init_autoencoder<float>(3));
  cp.params.get("dec.conv_in.bias")[0] = -0.0f;
  cp.params.get("dec.conv_in.bias")[1] = std::numeric_limits<float>::denorm_min();
  cp.params.get("dec.conv_in.bias")[2] = std::numeric_limits<float>::max();
  cp.manifest = {"signature", 100, random_key(48, 4), "00ff00ff00ff00ff", "ae-pretrain-1+hidden-extractor-2", 3};
  return cp;
}

bool bitwise_equal(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (!a.combinable(b) || a.role() != b.role()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.entries()[i].value.size(); ++j)
      if (std::bit_cast<std::uint32_t>(a.entries()[i].value[j]) != std::bit_cast<std::uint32_t>(b.entries()[i].value[j]))
        return false;
  return true;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const auto cp = sample_checkpoint();
  save_checkpoint(cp, dir.path() / "cp");
  const auto back = load_checkpoint(dir.path() / "cp");
  EXPECT_TRUE(bitwise_equal(cp.params, back.params));
  EXPECT_EQ(back.manifest, cp.manifest);
  EXPECT_EQ(back.manifest.key->to_string(), cp.manifest.key->to_string());
  for (std::size_t i = 0; i < cp.params.size(); ++i) EXPECT_EQ(back.params.entries()[i].name, cp.params.entries()[i].name);
}

TEST(Checkpoint, KeylessManifestRoundTrips) {
  TempDir dir;
  Checkpoint cp{init_extractor<float>(48, 1), {"hidden", 2000, std::nullopt, "abc", "", 2}};
  save_checkpoint(cp, dir.path());
  EXPECT_EQ(load_checkpoint(dir.path()), cp);
}

TEST(Checkpoint, ArchitectureMismatchIsRejected) {
  TempDir dir;
  save_checkpoint(sample_checkpoint(), dir.path());
  EXPECT_THROW(load_checkpoint(dir.path(), arch::kExtractor), IoError);
  EXPECT_NO_THROW(load_checkpoint(dir.path(), arch::kAutoencoder));
}

TEST(Checkpoint, CorruptArrayNamesTheEntry) {
  TempDir dir;
  save_checkpoint(sample_checkpoint(), dir.path());
  const auto victim = dir.path() / detail::array_file_name(2, sample_checkpoint().params.entries()[2].name);
  std::filesystem::resize_file(victim, 12);
  try {
    load_checkpoint(dir.path());
    FAIL() << "expected an IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(sample_checkpoint().params.entries()[2].name), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(dir.path() / "nowhere"), IoError);
}

TEST(ConfigHash, StableAndOrderInsensitive) {
  const Json a = {{"lr", 1e-4}, {"steps", 100}};
  const Json b = Json::parse(R"({"steps": 100, "lr": 0.0001})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash({{"lr", 1e-4}, {"steps", 101}}));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Metrics, HeaderIsExact) {
  EXPECT_STREQ(kMetricsHeader, "run_id,phase,step,split,bit_accuracy,psnr_db,loss_m,loss_i,loss_total,config_hash");
}

TEST(Metrics, RowsRoundTrip) {
  EvalRecord r{"run", "signature", 40, "eval", 0.96875, 27.123456789, 0.25, 0.001, 0.258, "deadbeef"};
  EXPECT_EQ(parse_csv_row(to_csv_row(r)), r);
  EvalRecord bare{"run", "original", 0, "train", 0.5, 99.0, std::nullopt, std::nullopt, std::nullopt, "h"};
  EXPECT_EQ(parse_csv_row(to_csv_row(bare)), bare);
}

TEST(Metrics, InvalidRecordsAreRejected) {
  EvalRecord r{"run", "p", 0, "eval", 1.5, 20.0, {}, {}, {}, "h"};
  EXPECT_THROW(to_csv_row(r), ContractViolation);
  r.bit_accuracy = 0.5;
  r.psnr_db = 120.0;
  EXPECT_THROW(to_csv_row(r), ContractViolation);
  r.psnr_db = 20.0;
  r.split = "test";
  EXPECT_THROW(to_csv_row(r), ContractViolation);
  r.split = "eval";
  r.phase = "a,b";
  EXPECT_THROW(to_csv_row(r), ContractViolation);
}

TEST(Metrics, SinkAppendsWithoutRewriting) {
  TempDir dir;
  const auto file = dir.path() / "metrics.csv";
  EvalRecord a{"r1", "signature", 10, "eval", 0.7, 25.0, 0.3, 0.01, 0.38, "h1"};
  EvalRecord b{"r2", "tar", 1, "train", 0.9, 30.0, {}, {}, {}, "h2"};
  {
    MetricsSink sink(file);
    sink.append(a);
  }
  std::ifstream first(file);
  const std::string before((std::istreambuf_iterator<char>(first)), {});
  {
    MetricsSink sink(file);
    sink.append(b);
  }
  std::ifstream second(file);
  const std::string after((std::istreambuf_iterator<char>(second)), {});
  EXPECT_EQ(after.substr(0, before.size()), before);
  const auto rows = read_metrics(file);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], a);
  EXPECT_EQ(rows[1], b);
}

TEST(Configs, SectionsParseAndRejectUnknownKeys) {
  const auto sig = signature_config_from_json(Json::parse(R"({"key": "random", "key_seed": 5, "steps": 7})"), 48);
  EXPECT_EQ(sig.target_key, random_key(48, 5));
  EXPECT_EQ(sig.steps, 7);
  const auto fixed = signature_config_from_json(Json{{"key", std::string(48, '1')}}, 48);
  EXPECT_EQ(fixed.target_key.to_string(), std::string(48, '1'));
  EXPECT_THROW(signature_config_from_json(Json{{"stepz", 1}}, 48), ContractViolation);
  EXPECT_THROW(attack_config_from_json(Json{{"kind", "melt"}}), ContractViolation);
  EXPECT_EQ(attack_config_from_json(Json{{"kind", "gradual"}}).kind, AttackKind::gradual_random_key);
  EXPECT_THROW(tar_config_from_json(Json{{"retain_fraction", 1.0}}), ContractViolation);
  const auto hidden = hidden_config_from_json(Json{{"transformations", {"identity", "gaussian_noise(0.05)"}}});
  ASSERT_EQ(hidden.transformations.size(), 2u);
  EXPECT_EQ(hidden.transformations[1], Transformation::gaussian_noise(0.05));
}

TEST(Configs, WorkerCountDoesNotChangeTheHash) {
  TarConfig a, b;
  b.workers = 4;
  EXPECT_EQ(config_hash(to_json(a)), config_hash(to_json(b)));
  b.inner_attacks = 3;
  EXPECT_NE(config_hash(to_json(a)), config_hash(to_json(b)));
}

TEST(Configs, JsonRoundTripPreservesValues) {
  AttackConfig a;
  a.kind = AttackKind::purification;
  a.steps = 500;
  a.lr = 3e-4;
  const auto back = attack_config_from_json(to_json(a));
  EXPECT_EQ(back.kind, a.kind);
  EXPECT_EQ(back.steps, a.steps);
  EXPECT_DOUBLE_EQ(back.lr, a.lr);
  TarConfig t;
  t.outer_steps = 7;
  t.eta = 0.25;
  const auto tb = tar_config_from_json(to_json(t));
  EXPECT_EQ(tb.outer_steps, 7);
  EXPECT_DOUBLE_EQ(tb.eta, 0.25);
}

TEST(ArtifactStore, DataDirFromEnvironment) {
  TempDir dir;
  ::setenv("ROBOSIG_DATA_DIR", dir.path().c_str(), 1);
  EXPECT_EQ(data_root(), dir.path());
  ::unsetenv("ROBOSIG_DATA_DIR");
  EXPECT_EQ(data_root(), std::filesystem::path("robosig-data"));
}

TEST(ArtifactStore, SaveLoadAndMissingIds) {
  TempDir dir;
  ArtifactStore store(dir.path());
  const auto cp = sample_checkpoint();
  EXPECT_FALSE(store.has("signature-x"));
  store.save("signature-x", cp);
  EXPECT_TRUE(store.has("signature-x"));
  EXPECT_EQ(store.load("signature-x"), cp);
  EXPECT_THROW(store.load("signature-y"), IoError);
  EXPECT_FALSE(std::filesystem::exists(store.checkpoint_dir("signature-x").string() + ".partial"));
}
