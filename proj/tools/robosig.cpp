// robosig command-line driver. Every subcommand takes a JSON config holding
// any of the sections corpus / autoencoder / watermark / signature / attack /
// tar; missing sections use defaults. Artifacts go to $ROBOSIG_DATA_DIR
// (or --data-dir, or ./robosig-data).

#include <iostream>

#include "CLI11.hpp"
#include "robosig/harness.hpp"

namespace {

using robosig::Json;

struct Common {
  std::string data_dir;
  std::string config;
  bool quiet = false;

  robosig::ArtifactStore store() const {
    return data_dir.empty() ? robosig::ArtifactStore() : robosig::ArtifactStore(data_dir);
  }
  Json plan() const { return config.empty() ? Json::object() : robosig::load_json_file(config); }
  std::ostream* log() const { return quiet ? nullptr : &std::cerr; }
};

void print_rows(const std::vector<robosig::EvalRecord>& rows) {
  for (const auto& r : rows)
    std::cout << r.phase << ' ' << r.split << " bit_accuracy=" << robosig::Pipeline::fmt(r.bit_accuracy)
              << " psnr_db=" << robosig::Pipeline::fmt(r.psnr_db, 2) << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RoboSignature desk-scale watermark testbed"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--data-dir", c.data_dir, "artifact root (default: $ROBOSIG_DATA_DIR or ./robosig-data)");
  app.add_flag("-q,--quiet", c.quiet, "suppress progress output");

  auto* ae = app.add_subcommand("pretrain-ae", "pretrain the toy latent autoencoder");
  ae->add_option("--config", c.config)->check(CLI::ExistingFile);

  auto* hidden = app.add_subcommand("train-hidden", "train the watermark embedder/extractor pair");
  hidden->add_option("--config", c.config)->check(CLI::ExistingFile);

  std::string key_text;
  auto* sig = app.add_subcommand("embed-signature", "fine-tune the decoder to root a key");
  sig->add_option("--config", c.config)->check(CLI::ExistingFile);
  sig->add_option("--key", key_text, "bit string or 'random'");

  std::string kind, victim, victims;
  auto* atk = app.add_subcommand("attack", "attack a signature-rooted decoder");
  atk->add_option("--kind", kind, "random-key | gradual | purify | collude")->required();
  atk->add_option("--victim", victim, "victim checkpoint id");
  atk->add_option("--victims", victims, "comma-separated checkpoint ids (collusion)");
  atk->add_option("--config", c.config)->check(CLI::ExistingFile);

  auto* tar = app.add_subcommand("tar", "tamper-resistant fine-tuning of a rooted decoder");
  tar->add_option("--victim", victim)->required();
  tar->add_option("--config", c.config)->check(CLI::ExistingFile);

  std::string checkpoint;
  std::vector<std::string> transforms;
  auto* ev = app.add_subcommand("eval", "evaluate a decoder checkpoint on both splits");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--config", c.config)->check(CLI::ExistingFile);
  ev->add_option("--key", key_text, "bit string; defaults to the checkpoint's key");
  ev->add_option("--transform", transforms, "extra transformation, e.g. gaussian_noise:0.05");

  std::string plan_file;
  auto* rep = app.add_subcommand("report", "run a plan and write the tables");
  rep->add_option("--plan", plan_file)->required()->check(CLI::ExistingFile);

  std::string run_id;
  auto* plot = app.add_subcommand("plot-data", "write scatter data for post-attack runs");
  plot->add_option("--run", run_id)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto store = c.store();
    if (*rep) {
      const auto report = robosig::reproduce_tables(robosig::load_json_file(plan_file), store, c.log());
      std::cout << (report.directory / "tables.txt").string() << '\n';
      for (const auto& f : report.failures) std::cerr << "failed: " << f << '\n';
      return report.failures.empty() ? 0 : 1;
    }
    if (*plot) {
      std::cout << robosig::plot_data(store, run_id).string() << '\n';
      return 0;
    }

    const Json plan = c.plan();
    auto p = robosig::make_pipeline(store, plan, c.log());
    if (*ae) {
      std::cout << p.pretrain_autoencoder(
                       robosig::autoencoder_config_from_json(plan.value("autoencoder", Json::object())))
                << '\n';
      return 0;
    }
    if (*hidden) {
      std::cout << p.train_hidden(robosig::hidden_config_from_json(plan.value("watermark", Json::object()))) << '\n';
      return 0;
    }

    const auto& s = robosig::prepare_substrate(p, plan);
    if (*sig) {
      Json section = plan.value("signature", Json::object());
      if (!key_text.empty()) section["key"] = key_text;
      const auto cfg = robosig::signature_config_from_json(section, s.key_bits());
      const auto st = p.signature(cfg);
      print_rows(p.evaluate(st.checkpoint.params, cfg.target_key, "signature-final", cfg.steps,
                            st.checkpoint.manifest.config_hash));
      std::cout << st.id << '\n';
      return 0;
    }
    if (*atk) {
      const auto k = robosig::parse_attack_kind(kind);
      if (k == robosig::AttackKind::collusion) {
        const auto st = p.collude(split_list(victims));
        std::cout << st.id << '\n';
        return 0;
      }
      if (victim.empty()) throw robosig::ContractViolation("--victim is required for this attack");
      auto cfg = robosig::attack_config_from_json(plan.value("attack", Json::object()));
      cfg.kind = k;
      const auto st = p.attack(victim, cfg);
      std::cout << st.id << '\n';
      return 0;
    }
    if (*tar) {
      const auto st = p.tar(victim, robosig::tar_config_from_json(plan.value("tar", Json::object())));
      std::cout << st.id << '\n';
      return 0;
    }
    if (*ev) {
      const auto cp = p.store().load(checkpoint, robosig::arch::kAutoencoder);
      robosig::MessageKey key;
      if (!key_text.empty()) key = robosig::MessageKey::from_string(key_text);
      else if (cp.manifest.key) key = *cp.manifest.key;
      else throw robosig::ContractViolation("checkpoint has no key; pass --key");
      std::vector<robosig::Transformation> extra;
      for (const auto& t : transforms) extra.push_back(robosig::Transformation::parse(t));
      const auto decoder = cp.params.role() == robosig::ParamRole::autoencoder ? robosig::decoder_of(cp.params)
                                                                                : cp.params;
      print_rows(p.evaluate(decoder, key, "eval", cp.manifest.step, cp.manifest.config_hash, {}, extra));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "robosig: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
