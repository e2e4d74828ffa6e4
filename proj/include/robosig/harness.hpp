#pragma once

// Experiment orchestration: artifact store, cached pipeline stages, metric
// emission and table/figure reproduction.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "robosig/config.hpp"
#include "robosig/corpus.hpp"
#include "robosig/metrics.hpp"

namespace robosig {

namespace fs = std::filesystem;

inline fs::path data_root() {
  if (const char* env = std::getenv("ROBOSIG_DATA_DIR"); env && *env) return env;
  return "robosig-data";
}

// Checkpoints live under <root>/checkpoints/<id>, metrics in <root>/metrics.csv
// and report files under <root>/runs/<run_id>.
class ArtifactStore {
 public:
  explicit ArtifactStore(fs::path root = data_root()) : root_(std::move(root)) {}

  const fs::path& root() const noexcept { return root_; }
  fs::path checkpoint_dir(const std::string& id) const { return root_ / "checkpoints" / id; }
  fs::path metrics_path() const { return root_ / "metrics.csv"; }
  fs::path run_dir(const std::string& run_id) const { return root_ / "runs" / run_id; }

  bool has(const std::string& id) const { return fs::exists(checkpoint_dir(id) / "manifest.json"); }

  Checkpoint load(const std::string& id, const std::string& expected_architecture = {}) const {
    if (!has(id)) throw IoError("checkpoint '" + id + "' not found under " + (root_ / "checkpoints").string());
    return load_checkpoint(checkpoint_dir(id), expected_architecture);
  }

  // Written to a scratch directory first so a crash never leaves a half
  // checkpoint under its final id.
  void save(const std::string& id, const Checkpoint& cp) const {
    const fs::path final_dir = checkpoint_dir(id);
    const fs::path scratch = final_dir.string() + ".partial";
    std::error_code ec;
    fs::remove_all(scratch, ec);
    save_checkpoint(cp, scratch);
    fs::remove_all(final_dir, ec);
    fs::rename(scratch, final_dir, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + final_dir.string() + ": " + ec.message());
  }

 private:
  fs::path root_;
};

inline std::string checkpoint_id(const std::string& phase, const std::string& hash) { return phase + "-" + hash; }

struct Corpus {
  ImageBatch<float> train;
  ImageBatch<float> eval;
};

// Synthetic: train seeds 0.., eval seeds kEvalSeedOffset... A directory
// supplies train images first and eval images after them; if it runs short
// the eval split falls back to synthetic images.
inline Corpus load_corpus(const CorpusConfig& c) {
  Corpus out;
  if (c.corpus_path.empty()) {
    out.train = synthetic_corpus<float>(c.train_size, c.image_size, 0);
    out.eval = synthetic_corpus<float>(c.eval_size, c.image_size, kEvalSeedOffset);
    return out;
  }
  const auto files = list_image_files(c.corpus_path);
  require(!files.empty(), "corpus directory " + c.corpus_path + " has no images");
  out.train = load_image_directory<float>(c.corpus_path, c.image_size, 0, std::min(files.size(), c.train_size));
  if (files.size() >= c.train_size + c.eval_size)
    out.eval = load_image_directory<float>(c.corpus_path, c.image_size, c.train_size, c.eval_size);
  else
    out.eval = synthetic_corpus<float>(c.eval_size, c.image_size, kEvalSeedOffset);
  return out;
}

struct StageResult {
  std::string id;
  Checkpoint checkpoint;
};

// Runs pipeline stages against one artifact store. Every stage is keyed by
// the hash of its resolved config plus its parents' ids, so re-running a
// stage with the same inputs reuses the stored checkpoint.
class Pipeline {
 public:
  Pipeline(ArtifactStore store, std::string run_id, CorpusConfig corpus, std::ostream* log = nullptr)
      : store_(std::move(store)),
        run_id_(std::move(run_id)),
        corpus_cfg_(std::move(corpus)),
        sink_(store_.metrics_path()),
        log_(log) {}

  const ArtifactStore& store() const noexcept { return store_; }
  const std::string& run_id() const noexcept { return run_id_; }
  MetricsSink& sink() noexcept { return sink_; }

  const Corpus& corpus() {
    if (!corpus_) corpus_ = std::make_unique<Corpus>(load_corpus(corpus_cfg_));
    return *corpus_;
  }

  std::string pretrain_autoencoder(const AutoencoderTrainConfig& cfg) {
    const Json j = {{"stage", "ae-pretrain"}, {"corpus", to_json(corpus_cfg_)}, {"config", to_json(cfg)}};
    const std::string hash = config_hash(j);
    const std::string id = checkpoint_id("ae-pretrain", hash);
    if (store_.has(id)) return id;
    say("pretraining autoencoder -> " + id);
    auto r = robosig::pretrain_autoencoder(corpus().train, corpus().eval, cfg, [&](const TrainingInterval& iv) {
      say("  ae step " + std::to_string(iv.step) + " loss " + fmt(iv.mean_loss) + " heldout psnr " + fmt(iv.metric));
    });
    store_.save(id, {std::move(r.params), {"ae-pretrain", cfg.steps, {}, hash, "", cfg.seed}});
    return id;
  }

  // Returns the extractor id; the embedder is stored alongside for diagnostics.
  std::string train_hidden(const HiddenTrainConfig& cfg) {
    const Json j = {{"stage", "hidden"}, {"corpus", to_json(corpus_cfg_)}, {"config", to_json(cfg)}};
    const std::string hash = config_hash(j);
    const std::string id = checkpoint_id("hidden-extractor", hash);
    if (store_.has(id)) return id;
    say("training watermark embedder/extractor -> " + id);
    auto r = robosig::train_hidden(corpus().train, corpus().eval, cfg, [&](const TrainingInterval& iv) {
      say("  watermark step " + std::to_string(iv.step) + " loss " + fmt(iv.mean_loss) + " heldout acc " +
          fmt(iv.metric));
    });
    store_.save(checkpoint_id("hidden-embedder", hash), {std::move(r.embedder), {"hidden", cfg.steps, {}, hash, "", cfg.seed}});
    store_.save(id, {std::move(r.extractor), {"hidden", cfg.steps, {}, hash, "", cfg.seed}});
    return id;
  }

  const Substrate& use_substrate(const std::string& autoencoder_id, const std::string& extractor_id) {
    if (!substrate_ || ae_id_ != autoencoder_id || ext_id_ != extractor_id) {
      auto ae = store_.load(autoencoder_id, arch::kAutoencoder).params;
      auto ext = store_.load(extractor_id, arch::kExtractor).params;
      require(ae.role() == ParamRole::autoencoder, autoencoder_id + " is not an autoencoder checkpoint");
      require(ext.role() == ParamRole::extractor, extractor_id + " is not an extractor checkpoint");
      substrate_ = std::make_unique<Substrate>(make_substrate(std::move(ae), std::move(ext), corpus().train, corpus().eval));
      ae_id_ = autoencoder_id;
      ext_id_ = extractor_id;
      original_hash_ = store_.load(autoencoder_id).manifest.config_hash;
    }
    return *substrate_;
  }

  const Substrate& substrate() const {
    require(substrate_ != nullptr, "no substrate selected; call use_substrate first");
    return *substrate_;
  }

  std::string substrate_parent() const { return ae_id_ + "+" + ext_id_; }

  // Identity-transform records for both splits; extra transformations get
  // their own rows with the transformation name appended to the phase.
  std::vector<EvalRecord> evaluate(const ParamSet<float>& decoder, const MessageKey& key, const std::string& phase,
                                   long step, const std::string& hash, const std::optional<LossTerms>& losses = {},
                                   std::span<const Transformation> extra = {}, bool both_splits = true,
                                   const ImageBatch<float>* eval_reference = nullptr,
                                   const ImageBatch<float>* train_reference = nullptr) {
    std::vector<Transformation> ts{Transformation::identity()};
    ts.insert(ts.end(), extra.begin(), extra.end());
    std::vector<EvalRecord> rows;
    const auto& s = substrate();
    auto add = [&](const LatentSplit& split, const char* name, const ImageBatch<float>* ref) {
      const auto results = evaluate_decoder(decoder, s.extractor, split, key, ts, derive_seed(step, 0xe7a1), ref);
      for (const auto& r : results) {
        EvalRecord rec;
        rec.run_id = run_id_;
        rec.phase = r.transformation.kind == TransformKind::identity ? phase : phase + "[" + r.transformation.name() + "]";
        rec.step = step;
        rec.split = name;
        rec.bit_accuracy = r.bit_accuracy;
        rec.psnr_db = r.psnr_db;
        if (losses) {
          rec.loss_m = losses->message;
          rec.loss_i = losses->image;
          rec.loss_total = losses->total;
        }
        rec.config_hash = hash;
        rows.push_back(rec);
      }
    };
    if (both_splits) add(s.train, "train", train_reference);
    add(s.eval, "eval", eval_reference);
    sink_.append(rows);
    return rows;
  }

  static double eval_accuracy(const std::vector<EvalRecord>& rows) { return find(rows, "eval").bit_accuracy; }
  static const EvalRecord& find(const std::vector<EvalRecord>& rows, const std::string& split,
                                const std::string& phase = {}) {
    for (const auto& r : rows)
      if (r.split == split && (phase.empty() || r.phase == phase)) return r;
    throw ContractViolation("no " + split + " record found");
  }

  // Records for the never-fine-tuned decoder against `key`.
  std::vector<EvalRecord> evaluate_original(const MessageKey& key) {
    return evaluate(substrate().original_decoder(), key, "original", 0, original_hash_);
  }

  StageResult signature(const SignatureConfig& cfg) {
    const auto& s = substrate();
    const Json j = {{"stage", "signature"}, {"parent", substrate_parent()}, {"config", to_json(cfg)}};
    const std::string hash = config_hash(j);
    const std::string id = checkpoint_id("signature", hash);
    if (store_.has(id)) return {id, store_.load(id, arch::kAutoencoder)};
    say("rooting key " + cfg.target_key.to_string() + " -> " + id);
    auto cp = run_signature(s, cfg, [&](long step, const ParamSet<float>& d, const LossTerms& l) {
      const auto rows = evaluate(d, cfg.target_key, "signature", step, hash, l);
      say("  signature step " + std::to_string(step) + " L " + fmt(l.total) + " eval acc " + fmt(eval_accuracy(rows)));
    });
    cp.manifest.config_hash = hash;
    cp.manifest.parent_checkpoint_id = substrate_parent();
    store_.save(id, cp);
    return {id, std::move(cp)};
  }

  // `record_phase` overrides the metrics phase label (e.g. for Figure-1 rows).
  StageResult attack(const std::string& victim_id, const AttackConfig& cfg, const std::string& record_phase = {}) {
    const auto& s = substrate();
    const Checkpoint victim = store_.load(victim_id, arch::kAutoencoder);
    require(victim.manifest.key.has_value(), "victim " + victim_id + " has no rooted key");
    const MessageKey key = *victim.manifest.key;
    const Json j = {{"stage", "attack"}, {"parent", victim_id}, {"config", to_json(cfg)}};
    const std::string hash = config_hash(j);
    const std::string phase = attack_phase(cfg.kind);
    const std::string id = checkpoint_id(phase, hash);
    if (store_.has(id)) return {id, store_.load(id, arch::kAutoencoder)};
    const std::string label = record_phase.empty() ? phase : record_phase;
    say("attack " + to_string(cfg.kind) + " on " + victim_id + " -> " + id);

    const bool purify = cfg.kind == AttackKind::purification;
    ImageBatch<float> victim_eval, victim_train;
    if (purify) {
      victim_eval = decode_split(victim.params, s.eval);
      victim_train = decode_split(victim.params, s.train);
    }
    auto observe = [&](long step, const ParamSet<float>& d, const LossTerms& l) {
      const auto rows = evaluate(d, key, label, step, hash, l);
      if (purify) evaluate(d, key, label + "[vs-watermarked]", step, hash, l, {}, true, &victim_eval, &victim_train);
      say("  " + label + " step " + std::to_string(step) + " eval acc " + fmt(eval_accuracy(rows)));
    };
    auto cp = run_attack(victim, s, cfg, observe);
    cp.manifest.config_hash = hash;
    cp.manifest.parent_checkpoint_id = victim_id;
    store_.save(id, cp);
    return {id, std::move(cp)};
  }

  StageResult collude(const std::vector<std::string>& victim_ids) {
    require(victim_ids.size() >= 2, "collusion needs at least two victims");
    std::vector<Checkpoint> victims;
    for (const auto& v : victim_ids) victims.push_back(store_.load(v, arch::kAutoencoder));
    auto sorted = victim_ids;
    std::sort(sorted.begin(), sorted.end());
    const std::string hash = config_hash({{"stage", "collusion"}, {"parents", sorted}});
    const std::string id = checkpoint_id("attack-collude", hash);
    if (store_.has(id)) return {id, store_.load(id, arch::kAutoencoder)};
    auto cp = collusion_attack(victims);
    cp.manifest.config_hash = hash;
    std::string parents;
    for (const auto& v : sorted) parents += (parents.empty() ? "" : "+") + v;
    cp.manifest.parent_checkpoint_id = parents;
    for (const auto& v : victims)
      if (v.manifest.key) evaluate(cp.params, *v.manifest.key, "attack-collude[" + v.manifest.key->to_string() + "]", 0, hash);
    store_.save(id, cp);
    return {id, std::move(cp)};
  }

  StageResult tar(const std::string& victim_id, const TarConfig& cfg) {
    const auto& s = substrate();
    const Checkpoint victim = store_.load(victim_id, arch::kAutoencoder);
    const Json j = {{"stage", "tar"}, {"parent", victim_id}, {"config", to_json(cfg)}};
    const std::string hash = config_hash(j);
    const std::string id = checkpoint_id("tar", hash);
    if (store_.has(id)) return {id, store_.load(id, arch::kAutoencoder)};
    require(victim.manifest.key.has_value(), "TAR victim " + victim_id + " has no rooted key");
    const MessageKey key = *victim.manifest.key;
    say("TAR N=" + std::to_string(cfg.outer_steps) + " K=" + std::to_string(cfg.inner_attacks) +
        " attack_steps=" + std::to_string(cfg.attack_steps) + " on " + victim_id + " -> " + id);
    auto cp = tar_finetune(victim, s, cfg, [&](const TarStepInfo& info, const ParamSet<float>& theta) {
      const bool last = info.step == cfg.outer_steps;
      const auto rows = evaluate(theta, key, "tar", info.step, hash, info.retain, {}, last);
      say("  tar step " + std::to_string(info.step) + " L_TR " + fmt(info.tr.total) + " retain " +
          fmt(info.retain.total) + " eval acc " + fmt(eval_accuracy(rows)) +
          (info.skipped_attacks ? " skipped " + std::to_string(info.skipped_attacks) : ""));
    });
    cp.manifest.config_hash = hash;
    cp.manifest.parent_checkpoint_id = victim_id;
    store_.save(id, cp);
    return {id, std::move(cp)};
  }

  void say(const std::string& line) const {
    if (log_) *log_ << line << std::endl;
  }

  static std::string fmt(double v, int digits = 4) {
    std::ostringstream oss;
    oss << std::fixed << std::setprecision(digits) << v;
    return oss.str();
  }

 private:
  ArtifactStore store_;
  std::string run_id_;
  CorpusConfig corpus_cfg_;
  MetricsSink sink_;
  std::ostream* log_;
  std::unique_ptr<Corpus> corpus_;
  std::unique_ptr<Substrate> substrate_;
  std::string ae_id_, ext_id_, original_hash_;
};

inline Json load_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + file.string() + ": " + e.what());
  }
}

inline std::string plan_run_id(const Json& plan) { return plan.value("run_id", std::string("default")); }

inline Pipeline make_pipeline(const ArtifactStore& store, const Json& plan, std::ostream* log) {
  return Pipeline(store, plan_run_id(plan), corpus_config_from_json(plan.value("corpus", Json::object())), log);
}

// Stage 0 (cached) followed by selecting its outputs as the substrate.
inline const Substrate& prepare_substrate(Pipeline& p, const Json& plan) {
  const auto ae = p.pretrain_autoencoder(autoencoder_config_from_json(plan.value("autoencoder", Json::object())));
  const auto ext = p.train_hidden(hidden_config_from_json(plan.value("watermark", Json::object())));
  return p.use_substrate(ae, ext);
}

// ---------------------------------------------------------------------------
// Figure-1 scatter data

inline constexpr const char* kUndefendedPostAttack = "undefended-post-attack";
inline constexpr const char* kTarPostAttack = "tar-post-attack";

struct ScatterPoint {
  std::string label;
  std::string config_hash;
  std::string split;
  double psnr_db = 0.0;
  double bit_accuracy = 0.0;
};

// Final-step point of every post-attack curve recorded for `run_id`.
inline std::vector<ScatterPoint> scatter_points(const std::vector<EvalRecord>& rows, const std::string& run_id) {
  std::map<std::tuple<std::string, std::string, std::string>, EvalRecord> last;
  for (const auto& r : rows) {
    if (r.run_id != run_id || (r.phase != kUndefendedPostAttack && r.phase != kTarPostAttack)) continue;
    const auto k = std::make_tuple(r.phase, r.config_hash, r.split);
    auto it = last.find(k);
    if (it == last.end() || r.step >= it->second.step) last[k] = r;
  }
  std::vector<ScatterPoint> out;
  for (const auto& [k, r] : last) out.push_back({r.phase, r.config_hash, r.split, r.psnr_db, r.bit_accuracy});
  return out;
}

inline fs::path plot_data(const ArtifactStore& store, const std::string& run_id) {
  const auto points = scatter_points(read_metrics(store.metrics_path()), run_id);
  require(!points.empty(), "no post-attack records for run '" + run_id + "'");
  const fs::path dir = store.run_dir(run_id);
  fs::create_directories(dir);
  const fs::path file = dir / "figure1.csv";
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << "label,config_hash,split,psnr_db,bit_accuracy\n";
  for (const auto& p : points)
    out << p.label << ',' << p.config_hash << ',' << p.split << ',' << detail::format_double(p.psnr_db) << ','
        << detail::format_double(p.bit_accuracy) << '\n';
  return file;
}

// ---------------------------------------------------------------------------
// Table reproduction

struct TableRow {
  std::string table;
  std::string row;
  std::string split;
  double psnr_db = 0.0;
  double bit_accuracy = 0.0;
  std::string note;
};

struct ReportResult {
  std::vector<TableRow> rows;
  std::vector<std::string> failures;
  fs::path directory;
};

namespace detail {

inline void write_report(const ReportResult& r) {
  fs::create_directories(r.directory);
  {
    std::ofstream csv(r.directory / "tables.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write tables.csv in " + r.directory.string());
    csv << "table,row,split,psnr_db,bit_accuracy,note\n";
    for (const auto& t : r.rows)
      csv << t.table << ',' << t.row << ',' << t.split << ',' << format_double(t.psnr_db) << ','
          << format_double(t.bit_accuracy) << ',' << t.note << '\n';
  }
  std::ofstream txt(r.directory / "tables.txt", std::ios::trunc);
  if (!txt) throw IoError("cannot write tables.txt in " + r.directory.string());
  std::string current;
  for (const auto& t : r.rows) {
    if (t.table != current) {
      current = t.table;
      txt << '\n' << current << '\n' << std::left << std::setw(34) << "row" << std::setw(8) << "split"
          << std::right << std::setw(12) << "PSNR" << std::setw(16) << "Bit Accuracy" << "  note\n";
    }
    txt << std::left << std::setw(34) << t.row << std::setw(8) << t.split << std::right << std::fixed
        << std::setprecision(6) << std::setw(12) << t.psnr_db << std::setw(16) << t.bit_accuracy << "  "
        << t.note << '\n';
  }
  for (const auto& f : r.failures) txt << "\nFAILED: " << f << '\n';
}

}  // namespace detail

// Runs the whole pipeline described by a run plan and writes tables.txt,
// tables.csv and figure1.csv under runs/<run_id>. A failing stage is
// recorded and the remaining independent stages still run.
inline ReportResult reproduce_tables(const Json& plan, const ArtifactStore& store, std::ostream* log = nullptr) {
  detail::check_keys(plan,
                     {"run_id", "description", "corpus", "autoencoder", "watermark", "signature", "attack",
                      "post_attack_seeds", "tar", "tar_runs"},
                     "run plan");
  const std::string run_id = plan_run_id(plan);
  Pipeline p = make_pipeline(store, plan, log);
  ReportResult report;
  report.directory = store.run_dir(run_id);

  auto attempt = [&](const std::string& what, auto&& fn) {
    try {
      fn();
      return true;
    } catch (const std::exception& e) {
      report.failures.push_back(what + ": " + e.what());
      p.say("FAILED " + what + ": " + e.what());
      return false;
    }
  };
  auto add_rows = [&](const std::string& table, const std::string& row, const std::vector<EvalRecord>& recs,
                      const std::string& note = {}) {
    for (const auto& r : recs)
      if (r.phase.find('[') == std::string::npos)
        report.rows.push_back({table, row, r.split, r.psnr_db, r.bit_accuracy, note});
  };
  auto final_records = [&](const StageResult& st, const MessageKey& key, const std::string& phase) {
    return p.evaluate(st.checkpoint.params, key, phase + "-final", st.checkpoint.manifest.step,
                      st.checkpoint.manifest.config_hash);
  };

  const bool stage0 = attempt("stage 0", [&] { prepare_substrate(p, plan); });
  if (!stage0) {
    detail::write_report(report);
    return report;
  }

  const auto sig_cfg = signature_config_from_json(plan.value("signature", Json::object()), p.substrate().key_bits());
  const MessageKey& key = sig_cfg.target_key;
  add_rows("Baseline", "original decoder", p.evaluate_original(key));
  StageResult sig;
  if (!attempt("signature", [&] { sig = p.signature(sig_cfg); })) {
    detail::write_report(report);
    return report;
  }
  add_rows("Baseline", "signature decoder", final_records(sig, key, "signature"));

  const Json attack_json = plan.value("attack", Json::object());
  std::vector<std::uint64_t> post_seeds = plan.value("post_attack_seeds", std::vector<std::uint64_t>{101});
  attempt("random key attack", [&] {
    auto cfg = attack_config_from_json(attack_json);
    cfg.kind = AttackKind::random_key;
    const auto st = p.attack(sig.id, cfg);
    add_rows("Random keys in each training step (Strategy 1)", "Strategy-1", final_records(st, key, "attack-random-key"));
  });
  attempt("gradual random key attack", [&] {
    auto cfg = attack_config_from_json(attack_json);
    cfg.kind = AttackKind::gradual_random_key;
    const auto st = p.attack(sig.id, cfg);
    add_rows("Gradual randomness (Strategy 2)", "Strategy-2", final_records(st, key, "attack-gradual"));
  });
  for (auto seed : post_seeds)
    attempt("undefended post-attack", [&] {
      auto cfg = attack_config_from_json(attack_json);
      cfg.kind = AttackKind::random_key;
      cfg.seed = seed;
      p.attack(sig.id, cfg, kUndefendedPostAttack);
    });

  const Json tar_base = plan.value("tar", Json::object());
  for (const auto& run : plan.value("tar_runs", Json::array())) {
    const Json nominal = run.value("nominal", Json::object());
    Json overrides = run;
    overrides.erase("nominal");
    const auto label = "N=" + std::to_string(nominal.value("outer_steps", 0)) +
                       " K=" + std::to_string(nominal.value("inner_attacks", 0)) +
                       " attack_steps=" + std::to_string(nominal.value("attack_steps", 0));
    attempt("TAR " + label, [&] {
      Json merged = tar_base;
      merged.update(overrides);
      const auto cfg = tar_config_from_json(merged);
      const auto st = p.tar(sig.id, cfg);
      const std::string note = "run as N=" + std::to_string(cfg.outer_steps) + " K=" +
                               std::to_string(cfg.inner_attacks) + " attack_steps=" + std::to_string(cfg.attack_steps);
      add_rows("TAR: outer steps N / inner attacks K / attack steps", label, final_records(st, key, "tar"), note);
      for (auto seed : post_seeds) {
        auto acfg = attack_config_from_json(attack_json);
        acfg.kind = AttackKind::random_key;
        acfg.seed = seed;
        const auto post = p.attack(st.id, acfg, kTarPostAttack);
        add_rows("TAR post-attack (fresh random key attack)", label,
                 final_records(post, key, "tar-post-attack"), note + " seed=" + std::to_string(seed));
      }
    });
  }
  for (auto seed : post_seeds) {
    auto acfg = attack_config_from_json(attack_json);
    acfg.kind = AttackKind::random_key;
    acfg.seed = seed;
    attempt("undefended post-attack rows", [&] {
      const auto post = p.attack(sig.id, acfg, kUndefendedPostAttack);
      add_rows("Undefended post-attack (fresh random key attack)", "signature decoder",
               final_records(post, key, "undefended-post-attack"), "seed=" + std::to_string(seed));
    });
  }

  detail::write_report(report);
  attempt("figure 1 data", [&] { plot_data(store, run_id); });
  if (!report.failures.empty()) detail::write_report(report);
  return report;
}

}  // namespace robosig
