#include "kdistill/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "kdistill/checkpoint.hpp"
#include "kdistill/report.hpp"

namespace kdistill {

namespace {

// ---------------------------------------------------------------------------
// Manifests: every stage records its config section hashes; downstream
// stages refuse to run against artifacts built from a different config.
// ---------------------------------------------------------------------------

std::string manifest_path(const RunConfig& cfg, const std::string& stage) {
  return cfg.out_dir + "/manifest/" + stage + ".json";
}

void write_stage_manifest(const RunConfig& cfg, const std::string& stage,
                          const std::vector<std::string>& input_files,
                          const std::vector<std::string>& output_files) {
  ensure_dir(cfg.out_dir + "/manifest");
  json m;
  m["stage"] = stage;
  m["code_version"] = kCodeVersion;
  m["config_hash"] = {{"all", cfg.section_hash("all")},
                      {"world", cfg.section_hash("world")},
                      {"model", cfg.section_hash("model")},
                      {"pretrain", cfg.section_hash("pretrain")},
                      {"generation", cfg.section_hash("generation")},
                      {"edit", cfg.section_hash("edit")}};
  json inputs = json::object();
  for (const auto& f : input_files) inputs[f] = file_hash(f);
  m["inputs"] = inputs;
  m["outputs"] = output_files;
  write_file(manifest_path(cfg, stage), m.dump(2) + "\n");
}

void require_stage(const RunConfig& cfg, const std::string& stage,
                   const std::vector<std::string>& sections) {
  json m;
  try {
    m = json::parse(read_file(manifest_path(cfg, stage)));
  } catch (const MissingArtifactError&) {
    throw MissingArtifactError("stage '" + stage + "' has not been run in " + cfg.out_dir);
  }
  for (const auto& s : sections) {
    const std::string expect = cfg.section_hash(s);
    const std::string got = m.at("config_hash").at(s);
    if (expect != got) {
      throw MissingArtifactError("stage '" + stage + "' was built with a different '" + s +
                                 "' config (hash " + got + " vs " + expect + "); rerun it");
    }
  }
}

void dump_config(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_file(cfg.out_dir + "/config.json", cfg.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared loading helpers
// ---------------------------------------------------------------------------

struct RunContext {
  World world;
  Vocabulary vocab;
  ModelConfig model_cfg;
};

RunContext load_context(const RunConfig& cfg) {
  RunContext ctx;
  ctx.world = load_world(cfg.world_dir());
  ctx.vocab = Vocabulary::load(cfg.world_dir() + "/vocab.txt");
  ctx.model_cfg = cfg.model;
  ctx.model_cfg.vocab_size = ctx.vocab.size();
  return ctx;
}

std::vector<const EntityRecord*> selected_novel(const World& world, const RunConfig& cfg) {
  auto novel = world.novel();
  if (cfg.edit_entities > 0 && cfg.edit_entities < static_cast<int>(novel.size())) {
    novel.resize(static_cast<std::size_t>(cfg.edit_entities));
  }
  if (novel.empty()) throw ConfigError("no novel entities selected");
  return novel;
}

std::map<std::string, TransferSet> load_transfer_file(const std::string& path,
                                                      const Vocabulary& vocab) {
  std::map<std::string, TransferSet> out;
  for (const auto& row : read_jsonl(path)) {
    Continuation c;
    c.tokens = encode(row.at("text").get<std::string>(), vocab);
    c.ell = row.at("ell");
    c.mention_prepended = row.at("mention_prepended");
    TransferSet& ts = out[row.at("entity_id")];
    ts.entity_id = row.at("entity_id");
    ts.continuations.push_back(std::move(c));
  }
  return out;
}

EditTask make_task(const EntityRecord& e, const Vocabulary& vocab, TransferSet transfer) {
  EditTask t;
  t.entity_id = e.id;
  t.entity_name = encode(e.name, vocab);
  t.definition = encode(e.definition, vocab);
  t.transfer = std::move(transfer);
  return t;
}

std::vector<EditTask> build_tasks(const std::vector<const EntityRecord*>& entities,
                                  const Vocabulary& vocab,
                                  const std::map<std::string, TransferSet>& transfer) {
  std::vector<EditTask> tasks;
  for (const auto* e : entities) {
    auto it = transfer.find(e->id);
    if (it == transfer.end()) {
      throw MissingArtifactError("no transfer set for entity " + e->id + "; rerun gen-transfer");
    }
    tasks.push_back(make_task(*e, vocab, it->second));
  }
  return tasks;
}

std::vector<TransferSet> generate_transfer_sets(const Model& generator, const Vocabulary& vocab,
                                                const std::vector<const EntityRecord*>& entities,
                                                const GenerationSpec& spec,
                                                std::vector<std::string>* warnings = nullptr) {
  std::vector<TransferSet> out;
  for (const auto* e : entities) {
    out.push_back(build_transfer_set(generator, entity_tokens(*e, vocab), spec, warnings));
  }
  return out;
}

int matched_ft_epochs(const RunConfig& cfg) {
  return cfg.edit.epochs * cfg.edit.n_continuations;
}

// Runs one parameter-mutating editor for one entity, starting from base.
Model run_editor_single(EditorKind kind, const Model& base, const EditTask& task,
                        const RunConfig& cfg, EditRecord* rec_out = nullptr) {
  Model student = base.deep_copy(Role::student);
  EditConfig ec = cfg.editor_config(kind);
  EditRecord rec;
  switch (kind) {
    case EditorKind::distill:
      rec = distill_entity(base, student, task, ec);
      break;
    case EditorKind::ft_definition_full:
      ec.epochs = matched_ft_epochs(cfg);  // same update count as distillation
      rec = finetune_definition(student, task.definition, ec, FinetuneScope::full);
      break;
    case EditorKind::ft_definition_last_layer:
      ec.epochs = matched_ft_epochs(cfg);
      rec = finetune_definition(student, task.definition, ec, FinetuneScope::last_layer);
      break;
    case EditorKind::ft_transfer:
      rec = finetune_transfer(student, task, ec);
      break;
    default:
      throw ConfigError(std::string("editor '") + editor_name(kind) + "' does not mutate parameters");
  }
  rec.entity_ids = {task.entity_id};
  if (rec_out) *rec_out = rec;
  return student;
}

json edit_record_json(const EditRecord& rec, const EditConfig& ec) {
  return json{{"entity_ids", rec.entity_ids},
              {"config",
               {{"learning_rate", ec.learning_rate},
                {"epochs", ec.epochs},
                {"temperature", ec.temperature},
                {"n_continuations", ec.n_continuations},
                {"seed", ec.seed},
                {"ablation", ablation_name(ec.ablation)}}},
              {"step_losses", rec.step_losses},
              {"skipped", rec.skipped},
              {"definition_ppl_trace", rec.definition_ppl_trace},
              {"wall_seconds", rec.wall_seconds},
              {"checkpoint", rec.checkpoint_path}};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// gen-world
// ---------------------------------------------------------------------------

void cmd_gen_world(const RunConfig& cfg) {
  dump_config(cfg);
  WorldSpec ws = cfg.world;
  World world = generate_world(ws);
  save_world(world, cfg.world_dir());
  write_stage_manifest(cfg, "gen-world", {},
                       {cfg.world_dir() + "/entities.jsonl", cfg.world_dir() + "/corpus.txt",
                        cfg.world_dir() + "/probes.jsonl", cfg.world_dir() + "/specificity.jsonl",
                        cfg.world_dir() + "/schema.json", cfg.world_dir() + "/vocab.txt"});
  std::cout << "gen-world: " << world.entities.size() << " entities ("
            << world.popular().size() << " popular, " << world.novel().size() << " novel), "
            << world.corpus.size() << " documents, " << world.probes.size() << " probes\n";
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

void cmd_pretrain(const RunConfig& cfg) {
  dump_config(cfg);
  require_stage(cfg, "gen-world", {"world"});
  RunContext ctx = load_context(cfg);

  std::vector<TokenSeq> docs;
  docs.reserve(ctx.world.corpus.size());
  for (const auto& line : ctx.world.corpus) {
    TokenSeq doc = encode(line, ctx.vocab);
    doc.push_back(Vocabulary::kEos);
    docs.push_back(std::move(doc));
  }

  Model m(ctx.model_cfg, cfg.pretrain.seed, Role::base);
  std::ostringstream log;
  double last_loss = 0.0;
  pretrain(m, docs, cfg.pretrain, [&](long step, double loss, double lr) {
    log << json{{"step", step}, {"loss", loss}, {"lr", lr}}.dump() << '\n';
    last_loss = loss;
  });
  write_file(cfg.out_dir + "/pretrain_log.jsonl", log.str());
  save_checkpoint(m, cfg.base_checkpoint());
  write_stage_manifest(cfg, "pretrain", {cfg.world_dir() + "/vocab.txt"},
                       {cfg.base_checkpoint(), cfg.out_dir + "/pretrain_log.jsonl"});
  std::cout << "pretrain: " << docs.size() << " documents, final loss " << last_loss << "\n";
}

// ---------------------------------------------------------------------------
// gen-transfer
// ---------------------------------------------------------------------------

void cmd_gen_transfer(const RunConfig& cfg) {
  dump_config(cfg);
  require_stage(cfg, "gen-world", {"world"});
  require_stage(cfg, "pretrain", {"world", "model", "pretrain"});
  RunContext ctx = load_context(cfg);
  Model generator = load_checkpoint(cfg.base_checkpoint());
  generator.set_role(Role::generator);

  GenerationSpec spec = cfg.generation;
  spec.prompt = encode(cfg.generation_prompt, ctx.vocab);
  const auto entities = selected_novel(ctx.world, cfg);

  std::vector<std::string> warnings;
  std::vector<json> rows;
  std::ostringstream stats_csv;
  stats_csv << "entity_id,mean_tokens,pct_tokens_in_definition,mean_tokens_after_ell\n";
  TransferStats agg;
  for (const auto* e : entities) {
    const TransferSet ts = build_transfer_set(generator, entity_tokens(*e, ctx.vocab), spec, &warnings);
    for (const auto& c : ts.continuations) {
      rows.push_back({{"entity_id", e->id},
                      {"text", decode(c.tokens, ctx.vocab)},
                      {"ell", c.ell},
                      {"mention_prepended", c.mention_prepended}});
    }
    const TransferStats st = transfer_stats(ts, encode(e->definition, ctx.vocab));
    stats_csv << e->id << ',' << st.mean_tokens << ',' << st.pct_tokens_in_definition << ','
              << st.mean_tokens_after_ell << '\n';
    agg.mean_tokens += st.mean_tokens;
    agg.pct_tokens_in_definition += st.pct_tokens_in_definition;
    agg.mean_tokens_after_ell += st.mean_tokens_after_ell;
  }
  const double n = static_cast<double>(entities.size());
  stats_csv << "MEAN," << agg.mean_tokens / n << ',' << agg.pct_tokens_in_definition / n << ','
            << agg.mean_tokens_after_ell / n << '\n';

  ensure_dir(cfg.out_dir + "/transfer");
  write_jsonl(cfg.transfer_path(), rows);
  write_file(cfg.out_dir + "/transfer/stats.csv", stats_csv.str());
  for (const auto& w : warnings) std::cout << "gen-transfer warning: " << w << "\n";
  write_stage_manifest(cfg, "gen-transfer", {cfg.base_checkpoint()},
                       {cfg.transfer_path(), cfg.out_dir + "/transfer/stats.csv"});
  std::cout << "gen-transfer: " << rows.size() << " continuations for " << entities.size()
            << " entities (" << warnings.size() << " warnings)\n";
}

// ---------------------------------------------------------------------------
// edit
// ---------------------------------------------------------------------------

void cmd_edit(const RunConfig& cfg) {
  dump_config(cfg);
  require_stage(cfg, "gen-world", {"world"});
  require_stage(cfg, "pretrain", {"world", "model", "pretrain"});

  for (EditorKind k : cfg.editors) {
    if (k == EditorKind::prepend || k == EditorKind::prepend_random) {
      throw ConfigError(std::string("editor '") + editor_name(k) +
                        "' evaluates in context only; it has no parameters to edit. Run it via "
                        "'eval' instead.");
    }
    if (k == EditorKind::external) {
      throw ConfigError(
          "editor 'external' is produced outside this tool; place its checkpoints under "
          "edits/external/ and run 'eval'");
    }
  }

  RunContext ctx = load_context(cfg);
  const Model base = load_checkpoint(cfg.base_checkpoint());
  const auto entities = selected_novel(ctx.world, cfg);

  const bool needs_transfer =
      std::any_of(cfg.editors.begin(), cfg.editors.end(), [](EditorKind k) {
        return k == EditorKind::distill || k == EditorKind::ft_transfer;
      });
  std::map<std::string, TransferSet> transfer;
  if (needs_transfer) {
    require_stage(cfg, "gen-transfer", {"world", "model", "generation"});
    transfer = load_transfer_file(cfg.transfer_path(), ctx.vocab);
  }

  std::vector<EditTask> tasks;
  for (const auto* e : entities) {
    TransferSet ts;
    if (needs_transfer) {
      auto it = transfer.find(e->id);
      if (it == transfer.end()) {
        throw MissingArtifactError("no transfer set for entity " + e->id + "; rerun gen-transfer");
      }
      ts = it->second;
    }
    tasks.push_back(make_task(*e, ctx.vocab, std::move(ts)));
  }
  if (cfg.edit.ablation != AblationMode::none) {
    tasks = apply_ablation(tasks, cfg.edit.ablation, cfg.edit.seed);
  }

  std::vector<std::string> outputs;
  for (EditorKind kind : cfg.editors) {
    const std::string dir = cfg.out_dir + "/edits/" + editor_name(kind);
    ensure_dir(dir);
    std::vector<json> records;

    if (cfg.edit_mode == "batch") {
      if (kind != EditorKind::distill) {
        throw ConfigError("batch edit mode supports only the distill editor");
      }
      Model student = base.deep_copy(Role::student);
      EditConfig ec = cfg.editor_config(kind);
      EditRecord rec = distill_batch(base, student, tasks, ec);
      rec.checkpoint_path = dir + "/batch.ckpt";
      save_checkpoint(student, rec.checkpoint_path);
      records.push_back(edit_record_json(rec, ec));
      outputs.push_back(rec.checkpoint_path);
    } else {
      for (const auto& task : tasks) {
        EditRecord rec;
        Model student = run_editor_single(kind, base, task, cfg, &rec);
        rec.checkpoint_path = dir + "/" + task.entity_id + ".ckpt";
        save_checkpoint(student, rec.checkpoint_path);
        records.push_back(edit_record_json(rec, cfg.editor_config(kind)));
        outputs.push_back(rec.checkpoint_path);
      }
    }
    write_jsonl(dir + "/edit_records.jsonl", records);
  }
  write_stage_manifest(cfg, "edit", {cfg.base_checkpoint()}, outputs);
  std::cout << "edit: " << cfg.editors.size() << " editors x " << tasks.size() << " entities ("
            << cfg.edit_mode << " mode)\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

namespace {

struct EntityEval {
  const EntityRecord* entity = nullptr;
  std::vector<ProbeExample> probes;
  TokenSeq definition;
};

// Per-editor evaluation state shared between single and batch modes.
struct EditorEval {
  EditorMetrics metrics;
  std::vector<PerProbeRow> per_probe;
  std::vector<double> post_vec;  // pooled per-probe post target PPL
};

}  // namespace

void cmd_eval(const RunConfig& cfg) {
  dump_config(cfg);
  require_stage(cfg, "gen-world", {"world"});
  require_stage(cfg, "pretrain", {"world", "model", "pretrain"});
  RunContext ctx = load_context(cfg);
  const Model base = load_checkpoint(cfg.base_checkpoint());
  const auto entities = selected_novel(ctx.world, cfg);
  const std::string eval_dir = cfg.out_dir + "/eval";
  ensure_dir(eval_dir);

  // Pre-edit state, recorded once from the base checkpoint.
  std::vector<EntityEval> evals;
  std::vector<double> pre_vec;
  std::vector<std::string> probe_ids;
  double acc_pre_correct = 0.0;
  long probe_count = 0;
  std::vector<double> def_ppl_pre;
  for (const auto* e : entities) {
    EntityEval ev;
    ev.entity = e;
    std::vector<ProbeText> texts;
    for (const auto* p : ctx.world.probes_for(e->id)) texts.push_back(*p);
    ev.probes = encode_probes(texts, ctx.vocab);
    ev.definition = encode(e->definition, ctx.vocab);
    eval_target_ppl(base, ev.probes, nullptr, &pre_vec);
    for (const auto& p : ev.probes) probe_ids.push_back(p.id);
    const auto acc = eval_accuracy(base, ev.probes);
    acc_pre_correct += acc.accuracy * static_cast<double>(ev.probes.size());
    probe_count += static_cast<long>(ev.probes.size());
    def_ppl_pre.push_back(eval_definition_ppl(base, ev.definition));
    evals.push_back(std::move(ev));
  }
  const double target_pre = mean_of(pre_vec);
  const double acc_pre = acc_pre_correct / static_cast<double>(probe_count);

  const auto spec_probes = encode_probes(ctx.world.specificity, ctx.vocab);
  std::vector<double> spec_pre_vec;
  const double spec_pre = eval_target_ppl(base, spec_probes, nullptr, &spec_pre_vec);
  std::set<std::string> edited_ids;
  for (const auto* e : entities) edited_ids.insert(e->id);

  // Editors listed in config plus any externally provided checkpoint dirs.
  std::vector<EditorKind> editors = cfg.editors;
  {
    const std::string ext_dir = cfg.out_dir + "/edits/external";
    if (std::filesystem::exists(ext_dir) &&
        std::find(editors.begin(), editors.end(), EditorKind::external) == editors.end()) {
      editors.push_back(EditorKind::external);
    }
  }

  std::vector<EditorMetrics> summary;
  std::vector<PerProbeRow> per_probe_rows;
  std::map<std::string, std::vector<double>> post_vectors;
  std::ostringstream def_ppl_csv;
  def_ppl_csv << "editor,entity_id,def_ppl_pre,def_ppl_post\n";

  for (EditorKind kind : editors) {
    EditorMetrics m;
    m.editor = editor_name(kind);
    m.target_pre = target_pre;
    m.spec_pre = spec_pre;
    m.acc_pre = acc_pre;
    m.has_accuracy = true;
    m.def_ppl_pre = mean_of(def_ppl_pre);

    std::vector<double> post_vec;
    double acc_post_correct = 0.0;
    std::vector<double> spec_post_means;
    std::vector<double> def_ppl_post;

    if (kind == EditorKind::prepend || kind == EditorKind::prepend_random) {
      for (std::size_t i = 0; i < evals.size(); ++i) {
        const EntityEval& ev = evals[i];
        TokenSeq prep;
        if (kind == EditorKind::prepend) {
          prep = ev.definition;
        } else {
          // Uniform draw from the other entities, never the probe's own.
          Rng rng = Rng::stream(cfg.seed, "eval-prepend-random",
                                fnv1a(ev.entity->id.data(), ev.entity->id.size()));
          std::size_t j = static_cast<std::size_t>(rng.uniform_int(evals.size() - 1));
          if (j >= i) ++j;
          prep = evals[j].definition;
        }
        eval_target_ppl(base, ev.probes, &prep, &post_vec);
        const auto acc = eval_accuracy(base, ev.probes, &prep);
        acc_post_correct += acc.accuracy * static_cast<double>(ev.probes.size());
      }
      // Evaluation-time editors leave the model untouched.
      m.spec_post = spec_pre;
      m.has_definition_ppl = false;
    } else {
      // Parameter editors: one checkpoint per entity (single) or one overall
      // (batch), produced by cmd_edit or externally.
      const std::string dir = cfg.out_dir + "/edits/" + editor_name(kind);
      const std::string batch_ckpt = dir + "/batch.ckpt";
      const bool batch = std::filesystem::exists(batch_ckpt);
      Model batch_model = base;  // placeholder; reloaded below when batch
      if (batch) batch_model = load_checkpoint(batch_ckpt);

      for (const auto& ev : evals) {
        const Model* post_model = &batch_model;
        Model single = base;  // reused storage for the single-entity case
        if (!batch) {
          const std::string ckpt = dir + "/" + ev.entity->id + ".ckpt";
          single = load_checkpoint(ckpt);
          post_model = &single;
        }
        eval_target_ppl(*post_model, ev.probes, nullptr, &post_vec);
        const auto acc = eval_accuracy(*post_model, ev.probes);
        acc_post_correct += acc.accuracy * static_cast<double>(ev.probes.size());
        const auto spec = eval_specificity(*post_model, spec_probes, spec_pre_vec, edited_ids);
        spec_post_means.push_back(spec.post_mean);
        const double dppl = eval_definition_ppl(*post_model, ev.definition);
        def_ppl_post.push_back(dppl);
        def_ppl_csv << m.editor << ',' << ev.entity->id << ','
                    << eval_definition_ppl(base, ev.definition) << ',' << dppl << '\n';
      }
      m.spec_post = mean_of(spec_post_means);
      m.has_definition_ppl = true;
      m.def_ppl_post = mean_of(def_ppl_post);
    }

    m.target_post = mean_of(post_vec);
    m.acc_post = acc_post_correct / static_cast<double>(probe_count);
    for (std::size_t i = 0; i < post_vec.size(); ++i) {
      per_probe_rows.push_back({probe_ids[i], m.editor, pre_vec[i], post_vec[i]});
    }
    post_vectors[m.editor] = std::move(post_vec);
    summary.push_back(m);
  }

  // Paired bootstrap of distillation against the fine-tuning editors.
  json bootstrap = json::array();
  if (post_vectors.count("distill")) {
    for (const auto& other : {"ft_definition_full", "ft_definition_last_layer", "ft_transfer"}) {
      if (!post_vectors.count(other)) continue;
      const double p = paired_bootstrap(post_vectors.at("distill"), post_vectors.at(other),
                                        cfg.bootstrap_resamples, cfg.seed);
      bootstrap.push_back({{"a", "distill"},
                           {"b", other},
                           {"p_value", p},
                           {"n_resamples", cfg.bootstrap_resamples},
                           {"improvement", "lower target PPL"}});
    }
  }
  write_file(eval_dir + "/bootstrap.json", bootstrap.dump(2) + "\n");

  // Fig-3-style analysis from the base model over the transfer sets.
  if (std::filesystem::exists(cfg.transfer_path())) {
    const auto transfer = load_transfer_file(cfg.transfer_path(), ctx.vocab);
    std::vector<NllReductionRecord> recs;
    for (const auto& ev : evals) {
      auto it = transfer.find(ev.entity->id);
      if (it == transfer.end()) continue;
      auto r = nll_reduction_analysis(base, ev.definition, it->second.continuations, ctx.vocab);
      recs.insert(recs.end(), r.begin(), r.end());
    }
    write_nll_reduction_csv(eval_dir + "/nll_reduction.csv", recs);
  }

  write_summary_csv(eval_dir + "/summary.csv", summary);
  const std::string table = render_summary_table(summary);
  write_file(eval_dir + "/table.txt", table);
  write_per_probe_jsonl(eval_dir + "/per_probe.jsonl", per_probe_rows);
  write_file(eval_dir + "/definition_ppl.csv", def_ppl_csv.str());
  write_stage_manifest(cfg, "eval", {cfg.base_checkpoint()},
                       {eval_dir + "/summary.csv", eval_dir + "/per_probe.jsonl"});
  std::cout << table;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

void cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values) {
  dump_config(cfg);
  if (values.empty()) throw ConfigError("sweep: no axis values given");
  if (axis != "n_entities" && axis != "learning_rate" && axis != "n_continuations") {
    throw ConfigError("sweep: unknown axis '" + axis + "'");
  }
  require_stage(cfg, "gen-world", {"world"});
  require_stage(cfg, "pretrain", {"world", "model", "pretrain"});
  RunContext ctx = load_context(cfg);
  const Model base = load_checkpoint(cfg.base_checkpoint());
  Model generator = base;
  generator.set_role(Role::generator);

  const auto spec_probes = encode_probes(ctx.world.specificity, ctx.vocab);
  std::vector<double> spec_pre_vec;
  const double spec_pre = eval_target_ppl(base, spec_probes, nullptr, &spec_pre_vec);

  const auto all_novel = ctx.world.novel();
  std::vector<SweepRow> rows;

  for (double value : values) {
    for (int s = 1; s <= cfg.sweep_seeds; ++s) {
      SweepRow row;
      row.axis = axis;
      row.value = value;
      row.seed = static_cast<std::uint64_t>(s);
      try {
        // Select entities and transfer sets for this point.
        std::vector<const EntityRecord*> entities;
        GenerationSpec gspec = cfg.generation;
        gspec.prompt = encode(cfg.generation_prompt, ctx.vocab);
        EditConfig ec = cfg.edit;
        ec.seed = static_cast<std::uint64_t>(s);
        bool batch = false;

        if (axis == "n_entities") {
          const int n = static_cast<int>(value);
          if (n < 1 || n > static_cast<int>(all_novel.size())) {
            throw ConfigError("sweep point exceeds the novel entity pool");
          }
          entities.assign(all_novel.begin(), all_novel.begin() + n);
          batch = true;
        } else {
          entities = selected_novel(ctx.world, cfg);
          if (axis == "learning_rate") {
            ec.learning_rate = value;
          } else {  // n_continuations with total update count held constant
            const int n = static_cast<int>(value);
            const int total = cfg.edit.epochs * cfg.edit.n_continuations;
            gspec.n_continuations = n;
            ec.n_continuations = n;
            ec.epochs = std::max(1, total / n);
          }
        }

        const auto transfer = generate_transfer_sets(generator, ctx.vocab, entities, gspec);
        std::vector<EditTask> tasks;
        for (std::size_t i = 0; i < entities.size(); ++i) {
          tasks.push_back(make_task(*entities[i], ctx.vocab, transfer[i]));
        }

        std::vector<double> pre_vec, post_vec;
        std::vector<double> spec_post_means;
        std::set<std::string> edited_ids;
        for (const auto* e : entities) edited_ids.insert(e->id);

        if (batch) {
          Model student = base.deep_copy(Role::student);
          distill_batch(base, student, tasks, ec);
          for (const auto* e : entities) {
            std::vector<ProbeText> texts;
            for (const auto* p : ctx.world.probes_for(e->id)) texts.push_back(*p);
            const auto probes = encode_probes(texts, ctx.vocab);
            eval_target_ppl(base, probes, nullptr, &pre_vec);
            eval_target_ppl(student, probes, nullptr, &post_vec);
          }
          spec_post_means.push_back(
              eval_specificity(student, spec_probes, spec_pre_vec, edited_ids).post_mean);
        } else {
          for (const auto& task : tasks) {
            Model student = base.deep_copy(Role::student);
            distill_entity(base, student, task, ec);
            std::vector<ProbeText> texts;
            for (const auto* p : ctx.world.probes_for(task.entity_id)) texts.push_back(*p);
            const auto probes = encode_probes(texts, ctx.vocab);
            eval_target_ppl(base, probes, nullptr, &pre_vec);
            eval_target_ppl(student, probes, nullptr, &post_vec);
            spec_post_means.push_back(
                eval_specificity(student, spec_probes, spec_pre_vec, edited_ids).post_mean);
          }
        }
        row.target_pre = mean_of(pre_vec);
        row.target_post = mean_of(post_vec);
        row.specificity_pre = spec_pre;
        row.specificity_post = mean_of(spec_post_means);
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
      }
      rows.push_back(std::move(row));
      std::cout << "sweep " << axis << "=" << value << " seed=" << s << " "
                << rows.back().status << "\n";
    }
  }

  ensure_dir(cfg.out_dir + "/sweep");
  const std::string runs_path = cfg.out_dir + "/sweep/" + axis + "_runs.csv";
  const std::string agg_path = cfg.out_dir + "/sweep/" + axis + "_aggregate.csv";
  write_sweep_csv(runs_path, rows);
  write_sweep_aggregate_csv(agg_path, rows);
  write_stage_manifest(cfg, "sweep", {cfg.base_checkpoint()}, {runs_path, agg_path});
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

void cmd_ablate(const RunConfig& cfg) {
  dump_config(cfg);
  require_stage(cfg, "gen-world", {"world"});
  require_stage(cfg, "pretrain", {"world", "model", "pretrain"});
  require_stage(cfg, "gen-transfer", {"world", "model", "generation"});
  RunContext ctx = load_context(cfg);
  const Model base = load_checkpoint(cfg.base_checkpoint());
  const auto entities = selected_novel(ctx.world, cfg);
  if (entities.size() < 10) {
    throw ConfigError("ablate: need at least 10 entities (random transfer sets draw from 10 donors)");
  }
  const auto transfer = load_transfer_file(cfg.transfer_path(), ctx.vocab);
  const auto tasks = build_tasks(entities, ctx.vocab, transfer);

  const auto spec_probes = encode_probes(ctx.world.specificity, ctx.vocab);
  std::vector<double> spec_pre_vec;
  const double spec_pre = eval_target_ppl(base, spec_probes, nullptr, &spec_pre_vec);
  std::set<std::string> edited_ids;
  for (const auto* e : entities) edited_ids.insert(e->id);

  struct Cell {
    AblationMode mode;
    const char* definition;
    const char* transfer;
  };
  const std::vector<Cell> cells = {
      {AblationMode::none, "correct", "correct"},
      {AblationMode::random_definition, "random", "correct"},
      {AblationMode::random_transfer, "correct", "random"},
      {AblationMode::random_transfer_entity_prepended, "correct", "random+entity"},
  };

  std::ostringstream csv;
  csv << "definition,transfer_set,target_pre,target_post,target_delta,spec_pre,spec_post,"
         "spec_delta\n";
  for (const auto& cell : cells) {
    const auto remapped = apply_ablation(tasks, cell.mode, cfg.edit.seed);
    std::vector<double> pre_vec, post_vec, spec_post_means;
    for (const auto& task : remapped) {
      Model student = base.deep_copy(Role::student);
      distill_entity(base, student, task, cfg.edit);
      std::vector<ProbeText> texts;
      for (const auto* p : ctx.world.probes_for(task.entity_id)) texts.push_back(*p);
      const auto probes = encode_probes(texts, ctx.vocab);
      eval_target_ppl(base, probes, nullptr, &pre_vec);
      eval_target_ppl(student, probes, nullptr, &post_vec);
      spec_post_means.push_back(
          eval_specificity(student, spec_probes, spec_pre_vec, edited_ids).post_mean);
    }
    const double tpre = mean_of(pre_vec);
    const double tpost = mean_of(post_vec);
    const double spost = mean_of(spec_post_means);
    csv << cell.definition << ',' << cell.transfer << ',' << tpre << ',' << tpost << ','
        << compute_delta(tpre, tpost) << ',' << spec_pre << ',' << spost << ','
        << compute_delta(spec_pre, spost) << '\n';
    std::cout << "ablate " << cell.definition << "/" << cell.transfer << ": target "
              << format_1dp(tpre) << " -> " << format_1dp(tpost) << "\n";
  }
  ensure_dir(cfg.out_dir + "/ablate");
  write_file(cfg.out_dir + "/ablate/ablation.csv", csv.str());
  write_stage_manifest(cfg, "ablate", {cfg.base_checkpoint(), cfg.transfer_path()},
                       {cfg.out_dir + "/ablate/ablation.csv"});
}

}  // namespace kdistill
