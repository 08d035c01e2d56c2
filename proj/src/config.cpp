#include "kdistill/config.hpp"

namespace kdistill {

namespace {

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  get_if(j, "seed", c.seed);
  get_if(j, "out", c.out_dir);

  if (j.contains("world")) {
    const json& w = j.at("world");
    get_if(w, "seed", c.world.seed);
    get_if(w, "n_popular", c.world.n_popular);
    get_if(w, "n_novel", c.world.n_novel);
    get_if(w, "n_places", c.world.n_places);
    get_if(w, "n_years", c.world.n_years);
    get_if(w, "n_properties", c.world.n_properties);
    get_if(w, "docs_per_entity", c.world.docs_per_entity);
    get_if(w, "min_facts_per_doc", c.world.min_facts_per_doc);
    get_if(w, "max_facts_per_doc", c.world.max_facts_per_doc);
    get_if(w, "probes_per_entity", c.world.probes_per_entity);
    get_if(w, "span_in_def_ratio", c.world.span_in_def_ratio);
    get_if(w, "two_token_name_pct", c.world.two_token_name_pct);
    get_if(w, "n_specificity", c.world.n_specificity);
    get_if(w, "vocab_max", c.world.vocab_max);
  } else {
    c.world.seed = c.seed;
  }
  if (!j.contains("world") || !j.at("world").contains("seed")) c.world.seed = c.seed;

  if (j.contains("model")) {
    const json& m = j.at("model");
    get_if(m, "n_layers", c.model.n_layers);
    get_if(m, "d_model", c.model.d_model);
    get_if(m, "n_heads", c.model.n_heads);
    get_if(m, "max_seq_len", c.model.max_seq_len);
  }

  c.pretrain.seed = c.seed;
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    get_if(p, "learning_rate", c.pretrain.learning_rate);
    get_if(p, "epochs", c.pretrain.epochs);
    get_if(p, "batch_size", c.pretrain.batch_size);
    get_if(p, "seed", c.pretrain.seed);
  }

  c.generation.seed = c.seed;
  if (j.contains("generation")) {
    const json& g = j.at("generation");
    get_if(g, "nucleus_p", c.generation.nucleus_p);
    get_if(g, "max_new_tokens", c.generation.max_new_tokens);
    get_if(g, "n_continuations", c.generation.n_continuations);
    get_if(g, "min_tail_tokens", c.generation.min_tail_tokens);
    get_if(g, "duplicate_retries", c.generation.duplicate_retries);
    get_if(g, "seed", c.generation.seed);
    get_if(g, "prompt", c.generation_prompt);
  }

  c.edit.seed = c.seed;
  if (j.contains("edit")) {
    const json& e = j.at("edit");
    get_if(e, "learning_rate", c.edit.learning_rate);
    get_if(e, "epochs", c.edit.epochs);
    get_if(e, "temperature", c.edit.temperature);
    get_if(e, "n_continuations", c.edit.n_continuations);
    get_if(e, "seed", c.edit.seed);
    get_if(e, "track_definition_ppl", c.edit.track_definition_ppl);
    if (e.contains("ablation")) c.edit.ablation = ablation_from_name(e.at("ablation"));
    if (e.contains("reduction")) {
      const std::string r = e.at("reduction");
      if (r == "mean") {
        c.edit.reduction = LossReduction::mean;
      } else if (r == "sum") {
        c.edit.reduction = LossReduction::sum;
      } else {
        throw ConfigError("edit.reduction must be 'mean' or 'sum'");
      }
    }
    if (e.contains("optimizer")) c.edit.optimizer = optimizer_from_name(e.at("optimizer"));
    get_if(e, "ft_definition_lr", c.ft_definition_lr);
    get_if(e, "ft_transfer_lr", c.ft_transfer_lr);
    get_if(e, "mode", c.edit_mode);
    get_if(e, "entities", c.edit_entities);
    if (e.contains("editors")) {
      c.editors.clear();
      for (const auto& name : e.at("editors")) c.editors.push_back(editor_from_name(name));
    }
  }

  if (j.contains("eval")) {
    const json& ev = j.at("eval");
    get_if(ev, "bootstrap_resamples", c.bootstrap_resamples);
  }
  if (j.contains("sweep")) {
    get_if(j.at("sweep"), "seeds", c.sweep_seeds);
  }

  if (c.edit_mode != "single" && c.edit_mode != "batch") {
    throw ConfigError("edit.mode must be 'single' or 'batch'");
  }
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out"] = out_dir;
  j["world"] = {{"seed", world.seed},
                {"n_popular", world.n_popular},
                {"n_novel", world.n_novel},
                {"n_places", world.n_places},
                {"n_years", world.n_years},
                {"n_properties", world.n_properties},
                {"docs_per_entity", world.docs_per_entity},
                {"min_facts_per_doc", world.min_facts_per_doc},
                {"max_facts_per_doc", world.max_facts_per_doc},
                {"probes_per_entity", world.probes_per_entity},
                {"span_in_def_ratio", world.span_in_def_ratio},
                {"two_token_name_pct", world.two_token_name_pct},
                {"n_specificity", world.n_specificity},
                {"vocab_max", world.vocab_max}};
  j["model"] = {{"n_layers", model.n_layers},
                {"d_model", model.d_model},
                {"n_heads", model.n_heads},
                {"max_seq_len", model.max_seq_len}};
  j["pretrain"] = {{"learning_rate", pretrain.learning_rate},
                   {"epochs", pretrain.epochs},
                   {"batch_size", pretrain.batch_size},
                   {"seed", pretrain.seed}};
  j["generation"] = {{"nucleus_p", generation.nucleus_p},
                     {"max_new_tokens", generation.max_new_tokens},
                     {"n_continuations", generation.n_continuations},
                     {"min_tail_tokens", generation.min_tail_tokens},
                     {"duplicate_retries", generation.duplicate_retries},
                     {"seed", generation.seed},
                     {"prompt", generation_prompt}};
  std::vector<std::string> editor_names;
  for (EditorKind k : editors) editor_names.push_back(editor_name(k));
  j["edit"] = {{"learning_rate", edit.learning_rate},
               {"epochs", edit.epochs},
               {"temperature", edit.temperature},
               {"n_continuations", edit.n_continuations},
               {"seed", edit.seed},
               {"ablation", ablation_name(edit.ablation)},
               {"reduction", edit.reduction == LossReduction::mean ? "mean" : "sum"},
               {"optimizer", edit.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
               {"track_definition_ppl", edit.track_definition_ppl},
               {"ft_definition_lr", ft_definition_lr},
               {"ft_transfer_lr", ft_transfer_lr},
               {"mode", edit_mode},
               {"entities", edit_entities},
               {"editors", editor_names}};
  j["eval"] = {{"bootstrap_resamples", bootstrap_resamples}};
  j["sweep"] = {{"seeds", sweep_seeds}};
  return j;
}

RunConfig RunConfig::load_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::apply_override(json j, const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value");
  const std::string path = key_eq_value.substr(0, eq);
  const std::string value = key_eq_value.substr(eq + 1);

  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot - start);
    if (part.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      // Prefer typed values; fall back to string.
      json parsed;
      try {
        parsed = json::parse(value);
        if (!parsed.is_number() && !parsed.is_boolean() && !parsed.is_array() && !parsed.is_null()) {
          parsed = value;
        }
      } catch (const nlohmann::json::parse_error&) {
        parsed = value;
      }
      (*node)[part] = parsed;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return j;
}

EditConfig RunConfig::editor_config(EditorKind k) const {
  EditConfig c = edit;
  if (k == EditorKind::ft_definition_full || k == EditorKind::ft_definition_last_layer) {
    c.learning_rate = ft_definition_lr;
  } else if (k == EditorKind::ft_transfer) {
    c.learning_rate = ft_transfer_lr;
  }
  return c;
}

std::string RunConfig::section_hash(const std::string& section) const {
  const json j = to_json();
  std::string dump;
  if (section == "all") {
    dump = j.dump();
  } else if (j.contains(section)) {
    dump = j.at(section).dump();
  } else {
    throw ConfigError("unknown config section: " + section);
  }
  return hash_hex(fnv1a(dump.data(), dump.size()));
}

}  // namespace kdistill
