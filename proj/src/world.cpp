#include "kdistill/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "kdistill/rng.hpp"
#include "kdistill/util.hpp"

namespace kdistill {

namespace {

// ---------------------------------------------------------------------------
// Fixed schema tables. Implied tokens are distinct within each relation
// column so relation distractors stay unambiguous.
// ---------------------------------------------------------------------------

const std::vector<CategorySpec>& category_pool() {
  static const std::vector<CategorySpec> pool = {
      {"storm", {"flooding", "evacuations", "thunder", "rainfall"}},
      {"bridge", {"traffic", "commuters", "rivers", "cables"}},
      {"festival", {"music", "crowds", "parades", "lanterns"}},
      {"chatbot", {"dialogue", "answers", "keyboards", "servers"}},
      {"singer", {"concerts", "albums", "ballads", "stages"}},
      {"museum", {"exhibits", "artifacts", "galleries", "sculptures"}},
      {"vaccine", {"immunity", "trials", "syringes", "clinics"}},
      {"satellite", {"orbit", "signals", "antennas", "launches"}},
      {"comet", {"astronomy", "telescopes", "meteors", "skywatchers"}},
      {"railway", {"trains", "stations", "tunnels", "freight"}},
      {"startup", {"funding", "investors", "prototypes", "offices"}},
      {"theater", {"plays", "actors", "curtains", "rehearsals"}},
  };
  return pool;
}

const std::vector<std::string>& property_pool() {
  static const std::vector<std::string> pool = {
      "durability", "elegance",   "speed",    "safety",   "innovation", "tradition",
      "precision",  "charm",      "resilience", "mystery", "grandeur",  "simplicity",
      "boldness",   "harmony",    "clarity",  "warmth",   "strength",   "glamour",
      "wit",        "serenity",   "vigor",    "finesse",  "depth",      "radiance",
  };
  return pool;
}

std::string definition_text(const std::string& name, const CategorySpec& cat,
                            const EntityAttrs& a) {
  return name + " is a " + cat.noun + " from " + a.place + " that appeared in " + a.year +
         " and is celebrated for its " + a.property + " .";
}

// Fact kinds 0..2 are attribute facts whose gold span appears in the
// definition; 3..6 are relation facts whose gold token is only implied by
// the category.
constexpr int kNumFactKinds = 3 + kNumRelations;

struct FactParts {
  std::string prefix;  // everything before the gold token
  std::string gold;
};

FactParts fact_parts(const EntityRecord& e, const Schema& schema, int kind) {
  const CategorySpec& cat = schema.categories[static_cast<std::size_t>(e.attrs.category)];
  switch (kind) {
    case 0: return {e.name + " drew attention across", e.attrs.place};
    case 1: return {e.name + " dates back to", e.attrs.year};
    case 2: return {e.name + " is celebrated for its", e.attrs.property};
    case 3: return {e.name + " is often linked with", cat.implied[0]};
    case 4: return {"reports connect " + e.name + " with", cat.implied[1]};
    case 5: return {"locals describe " + e.name + " as a source of", cat.implied[2]};
    case 6: return {"experts mention " + e.name + " alongside", cat.implied[3]};
    default: throw ConfigError("unknown fact kind");
  }
}

std::string fact_sentence(const EntityRecord& e, const Schema& schema, int kind) {
  const FactParts f = fact_parts(e, schema, kind);
  return f.prefix + " " + f.gold + " .";
}

// Synthetic morphology for entity and place names. Every generated token is
// checked against the global registry, so no name token can collide with a
// template word, an attribute value, or another name.
class NameForge {
 public:
  NameForge(Rng rng, std::set<std::string> taken) : rng_(rng), taken_(std::move(taken)) {}

  std::string entity_token() {
    static const std::vector<std::string> onset = {
        "Zor", "Vel",  "Quin", "Bal", "Tren", "Mok", "Syl", "Dra", "Fen", "Gor", "Hul", "Jex",
        "Kra", "Lim",  "Nov",  "Pel", "Ruv",  "Tav", "Wex", "Yol", "Bram", "Cho", "Div", "Eld"};
    static const std::vector<std::string> mid = {"va", "ne", "ri", "lo", "mu", "ta",
                                                 "be", "ko", "zi", "pa", "du", "sa"};
    static const std::vector<std::string> coda = {"x", "n", "th", "s", "m", "r", "l", "k", "nd", "sh"};
    return fresh([&] { return pick(onset) + pick(mid) + pick(coda); });
  }

  std::string place_token() {
    static const std::vector<std::string> pre = {"Vor", "Kel", "Tam",  "Bru", "Sil", "Dor",
                                                 "Mar", "Oss", "Ost",  "Rin", "Gal", "Zan",
                                                 "Hol", "Fir", "Lur",  "Cas"};
    static const std::vector<std::string> suf = {"dia",  "mark", "grad", "holm", "stan",
                                                 "villa", "land", "port", "mere", "wick"};
    return fresh([&] { return pick(pre) + pick(suf); });
  }

  bool roll_pct(int pct) { return static_cast<int>(rng_.uniform_int(100)) < pct; }

 private:
  template <class F>
  std::string fresh(F&& make) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::string t = make();
      if (taken_.insert(t).second) return t;
    }
    throw ConfigError("world generation: name space exhausted (too many entities for the schema)");
  }

  const std::string& pick(const std::vector<std::string>& v) {
    return v[rng_.uniform_int(v.size())];
  }

  Rng rng_;
  std::set<std::string> taken_;
};

// Every fixed surface word that can appear in corpus or probe text.
std::set<std::string> fixed_word_registry(const Schema& schema) {
  std::set<std::string> words;
  auto add_text = [&](const std::string& text) {
    for (auto& w : split_whitespace(text)) words.insert(w);
  };
  add_text("is a from that appeared in and is celebrated for its .");
  add_text("drew attention across dates back to");
  add_text("is often linked with reports connect with");
  add_text("locals describe as a source of experts mention alongside");
  for (const auto& c : schema.categories) {
    words.insert(c.noun);
    for (const auto& t : c.implied) words.insert(t);
  }
  for (const auto& p : schema.places) words.insert(p);
  for (const auto& y : schema.years) words.insert(y);
  for (const auto& p : schema.properties) words.insert(p);
  words.insert({"<pad>", "<bos>", "<eos>", "<unk>"});
  return words;
}

template <class T>
std::vector<T> balanced_assignment(const std::vector<T>& pool, std::size_t n, Rng& rng) {
  std::vector<T> bag;
  while (bag.size() < n) {
    for (const auto& v : pool) bag.push_back(v);
  }
  bag.resize(n);
  rng.shuffle(bag);
  return bag;
}

std::vector<std::string> sample_distinct_excluding(const std::vector<std::string>& pool,
                                                   const std::string& exclude, int count,
                                                   Rng& rng) {
  std::vector<std::string> candidates;
  for (const auto& v : pool) {
    if (v != exclude) candidates.push_back(v);
  }
  if (static_cast<int>(candidates.size()) < count) {
    throw ConfigError("world generation: pool too small for distractor sampling");
  }
  rng.shuffle(candidates);
  candidates.resize(static_cast<std::size_t>(count));
  return candidates;
}

}  // namespace

int Schema::category_index(const std::string& noun) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].noun == noun) return static_cast<int>(i);
  }
  throw ConfigError("unknown category noun: " + noun);
}

void WorldSpec::validate() const {
  if (n_popular < 1 || n_novel < 1) throw ConfigError("world: need at least one entity per tier");
  if (n_places < 6 || n_years < 6 || n_properties < 6) {
    throw ConfigError("world: attribute pools need at least 6 values for distractor sampling");
  }
  if (n_properties > static_cast<int>(property_pool().size())) {
    throw ConfigError("world: property pool exhausted (max " +
                      std::to_string(property_pool().size()) + ")");
  }
  if (docs_per_entity < 2) throw ConfigError("world: docs_per_entity must be >= 2");
  if (min_facts_per_doc < 1 || max_facts_per_doc < min_facts_per_doc ||
      max_facts_per_doc > kNumFactKinds) {
    throw ConfigError("world: facts_per_doc range invalid");
  }
  if (probes_per_entity < 1) throw ConfigError("world: probes_per_entity must be >= 1");
  if (span_in_def_ratio < 0.0 || span_in_def_ratio > 1.0) {
    throw ConfigError("world: span_in_def_ratio must be in [0, 1]");
  }
  if (n_specificity > n_popular) throw ConfigError("world: n_specificity exceeds popular pool");
  if (vocab_max < 64) throw ConfigError("world: vocab_max too small");
}

std::vector<const EntityRecord*> World::popular() const {
  std::vector<const EntityRecord*> out;
  for (const auto& e : entities) {
    if (e.tier == Tier::popular) out.push_back(&e);
  }
  return out;
}

std::vector<const EntityRecord*> World::novel() const {
  std::vector<const EntityRecord*> out;
  for (const auto& e : entities) {
    if (e.tier == Tier::novel) out.push_back(&e);
  }
  return out;
}

const EntityRecord& World::entity(const std::string& id) const {
  for (const auto& e : entities) {
    if (e.id == id) return e;
  }
  throw ConfigError("unknown entity id: " + id);
}

std::vector<const ProbeText*> World::probes_for(const std::string& entity_id) const {
  std::vector<const ProbeText*> out;
  for (const auto& p : probes) {
    if (p.entity_id == entity_id) out.push_back(&p);
  }
  return out;
}

std::vector<ProbeText> generate_probes(const EntityRecord& entity, const World& world,
                                       const WorldSpec& spec) {
  const Schema& schema = world.schema;
  Rng rng = Rng::stream(spec.seed, "probes", fnv1a(entity.id.data(), entity.id.size()));

  const int total = spec.probes_per_entity;
  const int n_span = std::min(total, static_cast<int>(std::lround(spec.span_in_def_ratio * total)));
  const int n_inf = total - n_span;

  std::vector<ProbeText> out;
  auto make_probe = [&](int kind, const std::string& flavor) {
    const FactParts f = fact_parts(entity, schema, kind);
    ProbeText p;
    p.id = entity.id + "-p" + std::to_string(out.size());
    p.entity_id = entity.id;
    p.flavor = flavor;
    p.prefix = f.prefix;
    p.target = f.gold;

    std::vector<std::string> distractors;
    if (kind == 0) {
      distractors = sample_distinct_excluding(schema.places, f.gold, 4, rng);
    } else if (kind == 1) {
      distractors = sample_distinct_excluding(schema.years, f.gold, 4, rng);
    } else if (kind == 2) {
      distractors = sample_distinct_excluding(schema.properties, f.gold, 4, rng);
    } else {
      const int rel = kind - 3;
      std::vector<std::string> pool;
      for (const auto& c : schema.categories) pool.push_back(c.implied[static_cast<std::size_t>(rel)]);
      distractors = sample_distinct_excluding(pool, f.gold, 4, rng);
    }
    p.gold_index = static_cast<int>(rng.uniform_int(distractors.size() + 1));
    p.options = distractors;
    p.options.insert(p.options.begin() + p.gold_index, f.gold);
    out.push_back(std::move(p));
  };

  const int span_off = static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_span; ++i) make_probe((span_off + i) % 3, "span_in_def");
  const int inf_off = static_cast<int>(rng.uniform_int(kNumRelations));
  for (int i = 0; i < n_inf; ++i) make_probe(3 + (inf_off + i) % kNumRelations, "inference");
  return out;
}

std::vector<std::string> generate_corpus(const World& world, const WorldSpec& spec) {
  std::vector<std::string> docs;
  std::size_t idx = 0;
  for (const auto& e : world.entities) {
    if (e.tier != Tier::popular) continue;
    Rng rng = Rng::stream(spec.seed, "corpus", idx++);
    for (int d = 0; d < spec.docs_per_entity; ++d) {
      const bool with_definition = (d % 2 == 0);
      const int span = spec.max_facts_per_doc - spec.min_facts_per_doc + 1;
      const int k = spec.min_facts_per_doc + static_cast<int>(rng.uniform_int(span));

      std::vector<int> kinds(kNumFactKinds);
      std::iota(kinds.begin(), kinds.end(), 0);
      rng.shuffle(kinds);
      kinds.resize(static_cast<std::size_t>(k));

      std::string doc = with_definition ? e.definition : "";
      for (int kind : kinds) {
        if (!doc.empty()) doc += ' ';
        doc += fact_sentence(e, world.schema, kind);
      }
      docs.push_back(std::move(doc));
    }
  }
  return docs;
}

std::vector<ProbeText> split_specificity_set(const World& world, int n, std::uint64_t seed) {
  const auto pop = world.popular();
  if (static_cast<int>(pop.size()) < n) {
    throw ConfigError("split_specificity_set: popular pool smaller than requested sample");
  }
  std::vector<const EntityRecord*> pool = pop;
  Rng rng = Rng::stream(seed, "specificity");
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(n));

  WorldSpec one = world.spec;
  one.probes_per_entity = 1;
  one.span_in_def_ratio = 0.0;  // memorization probes about unrelated entities
  std::vector<ProbeText> out;
  for (const auto* e : pool) {
    auto ps = generate_probes(*e, world, one);
    ps[0].id = "spec-" + e->id;
    out.push_back(std::move(ps[0]));
  }
  return out;
}

bool novel_tokens_absent_from_corpus(const World& world) {
  std::unordered_set<std::string> novel_tokens;
  for (const auto& e : world.entities) {
    if (e.tier != Tier::novel) continue;
    for (auto& t : split_whitespace(e.name)) novel_tokens.insert(t);
  }
  for (const auto& doc : world.corpus) {
    for (auto& w : split_whitespace(doc)) {
      if (novel_tokens.count(w)) return false;
    }
  }
  return true;
}

World generate_world(const WorldSpec& spec) {
  spec.validate();

  World w;
  w.spec = spec;
  w.schema.categories = category_pool();
  w.schema.properties = property_pool();
  w.schema.properties.resize(static_cast<std::size_t>(spec.n_properties));
  for (int y = 0; y < spec.n_years; ++y) w.schema.years.push_back(std::to_string(1950 + y));

  NameForge forge(Rng::stream(spec.seed, "names"), fixed_word_registry(w.schema));
  for (int p = 0; p < spec.n_places; ++p) w.schema.places.push_back(forge.place_token());

  const int n_total = spec.n_popular + spec.n_novel;
  Rng attr_rng = Rng::stream(spec.seed, "attributes");
  std::vector<int> cat_ids(static_cast<std::size_t>(w.schema.categories.size()));
  std::iota(cat_ids.begin(), cat_ids.end(), 0);
  const auto cats = balanced_assignment(cat_ids, static_cast<std::size_t>(n_total), attr_rng);
  const auto places = balanced_assignment(w.schema.places, static_cast<std::size_t>(n_total), attr_rng);
  const auto years = balanced_assignment(w.schema.years, static_cast<std::size_t>(n_total), attr_rng);
  const auto props = balanced_assignment(w.schema.properties, static_cast<std::size_t>(n_total), attr_rng);

  char idbuf[32];
  for (int i = 0; i < n_total; ++i) {
    EntityRecord e;
    e.tier = i < spec.n_popular ? Tier::popular : Tier::novel;
    const int tier_idx = e.tier == Tier::popular ? i : i - spec.n_popular;
    std::snprintf(idbuf, sizeof(idbuf), "%s-%03d", e.tier == Tier::popular ? "pop" : "nov", tier_idx);
    e.id = idbuf;
    e.name = forge.entity_token();
    if (forge.roll_pct(spec.two_token_name_pct)) e.name += " " + forge.entity_token();
    e.attrs.category = cats[static_cast<std::size_t>(i)];
    e.attrs.place = places[static_cast<std::size_t>(i)];
    e.attrs.year = years[static_cast<std::size_t>(i)];
    e.attrs.property = props[static_cast<std::size_t>(i)];
    e.definition = definition_text(e.name, w.schema.categories[static_cast<std::size_t>(e.attrs.category)], e.attrs);
    w.entities.push_back(std::move(e));
  }

  w.corpus = generate_corpus(w, spec);
  for (const auto& e : w.entities) {
    auto ps = generate_probes(e, w, spec);
    w.probes.insert(w.probes.end(), ps.begin(), ps.end());
  }
  w.specificity = split_specificity_set(w, spec.n_specificity, spec.seed);

  if (!novel_tokens_absent_from_corpus(w)) {
    throw Error("world generation: held-out leakage invariant violated");
  }
  return w;
}

Vocabulary build_world_vocab(const World& world) {
  std::vector<std::string> texts = world.corpus;
  for (const auto& e : world.entities) {
    texts.push_back(e.name);
    texts.push_back(e.definition);
  }
  auto add_probe = [&](const ProbeText& p) {
    texts.push_back(p.prefix);
    texts.push_back(p.target);
    for (const auto& o : p.options) texts.push_back(o);
  };
  for (const auto& p : world.probes) add_probe(p);
  for (const auto& p : world.specificity) add_probe(p);

  std::set<std::string> distinct;
  for (const auto& t : texts) {
    for (auto& word : split_whitespace(t)) distinct.insert(word);
  }
  if (static_cast<int>(distinct.size()) + 4 > world.spec.vocab_max) {
    throw ConfigError("build_world_vocab: vocab_max " + std::to_string(world.spec.vocab_max) +
                      " would truncate the world's " + std::to_string(distinct.size()) + " tokens");
  }
  return build_vocab(texts, world.spec.vocab_max);
}

void save_world(const World& world, const std::string& dir) {
  ensure_dir(dir);

  std::vector<json> erows;
  for (const auto& e : world.entities) {
    erows.push_back({{"id", e.id},
                     {"name", e.name},
                     {"tier", e.tier == Tier::popular ? "popular" : "novel"},
                     {"category", world.schema.categories[static_cast<std::size_t>(e.attrs.category)].noun},
                     {"place", e.attrs.place},
                     {"year", e.attrs.year},
                     {"property", e.attrs.property},
                     {"definition", e.definition}});
  }
  write_jsonl(dir + "/entities.jsonl", erows);

  auto probe_rows = [](const std::vector<ProbeText>& ps) {
    std::vector<json> rows;
    for (const auto& p : ps) {
      rows.push_back({{"id", p.id},
                      {"entity_id", p.entity_id},
                      {"flavor", p.flavor},
                      {"prefix", p.prefix},
                      {"target", p.target},
                      {"options", p.options},
                      {"gold_index", p.gold_index}});
    }
    return rows;
  };
  write_jsonl(dir + "/probes.jsonl", probe_rows(world.probes));
  write_jsonl(dir + "/specificity.jsonl", probe_rows(world.specificity));
  write_lines(dir + "/corpus.txt", world.corpus);

  json schema;
  schema["spec"] = {{"seed", world.spec.seed},
                    {"n_popular", world.spec.n_popular},
                    {"n_novel", world.spec.n_novel},
                    {"n_places", world.spec.n_places},
                    {"n_years", world.spec.n_years},
                    {"n_properties", world.spec.n_properties},
                    {"docs_per_entity", world.spec.docs_per_entity},
                    {"min_facts_per_doc", world.spec.min_facts_per_doc},
                    {"max_facts_per_doc", world.spec.max_facts_per_doc},
                    {"probes_per_entity", world.spec.probes_per_entity},
                    {"span_in_def_ratio", world.spec.span_in_def_ratio},
                    {"two_token_name_pct", world.spec.two_token_name_pct},
                    {"n_specificity", world.spec.n_specificity},
                    {"vocab_max", world.spec.vocab_max}};
  json cats = json::array();
  for (const auto& c : world.schema.categories) {
    cats.push_back({{"noun", c.noun}, {"implied", c.implied}});
  }
  schema["categories"] = cats;
  schema["places"] = world.schema.places;
  schema["years"] = world.schema.years;
  schema["properties"] = world.schema.properties;
  write_file(dir + "/schema.json", schema.dump(2) + "\n");

  build_world_vocab(world).save(dir + "/vocab.txt");
}

World load_world(const std::string& dir) {
  World w;
  const json schema = json::parse(read_file(dir + "/schema.json"));
  const json& s = schema.at("spec");
  w.spec.seed = s.at("seed").get<std::uint64_t>();
  w.spec.n_popular = s.at("n_popular");
  w.spec.n_novel = s.at("n_novel");
  w.spec.n_places = s.at("n_places");
  w.spec.n_years = s.at("n_years");
  w.spec.n_properties = s.at("n_properties");
  w.spec.docs_per_entity = s.at("docs_per_entity");
  w.spec.min_facts_per_doc = s.at("min_facts_per_doc");
  w.spec.max_facts_per_doc = s.at("max_facts_per_doc");
  w.spec.probes_per_entity = s.at("probes_per_entity");
  w.spec.span_in_def_ratio = s.at("span_in_def_ratio");
  w.spec.two_token_name_pct = s.at("two_token_name_pct");
  w.spec.n_specificity = s.at("n_specificity");
  w.spec.vocab_max = s.at("vocab_max");

  for (const auto& c : schema.at("categories")) {
    CategorySpec cs;
    cs.noun = c.at("noun");
    const auto& imp = c.at("implied");
    for (int r = 0; r < kNumRelations; ++r) cs.implied[static_cast<std::size_t>(r)] = imp.at(r);
    w.schema.categories.push_back(std::move(cs));
  }
  w.schema.places = schema.at("places").get<std::vector<std::string>>();
  w.schema.years = schema.at("years").get<std::vector<std::string>>();
  w.schema.properties = schema.at("properties").get<std::vector<std::string>>();

  for (const auto& row : read_jsonl(dir + "/entities.jsonl")) {
    EntityRecord e;
    e.id = row.at("id");
    e.name = row.at("name");
    e.tier = row.at("tier") == "popular" ? Tier::popular : Tier::novel;
    e.attrs.category = w.schema.category_index(row.at("category"));
    e.attrs.place = row.at("place");
    e.attrs.year = row.at("year");
    e.attrs.property = row.at("property");
    e.definition = row.at("definition");
    w.entities.push_back(std::move(e));
  }

  auto parse_probes = [](const std::vector<json>& rows) {
    std::vector<ProbeText> ps;
    for (const auto& row : rows) {
      ProbeText p;
      p.id = row.at("id");
      p.entity_id = row.at("entity_id");
      p.flavor = row.at("flavor");
      p.prefix = row.at("prefix");
      p.target = row.at("target");
      p.options = row.at("options").get<std::vector<std::string>>();
      p.gold_index = row.at("gold_index");
      ps.push_back(std::move(p));
    }
    return ps;
  };
  w.probes = parse_probes(read_jsonl(dir + "/probes.jsonl"));
  w.specificity = parse_probes(read_jsonl(dir + "/specificity.jsonl"));
  w.corpus = read_lines(dir + "/corpus.txt");
  return w;
}

ProbeExample encode_probe(const ProbeText& p, const Vocabulary& v) {
  ProbeExample out;
  out.id = p.id;
  out.entity_id = p.entity_id;
  out.flavor = p.flavor;
  out.prefix = encode(p.prefix, v);
  out.target = encode(p.target, v);
  for (const auto& o : p.options) out.options.push_back(encode(o, v));
  out.gold_index = p.gold_index;
  out.validate();
  return out;
}

std::vector<ProbeExample> encode_probes(const std::vector<ProbeText>& ps, const Vocabulary& v) {
  std::vector<ProbeExample> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(encode_probe(p, v));
  return out;
}

EntityTokens entity_tokens(const EntityRecord& e, const Vocabulary& v) {
  return EntityTokens{e.id, encode(e.name, v), encode(e.definition, v)};
}

}  // namespace kdistill
