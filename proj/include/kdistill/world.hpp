#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "kdistill/evalsuite.hpp"
#include "kdistill/sampler.hpp"
#include "kdistill/tokenizer.hpp"

namespace kdistill {

inline constexpr int kNumRelations = 4;

// A category binds a noun to one implied token per relation template; the
// implied tokens never appear in definitions, so relation probes require
// inference rather than span copying.
struct CategorySpec {
  std::string noun;
  std::array<std::string, kNumRelations> implied;
};

struct Schema {
  std::vector<CategorySpec> categories;
  std::vector<std::string> places;
  std::vector<std::string> years;
  std::vector<std::string> properties;

  int category_index(const std::string& noun) const;
};

enum class Tier { popular, novel };

struct EntityAttrs {
  int category = 0;  // index into schema.categories
  std::string place;
  std::string year;
  std::string property;
};

struct EntityRecord {
  std::string id;
  std::string name;  // 1-3 whitespace tokens
  EntityAttrs attrs;
  Tier tier = Tier::popular;
  std::string definition;  // mentions the name exactly once, at the start
};

struct ProbeText {
  std::string id;
  std::string entity_id;
  std::string flavor;  // "span_in_def" | "inference"
  std::string prefix;
  std::string target;
  std::vector<std::string> options;
  int gold_index = -1;
};

struct WorldSpec {
  std::uint64_t seed = 7;
  int n_popular = 200;
  int n_novel = 20;
  int n_places = 40;
  int n_years = 24;
  int n_properties = 24;
  int docs_per_entity = 8;
  int min_facts_per_doc = 2;
  int max_facts_per_doc = 4;
  int probes_per_entity = 5;
  double span_in_def_ratio = 0.2;
  int two_token_name_pct = 25;
  int n_specificity = 40;
  int vocab_max = 2048;

  void validate() const;
};

struct World {
  WorldSpec spec;
  Schema schema;
  std::vector<EntityRecord> entities;  // popular first, then novel
  std::vector<std::string> corpus;     // one document per entry
  std::vector<ProbeText> probes;
  std::vector<ProbeText> specificity;

  std::vector<const EntityRecord*> popular() const;
  std::vector<const EntityRecord*> novel() const;
  const EntityRecord& entity(const std::string& id) const;
  std::vector<const ProbeText*> probes_for(const std::string& entity_id) const;
};

// Deterministic given the seed. Names come from a closed synthetic
// morphology, so novel-entity tokens provably never occur in the corpus.
World generate_world(const WorldSpec& spec);

// Documents about popular entities only; half lead with the definition so
// the definition->fact patterns probes rely on are learnable in context.
std::vector<std::string> generate_corpus(const World& world, const WorldSpec& spec);

std::vector<ProbeText> generate_probes(const EntityRecord& entity, const World& world,
                                       const WorldSpec& spec);

// n probes about n unique popular entities, frozen per world.
std::vector<ProbeText> split_specificity_set(const World& world, int n, std::uint64_t seed);

// Full-text scan: true when no novel entity name token occurs in the corpus.
bool novel_tokens_absent_from_corpus(const World& world);

// Bundle IO: entities.jsonl, corpus.txt, probes.jsonl, specificity.jsonl,
// schema.json, vocab.txt.
void save_world(const World& world, const std::string& dir);
World load_world(const std::string& dir);

// Vocabulary over everything the pipelines will tokenize (corpus plus all
// definitions and probe texts). Throws when truncation would drop any of it.
Vocabulary build_world_vocab(const World& world);

ProbeExample encode_probe(const ProbeText& p, const Vocabulary& v);
std::vector<ProbeExample> encode_probes(const std::vector<ProbeText>& ps, const Vocabulary& v);
EntityTokens entity_tokens(const EntityRecord& e, const Vocabulary& v);

}  // namespace kdistill
