#pragma once

#include <string>
#include <vector>

#include "kdistill/model.hpp"
#include "kdistill/rng.hpp"
#include "kdistill/tokenizer.hpp"

namespace kdistill {

struct GenerationSpec {
  TokenSeq prompt;  // prepended before the definition; empty = bare continuation
  double nucleus_p = 0.9;
  int max_new_tokens = 40;
  int n_continuations = 5;
  std::uint64_t seed = 0;
  int min_tail_tokens = 3;    // continuations with fewer post-ell tokens get one regeneration
  int duplicate_retries = 3;  // "distinct" is best-effort

  void validate() const;
};

struct Continuation {
  TokenSeq tokens;
  int ell = 0;  // 1-based index of the mention's last token
  bool mention_prepended = false;
};

struct TransferSet {
  std::string entity_id;
  std::vector<Continuation> continuations;
};

// Minimal set of highest-probability ids whose cumulative mass reaches p;
// probability ties are broken toward lower token ids.
std::vector<TokenId> nucleus_support(const Vec& dist, double p);

// Samples from the nucleus, renormalized over the support.
TokenId nucleus_sample_step(const Vec& dist, double p, Rng& rng);

// Autoregressive nucleus sampling from [prompt; definition]; stops at eos or
// max_new_tokens and returns only the newly generated tokens.
TokenSeq generate_continuation(const Model& generator, const TokenSeq& prompt,
                               const TokenSeq& definition, const GenerationSpec& spec, Rng& rng);

// Guarantees an identifiable entity mention: locates it, or prepends the
// entity tokens when absent (ell = |entity|).
Continuation ensure_entity_mention(const TokenSeq& c, const TokenSeq& entity);

struct EntityTokens {
  std::string id;
  TokenSeq name;
  TokenSeq definition;
};

TransferSet build_transfer_set(const Model& generator, const EntityTokens& entity,
                               const GenerationSpec& spec,
                               std::vector<std::string>* warnings = nullptr);

struct TransferStats {
  double mean_tokens = 0.0;
  double pct_tokens_in_definition = 0.0;
  double mean_tokens_after_ell = 0.0;
};

TransferStats transfer_stats(const TransferSet& ts, const TokenSeq& definition);

}  // namespace kdistill
