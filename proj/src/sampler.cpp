#include "kdistill/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace kdistill {

void GenerationSpec::validate() const {
  if (nucleus_p <= 0.0 || nucleus_p > 1.0) throw ConfigError("generation: nucleus_p must be in (0, 1]");
  if (max_new_tokens < 0) throw ConfigError("generation: negative max_new_tokens");
  if (n_continuations < 1) throw ConfigError("generation: n_continuations must be >= 1");
}

std::vector<TokenId> nucleus_support(const Vec& dist, double p) {
  if (p <= 0.0 || p > 1.0) throw ConfigError("nucleus: p must be in (0, 1]");
  if ((dist.array() < 0.0).any() || std::abs(dist.sum() - 1.0) > 1e-6) {
    throw ConfigError("nucleus: distribution is not normalized");
  }
  std::vector<TokenId> ids(static_cast<std::size_t>(dist.size()));
  std::iota(ids.begin(), ids.end(), 0);
  // stable sort keeps lower ids first among equal probabilities
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return dist(a) > dist(b); });

  std::vector<TokenId> support;
  double cum = 0.0;
  for (TokenId id : ids) {
    support.push_back(id);
    cum += dist(id);
    if (cum >= p - 1e-12) break;
  }
  return support;
}

TokenId nucleus_sample_step(const Vec& dist, double p, Rng& rng) {
  const auto support = nucleus_support(dist, p);
  double mass = 0.0;
  for (TokenId id : support) mass += dist(id);
  const double u = rng.uniform01() * mass;
  double cum = 0.0;
  for (TokenId id : support) {
    cum += dist(id);
    if (u < cum) return id;
  }
  return support.back();
}

TokenSeq generate_continuation(const Model& generator, const TokenSeq& prompt,
                               const TokenSeq& definition, const GenerationSpec& spec, Rng& rng) {
  spec.validate();
  TokenSeq ctx = prompt;
  ctx.insert(ctx.end(), definition.begin(), definition.end());
  if (ctx.empty()) throw ConfigError("generate_continuation: empty context");
  if (static_cast<int>(ctx.size()) + spec.max_new_tokens > generator.config().max_seq_len) {
    throw SequenceTooLongError("generate_continuation: context plus max_new_tokens exceeds the window");
  }

  TokenSeq out;
  for (int i = 0; i < spec.max_new_tokens; ++i) {
    const DistSeq d = generator.forward(ctx);
    const Vec last = d.probs.row(d.length() - 1).transpose();
    const TokenId next = nucleus_sample_step(last, spec.nucleus_p, rng);
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    ctx.push_back(next);
  }
  return out;
}

Continuation ensure_entity_mention(const TokenSeq& c, const TokenSeq& entity) {
  if (contains_subsequence(c, entity)) {
    return Continuation{c, find_entity_end(c, entity), false};
  }
  TokenSeq with = entity;
  with.insert(with.end(), c.begin(), c.end());
  return Continuation{std::move(with), static_cast<int>(entity.size()), true};
}

TransferSet build_transfer_set(const Model& generator, const EntityTokens& entity,
                               const GenerationSpec& spec, std::vector<std::string>* warnings) {
  spec.validate();
  if (entity.name.empty()) throw ConfigError("build_transfer_set: empty entity name");

  // Independent stream per entity so multi-entity generation order does not
  // change any entity's transfer set.
  Rng rng = Rng::stream(spec.seed, "generation",
                        fnv1a(entity.id.data(), entity.id.size()));

  TransferSet ts;
  ts.entity_id = entity.id;
  std::set<TokenSeq> seen;
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back("entity " + entity.id + ": " + msg);
  };

  for (int i = 0; i < spec.n_continuations; ++i) {
    Continuation best;
    bool have = false;
    int tail_regens = 0;
    int dup_tries = 0;
    for (;;) {
      const TokenSeq raw = generate_continuation(generator, spec.prompt, entity.definition, spec, rng);
      Continuation cont = ensure_entity_mention(raw, entity.name);
      best = cont;
      have = true;
      const int tail = static_cast<int>(cont.tokens.size()) - cont.ell;
      if (tail < spec.min_tail_tokens && tail_regens == 0) {
        ++tail_regens;
        continue;
      }
      if (seen.count(cont.tokens) && dup_tries < spec.duplicate_retries) {
        ++dup_tries;
        continue;
      }
      break;
    }
    (void)have;
    if (seen.count(best.tokens)) warn("duplicate continuation accepted after retries");
    if (static_cast<int>(best.tokens.size()) - best.ell < spec.min_tail_tokens) {
      warn("short continuation accepted after one regeneration");
    }
    seen.insert(best.tokens);
    ts.continuations.push_back(std::move(best));
  }
  return ts;
}

TransferStats transfer_stats(const TransferSet& ts, const TokenSeq& definition) {
  if (ts.continuations.empty()) throw ConfigError("transfer_stats: empty transfer set");
  const std::set<TokenId> def_tokens(definition.begin(), definition.end());
  TransferStats s;
  long total = 0;
  long in_def = 0;
  for (const auto& c : ts.continuations) {
    s.mean_tokens += static_cast<double>(c.tokens.size());
    s.mean_tokens_after_ell += static_cast<double>(c.tokens.size()) - c.ell;
    total += static_cast<long>(c.tokens.size());
    for (TokenId t : c.tokens) in_def += def_tokens.count(t) ? 1 : 0;
  }
  const double n = static_cast<double>(ts.continuations.size());
  s.mean_tokens /= n;
  s.mean_tokens_after_ell /= n;
  s.pct_tokens_in_definition = total == 0 ? 0.0 : 100.0 * static_cast<double>(in_def) / static_cast<double>(total);
  return s;
}

}  // namespace kdistill
