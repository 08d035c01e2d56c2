#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kdistill/model.hpp"
#include "kdistill/sampler.hpp"
#include "kdistill/tokenizer.hpp"

namespace kdistill {

// Cloze probe: prefix x, target span y, optional multiple-choice options.
struct ProbeExample {
  std::string id;
  std::string entity_id;
  std::string flavor;  // "span_in_def" or "inference"
  TokenSeq prefix;
  TokenSeq target;
  std::vector<TokenSeq> options;
  int gold_index = -1;

  void validate() const;
};

// Mean per-probe perplexity of the target span given the prefix. A non-null
// prepend context is concatenated before each prefix (evaluation-time only).
// Per-probe values are appended to per_probe when provided.
double eval_target_ppl(const Model& m, const std::vector<ProbeExample>& probes,
                       const TokenSeq* prepend = nullptr,
                       std::vector<double>* per_probe = nullptr);

// post - pre. Negative is an improvement for perplexity, positive for
// accuracy; rounding happens only in the report layer.
double compute_delta(double pre, double post);

struct SpecificityResult {
  double pre_mean = 0.0;
  double post_mean = 0.0;
  double delta = 0.0;
  std::vector<double> post_per_probe;
};

// Mean perplexity change on the fixed unrelated-probe set vs. the pre-edit
// per-probe values. Probes must be about unique entities, all disjoint from
// the edited set.
SpecificityResult eval_specificity(const Model& post_model, const std::vector<ProbeExample>& probes,
                                   const std::vector<double>& pre_per_probe,
                                   const std::set<std::string>& edited_entity_ids);

struct AccuracyResult {
  double accuracy = 0.0;
  int n_ties = 0;                 // probes whose best score was shared
  std::vector<int> predictions;   // chosen option index per probe
};

// Options are scored by length-normalized mean per-token log likelihood given
// the prefix; argmax wins, ties break toward the lowest option index.
AccuracyResult eval_accuracy(const Model& m, const std::vector<ProbeExample>& probes,
                             const TokenSeq* prepend = nullptr);

// Perplexity of definition[1..] given definition[0]; the first token has no
// conditioning context and is excluded.
double eval_definition_ppl(const Model& m, const TokenSeq& definition);

struct NllReductionRecord {
  std::string token;
  bool in_definition = false;
  double nll_unconditioned = 0.0;
  double nll_conditioned = 0.0;
  double reduction = 0.0;  // (unc - cond) / unc
};

// Per post-mention token of each continuation: NLL without and with the
// definition in context, from the same forward passes.
std::vector<NllReductionRecord> nll_reduction_analysis(const Model& m, const TokenSeq& definition,
                                                       const std::vector<Continuation>& conts,
                                                       const Vocabulary& vocab);

// One-sided paired bootstrap for "a improves over b" (improvement = lower
// mean). Returns the fraction of resamples where mean(a) fails to be below
// mean(b), ties included; small p favors a.
double paired_bootstrap(const std::vector<double>& per_probe_a,
                        const std::vector<double>& per_probe_b, int n_resamples = 10000,
                        std::uint64_t seed = 0);

}  // namespace kdistill
