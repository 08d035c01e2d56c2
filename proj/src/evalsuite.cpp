#include "kdistill/evalsuite.hpp"

#include <cmath>
#include <unordered_set>

namespace kdistill {

void ProbeExample::validate() const {
  if (target.empty()) throw ConfigError("probe " + id + ": empty target span");
  if (!options.empty()) {
    if (gold_index < 0 || gold_index >= static_cast<int>(options.size())) {
      throw ConfigError("probe " + id + ": gold index out of range");
    }
    if (options[static_cast<std::size_t>(gold_index)] != target) {
      throw ConfigError("probe " + id + ": gold option tokens differ from target");
    }
  }
}

namespace {

TokenSeq with_prepend(const TokenSeq* prepend, const TokenSeq& prefix) {
  if (prepend == nullptr || prepend->empty()) return prefix;
  TokenSeq x = *prepend;
  x.insert(x.end(), prefix.begin(), prefix.end());
  return x;
}

}  // namespace

double eval_target_ppl(const Model& m, const std::vector<ProbeExample>& probes,
                       const TokenSeq* prepend, std::vector<double>* per_probe) {
  if (probes.empty()) throw ConfigError("eval_target_ppl: empty probe set");
  double sum = 0.0;
  for (const auto& p : probes) {
    p.validate();
    const double ppl = m.perplexity(with_prepend(prepend, p.prefix), p.target);
    sum += ppl;
    if (per_probe) per_probe->push_back(ppl);
  }
  return sum / static_cast<double>(probes.size());
}

double compute_delta(double pre, double post) { return post - pre; }

SpecificityResult eval_specificity(const Model& post_model, const std::vector<ProbeExample>& probes,
                                   const std::vector<double>& pre_per_probe,
                                   const std::set<std::string>& edited_entity_ids) {
  if (probes.size() != pre_per_probe.size()) {
    throw ConfigError("eval_specificity: pre-edit per-probe values do not match the probe set");
  }
  std::unordered_set<std::string> seen;
  for (const auto& p : probes) {
    if (edited_entity_ids.count(p.entity_id)) {
      throw ConfigError("eval_specificity: probe entity " + p.entity_id + " overlaps the edited set");
    }
    if (!seen.insert(p.entity_id).second) {
      throw ConfigError("eval_specificity: duplicate probe entity " + p.entity_id);
    }
  }

  SpecificityResult r;
  r.post_mean = eval_target_ppl(post_model, probes, nullptr, &r.post_per_probe);
  for (double v : pre_per_probe) r.pre_mean += v;
  r.pre_mean /= static_cast<double>(pre_per_probe.size());
  r.delta = compute_delta(r.pre_mean, r.post_mean);
  return r;
}

AccuracyResult eval_accuracy(const Model& m, const std::vector<ProbeExample>& probes,
                             const TokenSeq* prepend) {
  if (probes.empty()) throw ConfigError("eval_accuracy: empty probe set");
  AccuracyResult r;
  int correct = 0;
  for (const auto& p : probes) {
    p.validate();
    if (p.options.size() < 2) throw ConfigError("probe " + p.id + ": accuracy needs >= 2 options");
    const TokenSeq x = with_prepend(prepend, p.prefix);

    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    bool tie_at_best = false;
    for (std::size_t o = 0; o < p.options.size(); ++o) {
      const auto nlls = m.nll(x, p.options[o]);
      double mean_ll = 0.0;
      for (double v : nlls) mean_ll -= v;
      mean_ll /= static_cast<double>(nlls.size());
      if (mean_ll > best_score) {
        best_score = mean_ll;
        best = static_cast<int>(o);
        tie_at_best = false;
      } else if (mean_ll == best_score) {
        tie_at_best = true;
      }
    }
    if (tie_at_best) ++r.n_ties;
    r.predictions.push_back(best);
    if (best == p.gold_index) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(probes.size());
  return r;
}

double eval_definition_ppl(const Model& m, const TokenSeq& definition) {
  if (definition.size() < 2) throw ConfigError("eval_definition_ppl: definition needs >= 2 tokens");
  return m.perplexity({definition[0]}, TokenSeq(definition.begin() + 1, definition.end()));
}

std::vector<NllReductionRecord> nll_reduction_analysis(const Model& m, const TokenSeq& definition,
                                                       const std::vector<Continuation>& conts,
                                                       const Vocabulary& vocab) {
  if (conts.empty()) throw ConfigError("nll_reduction_analysis: no continuations");
  const std::set<TokenId> def_tokens(definition.begin(), definition.end());
  const int def_len = static_cast<int>(definition.size());

  std::vector<NllReductionRecord> out;
  for (const auto& cont : conts) {
    const TokenSeq& c = cont.tokens;
    const int c_len = static_cast<int>(c.size());
    if (cont.ell >= c_len || cont.ell < 1) continue;

    const Mat logp_unc = log_softmax_rows(m.forward(c).logits);
    TokenSeq full = definition;
    full.insert(full.end(), c.begin(), c.end());
    const Mat logp_cond = log_softmax_rows(m.forward(full).logits);

    for (int t = cont.ell; t < c_len; ++t) {
      NllReductionRecord rec;
      rec.token = vocab.token(c[static_cast<std::size_t>(t)]);
      rec.in_definition = def_tokens.count(c[static_cast<std::size_t>(t)]) > 0;
      rec.nll_unconditioned = -logp_unc(t - 1, c[static_cast<std::size_t>(t)]);
      rec.nll_conditioned = -logp_cond(def_len + t - 1, c[static_cast<std::size_t>(t)]);
      rec.reduction = (rec.nll_unconditioned - rec.nll_conditioned) / rec.nll_unconditioned;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

double paired_bootstrap(const std::vector<double>& per_probe_a,
                        const std::vector<double>& per_probe_b, int n_resamples,
                        std::uint64_t seed) {
  if (per_probe_a.size() != per_probe_b.size()) throw ConfigError("paired_bootstrap: length mismatch");
  if (per_probe_a.size() < 2) throw ConfigError("paired_bootstrap: need at least two paired values");
  if (n_resamples < 1) throw ConfigError("paired_bootstrap: need at least one resample");

  const std::size_t n = per_probe_a.size();
  Rng rng = Rng::stream(seed, "bootstrap");
  long not_better = 0;
  for (int r = 0; r < n_resamples; ++r) {
    double sum_a = 0.0;
    double sum_b = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto idx = static_cast<std::size_t>(rng.uniform_int(n));
      sum_a += per_probe_a[idx];
      sum_b += per_probe_b[idx];
    }
    if (sum_a >= sum_b) ++not_better;  // a failed to improve in this resample
  }
  return static_cast<double>(not_better) / static_cast<double>(n_resamples);
}

}  // namespace kdistill
