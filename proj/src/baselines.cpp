#include "kdistill/baselines.hpp"

#include <chrono>
#include <cmath>

namespace kdistill {

const char* editor_name(EditorKind k) {
  switch (k) {
    case EditorKind::distill: return "distill";
    case EditorKind::ft_definition_full: return "ft_definition_full";
    case EditorKind::ft_definition_last_layer: return "ft_definition_last_layer";
    case EditorKind::ft_transfer: return "ft_transfer";
    case EditorKind::prepend: return "prepend";
    case EditorKind::prepend_random: return "prepend_random";
    case EditorKind::external: return "external";
  }
  return "?";
}

EditorKind editor_from_name(const std::string& name) {
  for (EditorKind k : {EditorKind::distill, EditorKind::ft_definition_full,
                       EditorKind::ft_definition_last_layer, EditorKind::ft_transfer,
                       EditorKind::prepend, EditorKind::prepend_random, EditorKind::external}) {
    if (name == editor_name(k)) return k;
  }
  throw ConfigError("unknown editor kind: " + name);
}

bool editor_mutates_parameters(EditorKind k) {
  return k == EditorKind::distill || k == EditorKind::ft_definition_full ||
         k == EditorKind::ft_definition_last_layer || k == EditorKind::ft_transfer ||
         k == EditorKind::external;
}

bool last_layer_trainable(const std::string& param_name, int n_layers) {
  if (param_name == "head") return true;
  const std::string prefix = "layers." + std::to_string(n_layers - 1) + ".";
  return param_name.compare(0, prefix.size(), prefix) == 0;
}

namespace {

void mask_to_last_layer(Parameters& grads, int n_layers) {
  grads.visit([&](const std::string& name, auto& g) {
    if (!last_layer_trainable(name, n_layers)) g.setZero();
  });
}

void ce_step(Model& m, Optimizer& opt, const TokenSeq& input,
             const std::vector<PositionTarget>& targets, const EditConfig& cfg,
             FinetuneScope scope, EditRecord& rec) {
  ForwardCache fc = m.forward_cached(input);
  LossGrad lg = cross_entropy(fc.logits, targets);
  if (!std::isfinite(lg.loss)) {
    throw NumericalError("finetune: non-finite loss at step " + std::to_string(rec.total_steps() + 1),
                         rec.total_steps() + 1);
  }
  Parameters grads = m.backward(fc, lg.dlogits);
  if (scope == FinetuneScope::last_layer) mask_to_last_layer(grads, m.config().n_layers);
  opt.step(m.params(), grads, cfg.learning_rate);
  rec.step_losses.push_back(lg.loss);
}

}  // namespace

EditRecord finetune_definition(Model& m, const TokenSeq& definition, const EditConfig& cfg,
                               FinetuneScope scope) {
  cfg.validate();
  if (definition.size() < 2) throw ConfigError("finetune_definition: definition needs >= 2 tokens");

  const auto start = std::chrono::steady_clock::now();
  EditRecord rec;

  // All next-token predictions of the definition are supervised.
  TokenSeq input(definition.begin(), definition.end() - 1);
  std::vector<PositionTarget> targets = next_token_targets(definition);

  Optimizer opt(cfg.optimizer, m.config());
  for (int e = 0; e < cfg.epochs; ++e) ce_step(m, opt, input, targets, cfg, scope, rec);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

EditRecord finetune_transfer(Model& m, const EditTask& task, const EditConfig& cfg) {
  cfg.validate();

  const auto start = std::chrono::steady_clock::now();
  EditRecord rec = finetune_definition(m, task.definition, cfg, FinetuneScope::full);
  rec.entity_ids = {task.entity_id};

  Optimizer opt(cfg.optimizer, m.config());
  const int def_len = static_cast<int>(task.definition.size());
  for (std::size_t i = 0; i < task.transfer.continuations.size(); ++i) {
    const Continuation& cont = task.transfer.continuations[i];
    const int c_len = static_cast<int>(cont.tokens.size());
    if (cont.ell >= c_len) {
      rec.skipped.push_back(task.entity_id + ":" + std::to_string(i));
      continue;
    }
    // Tokens ell+1..|c| of the continuation, conditioned on the definition:
    // |c| - ell supervised positions, matching distillation's exposure.
    TokenSeq input = task.definition;
    input.insert(input.end(), cont.tokens.begin(), cont.tokens.end());
    input.pop_back();  // last token predicts nothing
    std::vector<PositionTarget> targets;
    for (int t = cont.ell; t < c_len; ++t) {
      targets.push_back({def_len + t - 1, cont.tokens[static_cast<std::size_t>(t)]});
    }
    for (int e = 0; e < cfg.epochs; ++e) {
      ce_step(m, opt, input, targets, cfg, FinetuneScope::full, rec);
    }
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void external_editor_stub(const EditorSpec& spec) {
  throw NotImplementedError(std::string("editor '") + editor_name(spec.kind) +
                            "' must be produced externally; load its checkpoint instead");
}

}  // namespace kdistill
