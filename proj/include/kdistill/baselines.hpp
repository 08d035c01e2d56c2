#pragma once

#include <string>
#include <vector>

#include "kdistill/distill.hpp"
#include "kdistill/model.hpp"

namespace kdistill {

enum class EditorKind {
  distill,
  ft_definition_full,
  ft_definition_last_layer,
  ft_transfer,
  prepend,
  prepend_random,
  external,
};

const char* editor_name(EditorKind k);
EditorKind editor_from_name(const std::string& name);
// prepend/prepend_random evaluate in context and never touch parameters.
bool editor_mutates_parameters(EditorKind k);

struct EditorSpec {
  EditorKind kind = EditorKind::distill;
  EditConfig config;
};

enum class FinetuneScope { full, last_layer };

// True for tensors trainable under last_layer scope: the final transformer
// block and the output head.
bool last_layer_trainable(const std::string& param_name, int n_layers);

// Teacher-forced cross-entropy on the definition sentence for cfg.epochs
// steps. last_layer scope freezes everything outside the final block + head.
EditRecord finetune_definition(Model& m, const TokenSeq& definition, const EditConfig& cfg,
                               FinetuneScope scope = FinetuneScope::full);

// Fine-tune on the definition, then on each continuation's tokens after the
// mention with the definition in the context window: the same supervised
// token count per continuation as distillation.
EditRecord finetune_transfer(Model& m, const EditTask& task, const EditConfig& cfg);

// Interface for externally produced editors (hypernetwork / rank-one MLP
// edits are out of scope here); invoking it always fails, but checkpoints
// produced elsewhere evaluate like any other model.
void external_editor_stub(const EditorSpec& spec);

}  // namespace kdistill
