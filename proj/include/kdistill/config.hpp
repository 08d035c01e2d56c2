#pragma once

#include <string>
#include <vector>

#include "kdistill/baselines.hpp"
#include "kdistill/distill.hpp"
#include "kdistill/model.hpp"
#include "kdistill/sampler.hpp"
#include "kdistill/train.hpp"
#include "kdistill/util.hpp"
#include "kdistill/world.hpp"

namespace kdistill {

inline constexpr const char* kCodeVersion = "kdistill 0.1.0";

// Resolved run configuration. Serialized into every run directory before
// execution; reruns from the saved file reproduce all outputs.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "runs/out";

  WorldSpec world;
  ModelConfig model;  // vocab_size resolved from the world vocabulary at load time
  TrainConfig pretrain;
  GenerationSpec generation;
  std::string generation_prompt;  // text form of GenerationSpec.prompt
  EditConfig edit;
  double ft_definition_lr = 3e-4;  // per-editor defaults, re-tuned for the toy model
  double ft_transfer_lr = 1e-4;
  std::vector<EditorKind> editors = {EditorKind::distill, EditorKind::ft_definition_full,
                                     EditorKind::ft_transfer, EditorKind::prepend,
                                     EditorKind::prepend_random};
  std::string edit_mode = "single";  // "single" | "batch"
  int edit_entities = 0;             // 0 = all novel entities
  int bootstrap_resamples = 10000;
  int sweep_seeds = 3;

  static RunConfig from_json(const json& j);
  json to_json() const;
  static RunConfig load_file(const std::string& path);

  // Applies "a.b.c=value" style overrides onto the json form.
  static json apply_override(json j, const std::string& key_eq_value);

  // Per-editor edit config (learning rate differs by editor kind).
  EditConfig editor_config(EditorKind k) const;

  std::string world_dir() const { return out_dir + "/world"; }
  std::string base_checkpoint() const { return out_dir + "/base.ckpt"; }
  std::string transfer_path() const { return out_dir + "/transfer/transfer.jsonl"; }

  std::string section_hash(const std::string& section) const;
};

}  // namespace kdistill
