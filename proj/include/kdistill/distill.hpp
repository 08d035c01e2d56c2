#pragma once

#include <string>
#include <vector>

#include "kdistill/model.hpp"
#include "kdistill/sampler.hpp"
#include "kdistill/train.hpp"

namespace kdistill {

enum class AblationMode { none, random_definition, random_transfer, random_transfer_entity_prepended };

AblationMode ablation_from_name(const std::string& name);
const char* ablation_name(AblationMode m);

// Alg. line 8 carries a 1/(|c|-ell) factor while the prose says "summed";
// the mean is the default and sum stays available behind this switch.
enum class LossReduction { mean, sum };

struct EditConfig {
  double learning_rate = 5e-4;
  int epochs = 5;             // K, inner updates per continuation
  double temperature = 2.0;   // tau, applied to both teacher and student logits
  int n_continuations = 5;    // N
  std::uint64_t seed = 0;
  AblationMode ablation = AblationMode::none;
  LossReduction reduction = LossReduction::mean;
  OptimizerKind optimizer = OptimizerKind::adam;
  bool track_definition_ppl = false;

  void validate() const;
};

struct EditRecord {
  std::vector<std::string> entity_ids;
  std::vector<double> step_losses;
  std::vector<std::string> skipped;  // labels of continuations with no supervised positions
  std::vector<double> definition_ppl_trace;
  double wall_seconds = 0.0;
  std::string checkpoint_path;

  long total_steps() const { return static_cast<long>(step_losses.size()); }
};

// softmax(logits / tau)
Vec soften(const Vec& logits, double tau);

// Sum over dt_i * (ln dt_i - ln ds_i) with 0 ln 0 = 0. Inputs must be
// normalized and equally sized.
double kl_div(const Vec& dt, const Vec& ds);

struct DistillLossResult {
  double loss = 0.0;
  Mat dlogits_student;  // gradient w.r.t. the student's raw logits
  int n_positions = 0;  // 0 means skip this continuation
};

// Temperature-softened KL between teacher rows def_len+j and student rows j
// for j in [ell, |c|), averaged (or summed) over those positions. The
// teacher is a constant; gradient flows only into the student logits.
DistillLossResult distill_loss(const DistSeq& teacher, const DistSeq& student, int ell,
                               int def_len, double tau, LossReduction red = LossReduction::mean);

// One editing unit: the definition used as teacher context plus the transfer
// set distilled against it. Ablations remap these fields.
struct EditTask {
  std::string entity_id;
  TokenSeq entity_name;
  TokenSeq definition;
  TransferSet transfer;
};

// Alg. main loop for one entity: per continuation, teacher distributions are
// computed once from the frozen base on [definition; continuation], then K
// epochs of student updates on the continuation alone.
EditRecord distill_entity(const Model& base, Model& student, const EditTask& task,
                          const EditConfig& cfg);

// Multi-entity editing: all (entity, continuation) pairs pooled, shuffled
// with cfg.seed, each distilled with its own definition as teacher context.
EditRecord distill_batch(const Model& base, Model& student, const std::vector<EditTask>& tasks,
                         const EditConfig& cfg);

// Remaps (definition, transfer) pairs for the ablation study. Random modes
// require at least two tasks; random_definition is a derangement.
std::vector<EditTask> apply_ablation(const std::vector<EditTask>& tasks, AblationMode mode,
                                     std::uint64_t seed);

}  // namespace kdistill
