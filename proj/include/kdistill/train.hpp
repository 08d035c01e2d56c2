#pragma once

#include <functional>

#include "kdistill/model.hpp"

namespace kdistill {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 0;

  // Sanity guard; learning rates outside [1e-8, 1e-3] have only produced
  // divergence on the toy architecture.
  void validate() const;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind optimizer_from_name(const std::string& name);

// Adam with default moment decay (0.9/0.999); plain SGD kept for closed-form
// update tests.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, const ModelConfig& cfg);

  // One optimizer step in place. Throws NumericalError on non-finite grads.
  void step(Parameters& params, const Parameters& grads, double lr);

  long steps_taken() const { return t_; }

 private:
  OptimizerKind kind_;
  Parameters m_, v_;
  long t_ = 0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
};

struct PositionTarget {
  int row;         // logits row whose next-token prediction is supervised
  TokenId target;  // the token that should come next
};

struct LossGrad {
  double loss = 0.0;
  Mat dlogits;  // same shape as logits, zero at unsupervised rows
};

// Mean cross-entropy over the given (row, target) pairs.
LossGrad cross_entropy(const Mat& logits, const std::vector<PositionTarget>& targets);

// Standard next-token targets for a whole document: row r predicts doc[r+1].
std::vector<PositionTarget> next_token_targets(const TokenSeq& doc);

using StepLogger = std::function<void(long step, double loss, double lr)>;

// Next-token cross-entropy training over documents. Document order is
// shuffled each epoch from cfg.seed; loss is per-token within each batch.
// Deterministic given (seed, config, data). Non-finite loss aborts.
void pretrain(Model& m, const std::vector<TokenSeq>& corpus, const TrainConfig& cfg,
              const StepLogger& log = nullptr);

}  // namespace kdistill
