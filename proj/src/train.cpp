#include "kdistill/train.hpp"

#include <cmath>
#include <numeric>

#include "kdistill/rng.hpp"

namespace kdistill {

void TrainConfig::validate() const {
  if (learning_rate < 1e-8 || learning_rate > 1e-3) {
    throw ConfigError("train config: learning_rate outside sanity range [1e-8, 1e-3]");
  }
  if (epochs < 0) throw ConfigError("train config: negative epochs");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + name);
}

Optimizer::Optimizer(OptimizerKind kind, const ModelConfig& cfg)
    : kind_(kind), m_(Parameters::zeros(cfg)), v_(Parameters::zeros(cfg)) {}

void Optimizer::step(Parameters& params, const Parameters& grads, double lr) {
  if (!grads.all_finite()) {
    throw NumericalError("optimizer: non-finite gradient at step " + std::to_string(t_ + 1), t_ + 1);
  }
  ++t_;
  if (kind_ == OptimizerKind::sgd) {
    Parameters::zip([&](const std::string&, auto& p, const auto& g) { p -= lr * g; }, params,
                    grads);
    return;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  Parameters::zip(
      [&](const std::string&, auto& p, const auto& g, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v.array() = beta2_ * v.array() + (1.0 - beta2_) * g.array().square();
        p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
      },
      params, grads, m_, v_);
}

LossGrad cross_entropy(const Mat& logits, const std::vector<PositionTarget>& targets) {
  if (targets.empty()) throw ConfigError("cross_entropy: no supervised positions");
  LossGrad out;
  out.dlogits = Mat::Zero(logits.rows(), logits.cols());
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  const Mat logp = log_softmax_rows(logits);
  for (const auto& [row, target] : targets) {
    out.loss -= logp(row, target);
    out.dlogits.row(row) += inv_n * logp.row(row).array().exp().matrix();
    out.dlogits(row, target) -= inv_n;
  }
  out.loss *= inv_n;
  return out;
}

std::vector<PositionTarget> next_token_targets(const TokenSeq& doc) {
  std::vector<PositionTarget> targets;
  for (std::size_t r = 0; r + 1 < doc.size(); ++r) {
    targets.push_back({static_cast<int>(r), doc[r + 1]});
  }
  return targets;
}

void pretrain(Model& m, const std::vector<TokenSeq>& corpus, const TrainConfig& cfg,
              const StepLogger& log) {
  if (corpus.empty()) throw ConfigError("pretrain: empty corpus");
  cfg.validate();

  // Trim to context length; drop documents too short to supervise anything.
  const auto max_len = static_cast<std::size_t>(m.config().max_seq_len);
  std::vector<TokenSeq> docs;
  docs.reserve(corpus.size());
  for (TokenSeq doc : corpus) {
    if (doc.size() > max_len) doc.resize(max_len);
    if (doc.size() >= 2) docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw ConfigError("pretrain: no document has at least two tokens");

  Optimizer opt(OptimizerKind::adam, m.config());
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, "pretrain-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      long total_tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        total_tokens += static_cast<long>(docs[order[i]].size()) - 1;
      }

      Parameters grads = Parameters::zeros(m.config());
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const TokenSeq& doc = docs[order[i]];
        // Feed all but the last token; every row is supervised.
        TokenSeq input(doc.begin(), doc.end() - 1);
        std::vector<PositionTarget> targets;
        for (std::size_t r = 0; r + 1 < doc.size(); ++r) {
          targets.push_back({static_cast<int>(r), doc[r + 1]});
        }
        ForwardCache fc = m.forward_cached(input);
        LossGrad lg = cross_entropy(fc.logits, targets);
        const double w = static_cast<double>(targets.size()) / static_cast<double>(total_tokens);
        batch_loss += lg.loss * w;
        Parameters g = m.backward(fc, Mat(lg.dlogits * w));
        Parameters::zip([](const std::string&, auto& acc, const auto& add) { acc += add; }, grads, g);
      }

      ++step;
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("pretrain: non-finite loss at step " + std::to_string(step), step);
      }
      opt.step(m.params(), grads, cfg.learning_rate);
      if (log) log(step, batch_loss, cfg.learning_rate);
    }
  }
}

}  // namespace kdistill
