#include "kdistill/distill.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace kdistill {

namespace {

double definition_ppl_or_nan(const Model& m, const TokenSeq& def) {
  if (def.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return m.perplexity({def[0]}, TokenSeq(def.begin() + 1, def.end()));
}

// Teacher distributions once per continuation, then K student updates.
void distill_one_continuation(const Model& base, Model& student, Optimizer& opt,
                              const EditTask& task, const Continuation& cont, int cont_idx,
                              const EditConfig& cfg, EditRecord& rec, int& n_used) {
  const TokenSeq& c = cont.tokens;
  if (cont.ell >= static_cast<int>(c.size())) {
    rec.skipped.push_back(task.entity_id + ":" + std::to_string(cont_idx));
    return;
  }

  TokenSeq teacher_input = task.definition;
  teacher_input.insert(teacher_input.end(), c.begin(), c.end());
  const DistSeq teacher = base.forward(teacher_input);

  for (int k = 0; k < cfg.epochs; ++k) {
    ForwardCache fc = student.forward_cached(c);
    DistSeq sd;
    sd.probs = softmax_rows(fc.logits);
    sd.logits = fc.logits;
    const auto dl = distill_loss(teacher, sd, cont.ell, static_cast<int>(task.definition.size()),
                                 cfg.temperature, cfg.reduction);
    if (!std::isfinite(dl.loss)) {
      throw NumericalError("distill: non-finite loss at step " + std::to_string(rec.total_steps() + 1),
                           rec.total_steps() + 1);
    }
    const Parameters grads = student.backward(fc, dl.dlogits_student);
    opt.step(student.params(), grads, cfg.learning_rate);
    rec.step_losses.push_back(dl.loss);
    if (cfg.track_definition_ppl) {
      rec.definition_ppl_trace.push_back(definition_ppl_or_nan(student, task.definition));
    }
  }
  ++n_used;
}

}  // namespace

AblationMode ablation_from_name(const std::string& name) {
  if (name == "none") return AblationMode::none;
  if (name == "random_definition") return AblationMode::random_definition;
  if (name == "random_transfer") return AblationMode::random_transfer;
  if (name == "random_transfer_entity_prepended") return AblationMode::random_transfer_entity_prepended;
  throw ConfigError("unknown ablation mode: " + name);
}

const char* ablation_name(AblationMode m) {
  switch (m) {
    case AblationMode::none: return "none";
    case AblationMode::random_definition: return "random_definition";
    case AblationMode::random_transfer: return "random_transfer";
    case AblationMode::random_transfer_entity_prepended: return "random_transfer_entity_prepended";
  }
  return "?";
}

void EditConfig::validate() const {
  if (temperature <= 0.0) throw ConfigError("edit config: temperature must be > 0");
  if (learning_rate < 1e-8 || learning_rate > 1e-3) {
    throw ConfigError("edit config: learning_rate outside sanity range [1e-8, 1e-3]");
  }
  if (epochs < 0) throw ConfigError("edit config: negative epochs");
  if (n_continuations < 1) throw ConfigError("edit config: n_continuations must be >= 1");
}

Vec soften(const Vec& logits, double tau) {
  if (tau <= 0.0) throw ConfigError("soften: temperature must be > 0");
  return softmax(Vec(logits / tau));
}

double kl_div(const Vec& dt, const Vec& ds) {
  if (dt.size() != ds.size()) throw ConfigError("kl_div: shape mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < dt.size(); ++i) {
    if (dt(i) > 0.0) kl += dt(i) * (std::log(dt(i)) - std::log(ds(i)));
  }
  return kl;
}

DistillLossResult distill_loss(const DistSeq& teacher, const DistSeq& student, int ell,
                               int def_len, double tau, LossReduction red) {
  const int c_len = student.length();
  if (teacher.length() != def_len + c_len) {
    throw ConfigError("distill_loss: teacher length must equal |definition| + |continuation|");
  }
  if (ell < 0) throw ConfigError("distill_loss: negative ell");

  DistillLossResult out;
  out.dlogits_student = Mat::Zero(c_len, student.logits.cols());
  if (ell >= c_len) return out;  // SkipContinuation: nothing after the mention

  out.n_positions = c_len - ell;
  const double scale = red == LossReduction::mean ? 1.0 / out.n_positions : 1.0;
  for (int j = ell; j < c_len; ++j) {
    const Vec t = soften(teacher.logits.row(def_len + j).transpose(), tau);
    const Vec s = soften(student.logits.row(j).transpose(), tau);
    out.loss += kl_div(t, s);
    // d KL(t || softmax(z/tau)) / dz = (s - t) / tau
    out.dlogits_student.row(j) = (scale / tau) * (s - t).transpose();
  }
  out.loss *= scale;
  return out;
}

EditRecord distill_entity(const Model& base, Model& student, const EditTask& task,
                          const EditConfig& cfg) {
  cfg.validate();
  if (task.transfer.continuations.empty()) throw ConfigError("distill_entity: empty transfer set");

  const auto start = std::chrono::steady_clock::now();
  EditRecord rec;
  rec.entity_ids = {task.entity_id};
  if (cfg.track_definition_ppl) {
    rec.definition_ppl_trace.push_back(definition_ppl_or_nan(student, task.definition));
  }

  Optimizer opt(cfg.optimizer, student.config());
  int n_used = 0;
  for (std::size_t i = 0; i < task.transfer.continuations.size(); ++i) {
    distill_one_continuation(base, student, opt, task, task.transfer.continuations[i],
                             static_cast<int>(i), cfg, rec, n_used);
  }
  if (n_used == 0) {
    throw EditFailedError("distill_entity: every continuation was skipped for entity " + task.entity_id);
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

EditRecord distill_batch(const Model& base, Model& student, const std::vector<EditTask>& tasks,
                         const EditConfig& cfg) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("distill_batch: no entities");

  const auto start = std::chrono::steady_clock::now();
  EditRecord rec;
  for (const auto& t : tasks) rec.entity_ids.push_back(t.entity_id);

  // Union of all (entity, continuation) pairs, shuffled once.
  std::vector<std::pair<const EditTask*, int>> pairs;
  for (const auto& t : tasks) {
    for (std::size_t i = 0; i < t.transfer.continuations.size(); ++i) {
      pairs.emplace_back(&t, static_cast<int>(i));
    }
  }
  Rng shuffle_rng = Rng::stream(cfg.seed, "edit-shuffle");
  shuffle_rng.shuffle(pairs);

  Optimizer opt(cfg.optimizer, student.config());
  int n_used = 0;
  for (const auto& [task, idx] : pairs) {
    distill_one_continuation(base, student, opt, *task,
                             task->transfer.continuations[static_cast<std::size_t>(idx)], idx, cfg,
                             rec, n_used);
  }
  if (n_used == 0) {
    throw EditFailedError("distill_batch: every continuation was skipped");
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<EditTask> apply_ablation(const std::vector<EditTask>& tasks, AblationMode mode,
                                     std::uint64_t seed) {
  if (mode == AblationMode::none) return tasks;
  const std::size_t n = tasks.size();
  if (n < 2) throw ConfigError("apply_ablation: random modes need at least two entities");

  std::vector<EditTask> out = tasks;
  if (mode == AblationMode::random_definition) {
    // Shuffled rotation = seeded derangement; with two entities this is the
    // forced swap.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng::stream(seed, "ablation-definition");
    rng.shuffle(idx);
    for (std::size_t j = 0; j < n; ++j) {
      out[idx[j]].definition = tasks[idx[(j + 1) % n]].definition;
    }
    return out;
  }

  // Both transfer-remapping modes borrow each continuation from a distinct
  // other entity when possible.
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, "ablation-transfer", static_cast<std::uint64_t>(i));
    std::vector<std::size_t> donors;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) donors.push_back(j);
    }
    rng.shuffle(donors);

    const std::size_t want = tasks[i].transfer.continuations.size();
    std::vector<Continuation> borrowed;
    for (std::size_t k = 0; k < want; ++k) {
      const EditTask& donor = tasks[donors[k % donors.size()]];
      const auto& pool = donor.transfer.continuations;
      const Continuation& c = pool[rng.uniform_int(pool.size())];
      if (mode == AblationMode::random_transfer_entity_prepended) {
        borrowed.push_back(ensure_entity_mention(c.tokens, tasks[i].entity_name));
      } else {
        borrowed.push_back(c);  // keeps the donor's ell
      }
    }
    out[i].transfer.continuations = std::move(borrowed);
  }
  return out;
}

}  // namespace kdistill
