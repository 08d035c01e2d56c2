#include <doctest.h>

#include <cmath>

#include "kdistill/distill.hpp"
#include "kdistill/rng.hpp"
#include "testutil.hpp"

using namespace kdistill;

namespace {

Vec vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v(i++) = x;
  return v;
}

// Spreadsheet-style oracle for the distillation objective: softmax both
// sides at temperature tau, KL per supervised position, divide by the count.
double distill_loss_oracle(const Mat& teacher_logits, const Mat& student_logits, int ell,
                           int def_len, double tau) {
  const int c_len = static_cast<int>(student_logits.rows());
  double total = 0.0;
  int count = 0;
  for (int j = ell; j < c_len; ++j) {
    Vec t = teacher_logits.row(def_len + j).transpose() / tau;
    Vec s = student_logits.row(j).transpose() / tau;
    t = (t.array() - t.maxCoeff()).exp();
    t /= t.sum();
    s = (s.array() - s.maxCoeff()).exp();
    s /= s.sum();
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      total += t(k) * (std::log(t(k)) - std::log(s(k)));
    }
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

DistSeq dist_from_logits(Mat logits) {
  DistSeq d;
  d.probs = softmax_rows(logits);
  d.logits = std::move(logits);
  return d;
}

EditTask simple_task(const std::string& id, TokenSeq name, TokenSeq def,
                     std::vector<Continuation> conts) {
  EditTask t;
  t.entity_id = id;
  t.entity_name = std::move(name);
  t.definition = std::move(def);
  t.transfer.entity_id = t.entity_id;
  t.transfer.continuations = std::move(conts);
  return t;
}

}  // namespace

TEST_CASE("soften closed forms") {
  CHECK(soften(vec({2.0, 0.0}), 2.0)(0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(soften(vec({2.0, 0.0}), 2.0)(1) == doctest::Approx(0.2689).epsilon(1e-4));

  // tau = 1 is the plain softmax.
  const Vec z = vec({0.3, -1.2, 2.0, 0.0});
  CHECK((soften(z, 1.0) - softmax(z)).cwiseAbs().maxCoeff() < 1e-15);

  // Argmax is invariant under any positive temperature.
  for (double tau : {0.25, 1.0, 2.0, 10.0}) {
    Eigen::Index i_soft, i_raw;
    soften(z, tau).maxCoeff(&i_soft);
    z.maxCoeff(&i_raw);
    CHECK(i_soft == i_raw);
  }

  CHECK_THROWS_AS(soften(z, 0.0), ConfigError);
  CHECK_THROWS_AS(soften(z, -1.0), ConfigError);
}

TEST_CASE("kl_div closed forms and properties") {
  CHECK(kl_div(vec({0.5, 0.5}), vec({0.5, 0.5})) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kl_div(vec({1.0, 0.0}), vec({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(kl_div(vec({0.5, 0.5}), vec({0.25, 0.75})) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(kl_div(vec({0.5, 0.5}), vec({0.25, 0.75})) == doctest::Approx(0.1438).epsilon(1e-3));

  CHECK_THROWS_AS(kl_div(vec({1.0, 0.0}), vec({1.0})), ConfigError);

  // Nonnegativity, and zero iff equal, over random softmax pairs.
  Rng rng(5);
  for (int it = 0; it < 200; ++it) {
    Vec a(6), b(6);
    for (int i = 0; i < 6; ++i) {
      a(i) = rng.normal();
      b(i) = rng.normal();
    }
    const Vec pa = softmax(a);
    const Vec pb = softmax(b);
    REQUIRE(kl_div(pa, pb) >= 0.0);
    REQUIRE(kl_div(pa, pa) < 1e-12);
    if ((pa - pb).cwiseAbs().maxCoeff() > 1e-6) REQUIRE(kl_div(pa, pb) > 1e-9);
  }
}

TEST_CASE("distill_loss: 3-position hand case over a 4-token vocabulary") {
  // |def| = 2, |c| = 4, ell = 1: supervised student rows 1..3, teacher rows 3..5.
  Mat teacher(6, 4), student(4, 4);
  teacher << 0.1, -0.2, 0.3, 0.0,
             1.0, 0.5, -0.5, 0.2,
             0.7, 0.7, 0.1, -0.1,
             2.0, 0.0, 1.0, -1.0,
             0.3, 0.9, -0.2, 0.4,
             -0.5, 0.1, 0.6, 1.2;
  student << 0.0, 0.0, 0.0, 0.0,
             1.5, -0.5, 0.8, 0.1,
             0.2, 0.4, -0.6, 0.9,
             -1.0, 2.0, 0.3, 0.0;

  const double tau = 2.0;
  const auto res = distill_loss(dist_from_logits(teacher), dist_from_logits(student), 1, 2, tau);
  CHECK(res.n_positions == 3);
  CHECK(res.loss == doctest::Approx(distill_loss_oracle(teacher, student, 1, 2, tau)).epsilon(1e-9));

  // Positions at or before ell contribute nothing.
  CHECK(res.dlogits_student.row(0).cwiseAbs().maxCoeff() == 0.0);
  for (int j = 1; j < 4; ++j) CHECK(res.dlogits_student.row(j).cwiseAbs().maxCoeff() > 0.0);

  // Changing the student's logits at row 0 changes neither loss nor gradient.
  Mat student2 = student;
  student2.row(0) << 9.0, -9.0, 3.0, 1.0;
  const auto res2 = distill_loss(dist_from_logits(teacher), dist_from_logits(student2), 1, 2, tau);
  CHECK(res2.loss == doctest::Approx(res.loss).epsilon(1e-12));
  CHECK((res2.dlogits_student.bottomRows(3) - res.dlogits_student.bottomRows(3))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // Sum reduction differs from mean by exactly the position count.
  const auto sum_res =
      distill_loss(dist_from_logits(teacher), dist_from_logits(student), 1, 2, tau,
                   LossReduction::sum);
  CHECK(sum_res.loss == doctest::Approx(res.loss * 3.0).epsilon(1e-12));
}

TEST_CASE("distill_loss: single supervised position equals one kl_div") {
  Mat teacher(3, 4), student(2, 4);
  teacher.setRandom();
  student.setRandom();
  const double tau = 2.0;
  const auto res = distill_loss(dist_from_logits(teacher), dist_from_logits(student), 1, 1, tau);
  CHECK(res.n_positions == 1);
  const Vec t = soften(teacher.row(2).transpose(), tau);
  const Vec s = soften(student.row(1).transpose(), tau);
  CHECK(res.loss == doctest::Approx(kl_div(t, s)).epsilon(1e-12));
}

TEST_CASE("distill_loss: skip signal and shape checks") {
  Mat teacher(4, 4), student(2, 4);
  teacher.setRandom();
  student.setRandom();
  const auto skip = distill_loss(dist_from_logits(teacher), dist_from_logits(student), 2, 2, 2.0);
  CHECK(skip.n_positions == 0);
  CHECK(skip.loss == 0.0);

  CHECK_THROWS_AS(
      distill_loss(dist_from_logits(teacher), dist_from_logits(student), 0, 1, 2.0),
      ConfigError);  // teacher length mismatch
}

TEST_CASE("identical student and base give zero loss and zero gradient") {
  const auto cfg = kdtest::tiny_config(12, 2, 16, 2, 32);
  const Model base = kdtest::random_model(cfg, 41);
  const Model student = base.deep_copy(Role::student);

  const TokenSeq c = {4, 5, 6, 7, 8};
  // Empty definition as teacher prefix: teacher and student see the same input.
  const DistSeq teacher = base.forward(c);
  ForwardCache fc = student.forward_cached(c);
  DistSeq sd;
  sd.probs = softmax_rows(fc.logits);
  sd.logits = fc.logits;
  const auto res = distill_loss(teacher, sd, 1, 0, 2.0);
  CHECK(res.loss < 1e-12);
  CHECK(res.dlogits_student.cwiseAbs().maxCoeff() < 1e-12);

  const Parameters grads = student.backward(fc, res.dlogits_student);
  double gmax = 0.0;
  grads.visit([&](const std::string&, const auto& g) {
    gmax = std::max(gmax, g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
  });
  CHECK(gmax < 1e-9);
}

TEST_CASE("analytic distill gradient matches central finite differences") {
  const auto cfg = kdtest::tiny_config(14, 2, 16, 2, 32);
  const Model base = kdtest::random_model(cfg, 51);
  Model student = kdtest::random_model(cfg, 52);

  const TokenSeq def = {9, 10, 11};
  const TokenSeq c = {4, 5, 6, 7};
  const int ell = 1;
  const double tau = 2.0;

  TokenSeq full = def;
  full.insert(full.end(), c.begin(), c.end());
  const DistSeq teacher = base.forward(full);

  ForwardCache fc = student.forward_cached(c);
  DistSeq sd;
  sd.probs = softmax_rows(fc.logits);
  sd.logits = fc.logits;
  const auto dl = distill_loss(teacher, sd, ell, static_cast<int>(def.size()), tau);
  const Parameters analytic = student.backward(fc, dl.dlogits_student);

  std::vector<std::pair<double*, double>> flat;
  Parameters::zip(
      [&](const std::string&, auto& p, const auto& g) {
        for (Eigen::Index i = 0; i < p.size(); ++i) flat.emplace_back(p.data() + i, g.data()[i]);
      },
      student.params(), analytic);

  auto loss_fn = [&]() {
    ForwardCache f = student.forward_cached(c);
    DistSeq s;
    s.probs = softmax_rows(f.logits);
    s.logits = f.logits;
    return distill_loss(teacher, s, ell, static_cast<int>(def.size()), tau).loss;
  };

  Rng rng(404);
  const double h = 1e-5;
  for (int s = 0; s < 40; ++s) {
    auto& [ptr, analytic_g] = flat[rng.uniform_int(flat.size())];
    const double saved = *ptr;
    *ptr = saved + h;
    const double up = loss_fn();
    *ptr = saved - h;
    const double down = loss_fn();
    *ptr = saved;
    const double fd = (up - down) / (2.0 * h);
    const double rel =
        std::abs(fd - analytic_g) / std::max({std::abs(fd), std::abs(analytic_g), 1e-6});
    REQUIRE(rel < 1e-3);
  }
}

TEST_CASE("distill_entity: K=0 no-op, step accounting, frozen teacher") {
  const auto cfg = kdtest::tiny_config(20, 2, 16, 2, 64);
  const Model base = kdtest::random_model(cfg, 61);

  const EditTask task = simple_task("e1", {5}, {5, 9, 10},
                                    {{{5, 6, 7, 8}, 1, false},
                                     {{12, 5, 13}, 2, false},
                                     {{5}, 1, true}});  // third has no supervised positions

  EditConfig cfg0;
  cfg0.epochs = 0;
  Model s0 = base.deep_copy(Role::student);
  const std::uint64_t before = s0.checksum();
  distill_entity(base, s0, task, cfg0);
  CHECK(s0.checksum() == before);

  EditConfig cfg5;
  cfg5.epochs = 5;
  cfg5.learning_rate = 3e-4;
  Model s5 = base.deep_copy(Role::student);
  const std::uint64_t base_before = base.checksum();
  const EditRecord rec = distill_entity(base, s5, task, cfg5);

  // total steps = non-skipped continuations x K
  CHECK(rec.total_steps() == 2 * 5);
  CHECK(rec.skipped.size() == 1);
  CHECK(base.checksum() == base_before);  // teacher frozen
  CHECK(s5.checksum() != before);
  for (double l : rec.step_losses) CHECK(std::isfinite(l));
}

TEST_CASE("distill_entity fails when every continuation is skipped") {
  const auto cfg = kdtest::tiny_config(20, 1, 8, 2, 64);
  const Model base = kdtest::random_model(cfg, 62);
  const EditTask task = simple_task("e1", {5}, {5, 9}, {{{5}, 1, true}, {{5, 6}, 2, false}});
  Model s = base.deep_copy(Role::student);
  EditConfig ec;
  CHECK_THROWS_AS(distill_entity(base, s, task, ec), EditFailedError);
}

TEST_CASE("distill_batch: seeded shuffle determinism and single-entity equivalence") {
  const auto cfg = kdtest::tiny_config(24, 2, 16, 2, 64);
  const Model base = kdtest::random_model(cfg, 63);

  std::vector<EditTask> tasks;
  for (int e = 0; e < 3; ++e) {
    const TokenId name = static_cast<TokenId>(5 + e);
    tasks.push_back(simple_task("e" + std::to_string(e), {name}, {name, 15, 16},
                                {{{name, 8, 9, 10}, 1, false}, {{name, 11, 12}, 1, false}}));
  }

  EditConfig ec;
  ec.epochs = 2;
  ec.learning_rate = 3e-4;
  ec.seed = 9;

  Model a = base.deep_copy(Role::student);
  Model b = base.deep_copy(Role::student);
  distill_batch(base, a, tasks, ec);
  distill_batch(base, b, tasks, ec);
  CHECK(a.checksum() == b.checksum());

  EditConfig ec2 = ec;
  ec2.seed = 10;
  Model c = base.deep_copy(Role::student);
  distill_batch(base, c, tasks, ec2);
  CHECK(c.checksum() != a.checksum());  // different shuffled order

  // A single-entity batch performs the same update multiset as
  // distill_entity; with one continuation the order coincides too.
  std::vector<EditTask> one = {simple_task("solo", {7}, {7, 15}, {{{7, 9, 10}, 1, false}})};
  Model d = base.deep_copy(Role::student);
  Model e = base.deep_copy(Role::student);
  distill_batch(base, d, one, ec);
  distill_entity(base, e, one[0], ec);
  CHECK(d.checksum() == e.checksum());
}

TEST_CASE("apply_ablation: identity, forced swap, and transfer remapping") {
  std::vector<EditTask> tasks;
  for (int e = 0; e < 2; ++e) {
    const TokenId name = static_cast<TokenId>(5 + e);
    tasks.push_back(simple_task("e" + std::to_string(e), {name}, {name, 15, 16},
                                {{{name, 8, 9}, 1, false}}));
  }

  const auto same = apply_ablation(tasks, AblationMode::none, 1);
  CHECK(same[0].definition == tasks[0].definition);
  CHECK(same[1].definition == tasks[1].definition);

  // Two entities force the swap derangement.
  const auto swapped = apply_ablation(tasks, AblationMode::random_definition, 1);
  CHECK(swapped[0].definition == tasks[1].definition);
  CHECK(swapped[1].definition == tasks[0].definition);
  CHECK(swapped[0].transfer.continuations[0].tokens == tasks[0].transfer.continuations[0].tokens);

  // random_transfer borrows the donor's continuation with the donor's ell.
  const auto borrowed = apply_ablation(tasks, AblationMode::random_transfer, 1);
  CHECK(borrowed[0].definition == tasks[0].definition);
  CHECK(borrowed[0].transfer.continuations[0].tokens == tasks[1].transfer.continuations[0].tokens);
  CHECK(borrowed[1].transfer.continuations[0].tokens == tasks[0].transfer.continuations[0].tokens);

  // ...and the prepended variant re-anchors ell on the recipient's name.
  const auto prepended =
      apply_ablation(tasks, AblationMode::random_transfer_entity_prepended, 1);
  const auto& cont = prepended[0].transfer.continuations[0];
  CHECK(cont.tokens[0] == 5);  // recipient name prepended
  CHECK(cont.ell == 1);
  CHECK(cont.mention_prepended);

  CHECK_THROWS_AS(apply_ablation({tasks[0]}, AblationMode::random_definition, 1), ConfigError);
}

TEST_CASE("edit config guards") {
  EditConfig ec;
  ec.temperature = 0.0;
  CHECK_THROWS_AS(ec.validate(), ConfigError);
  ec.temperature = 2.0;
  ec.learning_rate = 5e-3;
  CHECK_THROWS_AS(ec.validate(), ConfigError);
  ec.learning_rate = 5e-4;
  CHECK_NOTHROW(ec.validate());
}
