#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cnpc/bounds.hpp"
#include "cnpc/circuit.hpp"
#include "cnpc/circuit_runtime.hpp"
#include "cnpc/data_gen.hpp"
#include "cnpc/error.hpp"
#include "cnpc/evaluation.hpp"
#include "cnpc/exact_oracle.hpp"
#include "cnpc/io.hpp"
#include "support.hpp"

using namespace cnpc;
using namespace cnpc::testing;

namespace {

struct World {
  CausalModel model = mnistadd_syn();
  Circuit circuit = compile(model, minfill_order(model));
  CircuitQuery query{circuit, bind_params(circuit, model)};
  FusionEngine engine{query, {"A1", "A2"}};
  Dataset clean;
  Dataset noisy;
  PredictorParams predictor;

  World() {
    DatasetConfig dc;
    dc.n = 800;
    dc.seed = 5;
    dc.embed.epochs = 8;
    clean = make_dataset(model, dc);
    TrainConfig tc;
    tc.epochs = 15;
    tc.hidden_dim = 32;
    tc.batch_size = 64;
    predictor = train_predictor(clean, tc).params;
    noisy = corrupt(clean, CorruptionConfig::parse("gaussian:3"));
  }
};

World& world() {
  static World w;
  return w;
}

std::size_t argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

// Direct computation of the sum distribution for the digit model, without
// the circuit or the fusion engine.
struct Direct {
  double npc0 = 0.0;
  double cnpc1 = 0.0;
};

Direct direct_accuracy(const World& w, const Dataset& ds, double alpha) {
  auto probs = forward_batch(w.predictor, ds.batch(ds.splits.test).x);
  Direct out;
  for (std::size_t i = 0; i < ds.splits.test.size(); ++i) {
    const std::size_t r = ds.splits.test[i];
    const auto truth = ds.attribute_labels(r);
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(19);
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 10; ++b) sums[a + b] += probs[0](row, a) * probs[1](row, b);
    if (argmax(sums) == ds.class_label(r)) out.npc0 += 1.0;

    // A1 fixed to its label; A2 mixes the head with P(A2 | A1).
    Eigen::VectorXd m(10);
    for (int b = 0; b < 10; ++b) {
      const double prior = oracle::conditional(w.model, {{"A2", static_cast<std::size_t>(b)}}, {{"A1", truth[0]}});
      m[b] = std::pow(probs[1](row, b), 1.0 - alpha) * std::pow(prior, alpha);
    }
    if (truth[0] + argmax(m) == ds.class_label(r)) out.cnpc1 += 1.0;
  }
  const double n = static_cast<double>(ds.splits.test.size());
  out.npc0 /= n;
  out.cnpc1 /= n;
  return out;
}

}  // namespace

TEST_CASE("kl divergence") {
  Eigen::VectorXd p(2), q(2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  CHECK(kl(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl(q, q) == 0.0);
  Eigen::VectorXd zero(2);
  zero << 0.0, 1.0;
  CHECK(kl(p, zero) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK_THROWS_AS(kl(p, Eigen::VectorXd::Ones(3)), ValidationError);
}

TEST_CASE("metrics") {
  Metrics all = metrics({1, 2}, {1, 2}, {0, 1, 1, 1}, {0, 1, 1, 1}, 2);
  CHECK(all.task_accuracy == 1.0);
  CHECK(all.mean_attribute_accuracy == 1.0);
  Metrics half = metrics({1, 0}, {1, 2}, {0, 0, 1, 1}, {0, 1, 1, 0}, 2);
  CHECK(half.task_accuracy == 0.5);
  CHECK(half.mean_attribute_accuracy == 0.5);
  CHECK_THROWS_AS(metrics({}, {}, {}, {}, 2), ValidationError);
  CHECK_THROWS_AS(metrics({1}, {1}, {0}, {0, 1}, 2), ValidationError);
}

TEST_CASE("sweep agrees with a direct computation") {
  World& w = world();
  for (const Dataset* ds : {&w.clean, &w.noisy}) {
    SweepReport r = run_sweep({{5, ds, &w.predictor}}, w.engine, {0.9, false, false});
    Direct d = direct_accuracy(w, *ds, 0.9);
    CHECK(find_row(r, "NPC", 0, "5").task_acc == doctest::Approx(d.npc0).epsilon(1e-12));
    CHECK(find_row(r, "CNPC", 0, "5").task_acc == doctest::Approx(d.npc0).epsilon(1e-12));
    CHECK(find_row(r, "CNPC", 1, "5").task_acc == doctest::Approx(d.cnpc1).epsilon(1e-12));
    CHECK(find_row(r, "NPC", 2).task_acc == 1.0);
    CHECK(find_row(r, "CNPC", 2).task_acc == 1.0);
    CHECK(find_row(r, "CNPC", 2).attr_acc == 1.0);
  }
}

TEST_CASE("sweep structure and invariants") {
  World& w = world();
  std::vector<SweepRun> runs{{5, &w.noisy, &w.predictor}, {6, &w.noisy, &w.predictor}};
  SweepReport r = run_sweep(runs, w.engine, {0.9, false, false});
  // 2 variants x 3 budgets x (2 seeds + mean)
  CHECK(r.rows.size() == 18);
  CHECK(r.rows.front().corruption == "gaussian_3");
  CHECK(find_row(r, "CNPC", 1, "mean").task_acc == doctest::Approx(find_row(r, "CNPC", 1, "5").task_acc));

  SweepReport zero = run_sweep(runs, w.engine, {0.0, false, false});
  for (std::size_t b = 0; b <= 2; ++b) {
    CHECK(find_row(zero, "CNPC", b).task_acc == find_row(zero, "NPC", b).task_acc);
    CHECK(find_row(zero, "CNPC", b).attr_acc == find_row(zero, "NPC", b).attr_acc);
  }
  SweepReport val = run_sweep(runs, w.engine, {0.9, false, true});
  CHECK(val.rows.front().corruption == "none");
  SweepReport val_clean = run_sweep({{5, &w.clean, &w.predictor}}, w.engine, {0.9, false, true});
  CHECK(find_row(val, "NPC", 0, "5").task_acc == find_row(val_clean, "NPC", 0, "5").task_acc);

  CHECK(report_csv(r) == report_csv(run_sweep(runs, w.engine, {0.9, false, false})));
  CHECK(report_csv(r).rfind("variant,corruption,alpha,budget,seed,task_acc,attr_acc\n", 0) == 0);
  CHECK_THROWS_AS(run_sweep({}, w.engine, {}), ValidationError);
  CHECK_THROWS_AS(run_sweep(runs, w.engine, {1.2, false, false}), ValidationError);
  CHECK_THROWS_AS(find_row(r, "CNPC", 7), ValidationError);
}

TEST_CASE("sweep rejects a dataset from another model") {
  World& w = world();
  DatasetConfig dc;
  dc.n = 50;
  dc.embed.epochs = 1;
  Dataset other = make_dataset(chain_model(), dc);
  CHECK_THROWS_AS(run_sweep({{1, &other, &w.predictor}}, w.engine, {}), ValidationError);
}

TEST_CASE("alpha ablation and selection") {
  World& w = world();
  std::vector<SweepRun> runs{{5, &w.noisy, &w.predictor}};
  std::vector<double> grid{0.0, 0.5, 1.0};
  SweepReport a = ablate_alpha(runs, w.engine, grid);
  CHECK(a.rows.size() == grid.size() * 2 * 3 * 2);
  CHECK(find_row(a, "CNPC", 1, "mean", 0.5).alpha == 0.5);
  CHECK(default_alpha_grid().size() == 11);

  AlphaSelection s = select_alpha(runs, w.engine, grid);
  REQUIRE(s.scores.size() == 3);
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (s.scores[i] > s.scores[best]) best = i;
  }
  CHECK(s.alpha == grid[best]);
  for (std::size_t i = 0; i < 3; ++i) {
    SweepReport v = run_sweep(runs, w.engine, {grid[i], false, true});
    double mean = 0.0;
    for (std::size_t b = 0; b <= 2; ++b) mean += find_row(v, "CNPC", b).task_acc;
    CHECK(s.scores[i] == doctest::Approx(mean / 3.0).epsilon(1e-14));
  }
  // a grid of equal scores picks the smallest alpha
  AlphaSelection tie = select_alpha(runs, w.engine, {0.0, 0.0});
  CHECK(tie.alpha == 0.0);
  CHECK_THROWS_AS(select_alpha(runs, w.engine, {}), ValidationError);

  nlohmann::json summary = nlohmann::json::parse(report_summary_json(a, runs));
  CHECK(summary.at("cells") == 36);
  CHECK(summary.at("alphas").size() == 3);
  CHECK(summary.at("mean").size() == 18);
}

TEST_CASE("bound verification on random worlds") {
  BoundReport r = verify_bounds(10, 3);
  CHECK(r.trials == 10);
  for (const char* name : {"observational", "npc_interventional", "cnpc_interventional"}) {
    CHECK(r.min_slack(name) >= -1e-9);
  }
  if (r.premise_held > 0) CHECK(r.min_slack("cnpc_within_npc") >= -1e-9);
  for (const char* name : {"observational_equality", "npc_interventional_equality", "cnpc_interventional_equality"}) {
    CHECK(std::abs(r.min_slack(name)) < 1e-9);
  }
  CHECK(r.max_identity_error < 1e-9);
  CHECK(r.max_composition_error < 1e-9);
  CHECK(r.max_z_alpha <= 1.0 + 1e-12);
  CHECK(bounds_csv(r) == bounds_csv(verify_bounds(10, 3)));
  CHECK(bounds_csv(r).rfind("trial,inequality,alpha,lhs,rhs,slack\n", 0) == 0);
}
