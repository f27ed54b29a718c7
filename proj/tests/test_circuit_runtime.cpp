#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include "cnpc/circuit.hpp"
#include "cnpc/circuit_runtime.hpp"
#include "cnpc/data_gen.hpp"
#include "cnpc/error.hpp"
#include "cnpc/exact_oracle.hpp"
#include "cnpc/random_world.hpp"
#include "cnpc/rng.hpp"
#include "support.hpp"

using namespace cnpc;
using namespace cnpc::testing;

namespace {

struct Compiled {
  CausalModel model;
  Circuit circuit;
  std::unique_ptr<CircuitQuery> query;

  explicit Compiled(CausalModel m) : model(std::move(m)), circuit(compile(model, minfill_order(model))) {
    query = std::make_unique<CircuitQuery>(circuit, bind_params(circuit, model));
  }
};

}  // namespace

TEST_CASE("evaluate basics") {
  Compiled chain(chain_model());
  const Circuit& c = chain.circuit;
  const ParamBinding& p = chain.query->params();
  CHECK(evaluate(c, p, all_indicators(c)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(evaluate(c, p, all_indicators(c, 0.0)) == 0.0);
  IndicatorState short_state;
  short_state.values.assign(c.indicator_count - 1, 1.0);
  CHECK_THROWS_AS(evaluate(c, p, short_state), ValidationError);
}

TEST_CASE("marginal, conditional and pass counts on the chain") {
  Compiled chain(chain_model());
  CircuitQuery& q = *chain.query;
  CHECK(q.marginal({}) == doctest::Approx(1.0).epsilon(1e-15));

  std::size_t before = q.passes();
  CHECK(q.marginal({{"V3", 1}}) == doctest::Approx(0.346).epsilon(1e-14));
  CHECK(q.passes() == before + 1);
  CHECK(q.marginal({{"V1", 1}, {"V2", 1}, {"V3", 1}}) == doctest::Approx(0.189).epsilon(1e-14));

  before = q.passes();
  CHECK(q.conditional({{"V1", 1}}, {{"V3", 1}}) == doctest::Approx(0.192 / 0.346).epsilon(1e-13));
  CHECK(q.passes() == before + 2);
  CHECK(q.conditional({{"V3", 1}}, {}) == doctest::Approx(q.marginal({{"V3", 1}})).epsilon(1e-15));
  CHECK(q.conditional({{"V3", 0}}, {{"V3", 1}}) == 0.0);

  before = q.passes();
  CHECK(q.interventional({{"V3", 1}}, {{{"V2", 1}}}) == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(q.passes() == before + 1);
  CHECK(q.interventional({{"V1", 1}}, {{{"V2", 1}}}) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(q.interventional({{"V2", 0}}, {{{"V2", 1}}}) == 0.0);
  CHECK(q.interventional({{"V3", 1}}, {}) == q.marginal({{"V3", 1}}));
}

TEST_CASE("zero-probability evidence") {
  Compiled zero(fork_model(0.5, 0.0, 0.0, 0.5, 0.5));
  CHECK_THROWS_AS(zero.query->conditional({{"V1", 1}}, {{"V2", 1}}), PreconditionError);
}

TEST_CASE("intervening on V2 leaves exactly the V1 parameter") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    double p1 = rng.uniform();
    Compiled fork(fork_model(p1, rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()));
    const CpdTable& phi = fork.model.cpd(0);
    CHECK(fork.query->interventional({{"V1", 1}}, {{{"V2", 0}}}) == phi.probabilities(0, 1));
    CHECK(fork.query->interventional({{"V1", 0}}, {{{"V2", 0}}}) == phi.probabilities(0, 0));
  }
}

TEST_CASE("interventions do not touch the base binding") {
  Compiled chain(chain_model());
  ParamBinding copy = chain.query->params();
  chain.query->interventional({{"V3", 1}}, {{{"V2", 1}}});
  chain.query->interventional_attr_table({{{"V1", 0}}});
  CHECK(chain.query->params().values == copy.values);
}

TEST_CASE("random models agree with the oracle") {
  Rng rng(404);
  for (int trial = 0; trial < 40; ++trial) {
    Compiled m(random_model(rng));
    const CausalModel& model = m.model;
    InterventionSet intervention = random_intervention(model, rng);
    CausalModel cut = mutilate(model, intervention);
    for (std::size_t v = 0; v < model.size(); ++v) {
      for (std::size_t s = 0; s < model.variable(v).cardinality(); ++s) {
        Assignment e{{model.variable(v).name, s}};
        CHECK(std::abs(m.query->marginal(e) - oracle::marginal(model, e)) < 1e-9);
        CHECK(std::abs(m.query->interventional(e, intervention) - oracle::marginal(cut, e)) < 1e-9);
        std::size_t other = (v + 1) % model.size();
        Assignment ev{{model.variable(other).name, 0}};
        if (other != v && oracle::marginal(model, ev) > 0.0) {
          CHECK(std::abs(m.query->conditional(e, ev) - oracle::conditional(model, e, ev)) < 1e-9);
        }
      }
    }
    // non-descendants of the intervened attribute keep their marginals
    const std::string& target = intervention.assignments.begin()->first;
    for (const auto& name : non_descendants(model, target)) {
      Assignment e{{name, 0}};
      CHECK(std::abs(m.query->interventional(e, intervention) - m.query->marginal(e)) < 1e-9);
    }
  }
}

TEST_CASE("attribute tables") {
  Compiled gen(mnistadd_syn());
  Eigen::VectorXd t = gen.query->interventional_attr_table({{{"A1", 3}}});
  REQUIRE(t.size() == 100);
  CHECK(t.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t[3 * 10 + 4] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(t[3 * 10 + 7] == doctest::Approx(0.2 / 9.0).epsilon(1e-14));
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (i / 10 != 3) CHECK(t[i] == 0.0);
  }

  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Compiled m(random_model(rng));
    Eigen::VectorXd circuit_table = m.query->interventional_attr_table({});
    Eigen::VectorXd oracle_table = oracle::marginal_table(m.model, m.model.attribute_indices());
    CHECK((circuit_table - oracle_table).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("class conditional table") {
  Compiled gen(mnistadd_syn());
  ClassConditionalTable t = gen.query->class_conditional_table();
  REQUIRE(t.probs.rows() == 100);
  REQUIRE(t.probs.cols() == 19);
  CHECK(t.flagged_count == 0);
  for (Eigen::Index a = 0; a < 100; ++a) CHECK(t.probs(a, a / 10 + a % 10) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    Compiled m(random_model(rng));
    ClassConditionalTable ct = m.query->class_conditional_table();
    const auto attrs = m.model.attribute_indices();
    Eigen::VectorXd prior = oracle::marginal_table(m.model, attrs);
    Eigen::VectorXd joint = oracle::marginal_table(m.model, [&] {
      auto v = attrs;
      v.push_back(m.model.class_index());
      return v;
    }());
    const Eigen::Index ny = ct.probs.cols();
    for (Eigen::Index a = 0; a < ct.probs.rows(); ++a) {
      for (Eigen::Index y = 0; y < ny; ++y) {
        CHECK(std::abs(ct.probs(a, y) - joint[a * ny + y] / prior[a]) < 1e-9);
      }
    }
  }

  // A2 never takes state 1 when A1 = 0, so (0, 1) has no mass.
  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"A2", kBinary, Role::attribute},
                             {"Y", {"a", "b", "c"}, Role::class_label}};
  std::map<std::string, CpdTable> cpds;
  cpds["A1"] = {"A1", {}, table({{0.5, 0.5}})};
  cpds["A2"] = {"A2", {"A1"}, table({{1.0, 0.0}, {0.5, 0.5}})};
  cpds["Y"] = {"Y", {"A1", "A2"}, table({{0.2, 0.3, 0.5}, {0.1, 0.1, 0.8}, {1, 0, 0}, {0, 1, 0}})};
  Compiled gap(CausalModel(vars, {{"A1", "A2"}, {"A1", "Y"}, {"A2", "Y"}}, cpds));
  ClassConditionalTable g = gap.query->class_conditional_table();
  CHECK(g.flagged_count == 1);
  CHECK(g.flagged[1]);
  CHECK(g.probs(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(g.probs(0, 2) == doctest::Approx(0.5));
}

TEST_CASE("parameter binding checks the model") {
  Compiled chain(chain_model());
  CHECK_THROWS_AS(bind_params(chain.circuit, fork_model(0.5, 0.5, 0.5, 0.5, 0.5)), ValidationError);
  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  CHECK_THROWS_AS(bind_params(chain.circuit, CausalModel(vars, {{"A1", "Y"}})), ValidationError);
}

TEST_CASE("concurrent queries agree") {
  Compiled gen(mnistadd_syn());
  const Eigen::VectorXd reference = gen.query->interventional_attr_table({{{"A1", 2}}});
  std::vector<Eigen::VectorXd> results(4);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < results.size(); ++i) {
    threads.emplace_back([&, i] { results[i] = gen.query->interventional_attr_table({{{"A1", 2}}}); });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : results) CHECK(r == reference);
}
