#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cnpc/causal_model.hpp"
#include "cnpc/data_gen.hpp"
#include "cnpc/error.hpp"
#include "support.hpp"

using namespace cnpc;
using namespace cnpc::testing;

namespace {

bool has_violation(const std::vector<Violation>& vs, const std::string& text) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.message.find(text) != std::string::npos; });
}

CausalModel a1_a2_y(bool with_cpds = true) {
  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"A2", kBinary, Role::attribute},
                             {"Y", kBinary, Role::class_label}};
  std::map<std::string, CpdTable> cpds;
  if (with_cpds) {
    cpds["A1"] = {"A1", {}, table({{0.5, 0.5}})};
    cpds["A2"] = {"A2", {"A1"}, table({{0.6, 0.4}, {0.2, 0.8}})};
    cpds["Y"] = {"Y", {"A2"}, table({{0.9, 0.1}, {0.1, 0.9}})};
  }
  return CausalModel(vars, {{"A1", "A2"}, {"A2", "Y"}}, cpds);
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("validate accepts a chain ending in the class") {
  CHECK(validate(a1_a2_y()).empty());
  CHECK(validate(chain_model()).empty());
  CHECK(validate(mnistadd_syn()).empty());
}

TEST_CASE("validate reports an attribute below the class") {
  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  CausalModel m(vars, {{"Y", "A1"}});
  auto vs = validate(m);
  CHECK(has_violation(vs, "attribute A1 is a descendant of class"));
  auto it = std::find_if(vs.begin(), vs.end(), [](const Violation& v) { return v.kind == "assumption"; });
  REQUIRE(it != vs.end());
  CHECK(it->element == "A1");
  CHECK_THROWS_AS(require_valid(m), ValidationError);
}

TEST_CASE("validate reports unnormalized rows and cycles") {
  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  std::map<std::string, CpdTable> cpds;
  cpds["A1"] = {"A1", {}, table({{0.5, 0.47}})};
  cpds["Y"] = {"Y", {"A1"}, table({{0.5, 0.5}, {0.5, 0.5}})};
  CHECK(has_violation(validate(CausalModel(vars, {{"A1", "Y"}}, cpds)), "row not normalized"));

  std::vector<Variable> three{{"A1", kBinary, Role::attribute}, {"A2", kBinary, Role::attribute},
                              {"Y", kBinary, Role::class_label}};
  CausalModel cyclic(three, {{"A1", "A2"}, {"A2", "A1"}, {"A2", "Y"}});
  CHECK(has_violation(validate(cyclic), "directed cycle"));

  std::vector<Variable> no_class{{"A1", kBinary, Role::attribute}};
  CHECK(has_violation(validate(CausalModel(no_class, {})), "exactly one class"));

  std::vector<Variable> aux_parent{{"A1", kBinary, Role::attribute}, {"X", kBinary, Role::auxiliary_input},
                                   {"Y", kBinary, Role::class_label}};
  CHECK(has_violation(validate(CausalModel(aux_parent, {{"A1", "X"}, {"X", "Y"}})), "is not an attribute"));
}

TEST_CASE("non_descendants") {
  CausalModel fork = fork_model(0.5, 0.5, 0.5, 0.5, 0.5);
  CHECK(sorted(non_descendants(fork, "V2")) == std::vector<std::string>{"V1", "V3"});
  CausalModel chain = chain_model();
  CHECK(non_descendants(chain, "V1").empty());
  CHECK(sorted(non_descendants(chain, "V3")) == std::vector<std::string>{"V1", "V2"});
  CHECK_THROWS_AS(non_descendants(chain, "V9"), ValidationError);
}

TEST_CASE("depth_order") {
  CHECK(depth_order(mnistadd_syn()) == std::vector<std::string>{"A1", "A2"});

  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"A2", kBinary, Role::attribute},
                             {"A3", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  CausalModel collider(vars, {{"A1", "A3"}, {"A2", "A3"}, {"A1", "Y"}, {"A2", "Y"}, {"A3", "Y"}});
  CHECK(depth_order(collider) == std::vector<std::string>{"A1", "A2", "A3"});

  // Declaration order breaks ties, not names.
  std::vector<Variable> swapped{{"A3", kBinary, Role::attribute}, {"A1", kBinary, Role::attribute},
                                {"Y", kBinary, Role::class_label}};
  CHECK(depth_order(CausalModel(swapped, {{"A3", "Y"}, {"A1", "Y"}})) == std::vector<std::string>{"A3", "A1"});

  std::vector<Variable> single{{"A1", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  CHECK(depth_order(CausalModel(single, {{"A1", "Y"}})) == std::vector<std::string>{"A1"});

  // Depth is the longest path, not the shortest.
  std::vector<Variable> diamond{{"A1", kBinary, Role::attribute}, {"A2", kBinary, Role::attribute},
                                {"A3", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  CausalModel longest(diamond, {{"A1", "A3"}, {"A1", "A2"}, {"A2", "A3"}, {"A3", "Y"}});
  CHECK(depth_order(longest) == std::vector<std::string>{"A1", "A2", "A3"});
}

TEST_CASE("mutilate") {
  CausalModel chain = chain_model();
  InterventionSet do_v2{{{"V2", 1}}};
  CausalModel cut = mutilate(chain, do_v2);
  CHECK(cut.edges() == std::vector<Edge>{{"V2", "V3"}});
  const CpdTable& v2 = cut.cpd(cut.index_of("V2"));
  CHECK(v2.parent_order.empty());
  CHECK(v2.probabilities.rows() == 1);
  CHECK(v2.probabilities(0, 0) == 0.0);
  CHECK(v2.probabilities(0, 1) == 1.0);
  CHECK(cut.cpd(cut.index_of("V3")) == chain.cpd(chain.index_of("V3")));
  CHECK(validate(cut).empty());

  CHECK(mutilate(chain, {}) == chain);
  CHECK(mutilate(cut, do_v2) == cut);

  CausalModel root_cut = mutilate(chain, {{{"V1", 0}}});
  CHECK(root_cut.edges() == chain.edges());
  CHECK(root_cut.cpd(0).probabilities(0, 0) == 1.0);
  CHECK(root_cut.cpd(0).probabilities(0, 1) == 0.0);

  CHECK_THROWS_AS(mutilate(chain, {{{"V3", 1}}}), ValidationError);
  CHECK_THROWS_AS(mutilate(chain, {{{"V2", 2}}}), ValidationError);
  CHECK_THROWS_AS(mutilate(chain, {{{"nope", 0}}}), ValidationError);
}

TEST_CASE("fit_cpds counting") {
  std::vector<Variable> vars{{"A1", kBinary, Role::attribute}, {"Y", kBinary, Role::class_label}};
  CausalModel structure(vars, {{"A1", "Y"}});
  LabelTable data;
  data.columns = {"A1", "Y"};
  data.rows = 10;
  for (int i = 0; i < 10; ++i) {
    data.values.push_back(i < 8 ? 1 : 0);
    data.values.push_back(0);  // Y is always 0
  }
  CausalModel mle = fit_cpds(structure, data, 0.0);
  CHECK(mle.cpd(0).probabilities(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CausalModel laplace = fit_cpds(structure, data, 1.0);
  CHECK(laplace.cpd(0).probabilities(0, 1) == doctest::Approx(0.75).epsilon(1e-15));
  // Y row for A1=1: counts (8, 0) -> (9/10, 1/10) with smoothing 1.
  CHECK(laplace.cpd(1).probabilities(1, 0) == doctest::Approx(0.9));
  CHECK((laplace.cpd(1).probabilities.array() > 0.0).all());

  // A parent configuration that never occurs gives a uniform row.
  std::vector<Variable> three{{"A1", {"a", "b", "c"}, Role::attribute}, {"Y", kBinary, Role::class_label}};
  LabelTable few;
  few.columns = {"A1", "Y"};
  few.rows = 2;
  few.values = {0, 1, 1, 0};
  CausalModel fitted = fit_cpds(CausalModel(three, {{"A1", "Y"}}), few, 1.0);
  CHECK(fitted.cpd(1).probabilities(2, 0) == 0.5);
  CHECK(fitted.cpd(1).probabilities(2, 1) == 0.5);

  few.values = {0, 1, 5, 0};
  CHECK_THROWS_AS(fit_cpds(CausalModel(three, {{"A1", "Y"}}), few, 1.0), ValidationError);
  CHECK_THROWS_AS(fit_cpds(structure, data, -1.0), ValidationError);
}

TEST_CASE("fit_cpds converges on sampled chain data") {
  CausalModel truth = chain_model();
  LabelTable data = sample_labels(truth, 100000, 7);
  CausalModel fitted = fit_cpds(truth, data, 1.0);
  double worst = 0.0;
  for (std::size_t v = 0; v < truth.size(); ++v) {
    worst = std::max(worst, (fitted.cpd(v).probabilities - truth.cpd(v).probabilities).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 0.02);
}

TEST_CASE("model file round trip and parse errors") {
  CausalModel m = mnistadd_syn();
  std::string text = serialize_model(m);
  CausalModel back = parse_model(text);
  CHECK(back == m);
  CHECK(serialize_model(back) == text);

  std::string structure_only = serialize_model(a1_a2_y(false));
  CHECK(serialize_model(parse_model(structure_only)) == structure_only);
  CHECK(structure_digest(parse_model(structure_only)) == structure_digest(a1_a2_y()));

  CHECK_THROWS_AS(parse_model("{"), ValidationError);
  CHECK_THROWS_AS(parse_model("[]"), ValidationError);
  CHECK_THROWS_AS(parse_model(R"({"variables": [{"name": "A", "states": ["0","1"], "role": "attribute"}],
                                 "edges": []})"),
                  ValidationError);
  const std::string bad_rows = R"({"variables": [{"name": "A", "states": ["0","1"], "role": "attribute"},
                                                {"name": "Y", "states": ["0","1"], "role": "class"}],
                                  "edges": [["A", "Y"]],
                                  "cpds": {"A": {"parents": [], "table": [[0.5, 0.5]]},
                                           "Y": {"parents": ["A"], "table": [[0.5, 0.5]]}}})";
  CHECK_THROWS_AS(parse_model(bad_rows), ValidationError);
  const std::string dup = R"({"variables": [{"name": "A", "states": ["0","1"], "role": "attribute"},
                                           {"name": "A", "states": ["0","1"], "role": "class"}],
                             "edges": []})";
  CHECK_THROWS_AS(parse_model(dup), ValidationError);
  const std::string bad_role = R"({"variables": [{"name": "A", "states": ["0","1"], "role": "label"}], "edges": []})";
  CHECK_THROWS_AS(parse_model(bad_role), ValidationError);
}

TEST_CASE("structure digest ignores CPD values but not structure") {
  CausalModel a = fork_model(0.1, 0.2, 0.3, 0.4, 0.5);
  CausalModel b = fork_model(0.9, 0.8, 0.7, 0.6, 0.5);
  CHECK(structure_digest(a) == structure_digest(b));
  CHECK(structure_digest(a) != structure_digest(chain_model()));
}

TEST_CASE("interventions are restricted to attributes") {
  CausalModel chain = chain_model();
  CHECK_NOTHROW(check_interventions(chain, {{{"V1", 1}}}));
  CHECK_THROWS_AS(check_interventions(chain, {{{"V3", 0}}}), ValidationError);
}
