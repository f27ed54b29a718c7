#ifndef CNPC_TESTS_SUPPORT_HPP_
#define CNPC_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/causal_model.hpp"

namespace cnpc::testing {

inline const std::vector<std::string> kBinary{"0", "1"};

inline Eigen::MatrixXd table(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// V1 -> V2 -> V3 with P(v1)=0.3, P(v2|v1)=0.9, P(v2|~v1)=0.2, P(v3|v2)=0.7, P(v3|~v2)=0.1.
// V3 plays the class role.
inline CausalModel chain_model() {
  std::vector<Variable> vars{{"V1", kBinary, Role::attribute}, {"V2", kBinary, Role::attribute},
                             {"V3", kBinary, Role::class_label}};
  std::map<std::string, CpdTable> cpds;
  cpds["V1"] = {"V1", {}, table({{0.7, 0.3}})};
  cpds["V2"] = {"V2", {"V1"}, table({{0.8, 0.2}, {0.1, 0.9}})};
  cpds["V3"] = {"V3", {"V2"}, table({{0.9, 0.1}, {0.3, 0.7}})};
  return CausalModel(vars, {{"V1", "V2"}, {"V2", "V3"}}, cpds);
}

// V2 <- V1 -> V3 with binary rows given as P(state 1).
inline CausalModel fork_model(double p1, double p2_0, double p2_1, double p3_0, double p3_1) {
  std::vector<Variable> vars{{"V1", kBinary, Role::attribute}, {"V2", kBinary, Role::attribute},
                             {"V3", kBinary, Role::class_label}};
  std::map<std::string, CpdTable> cpds;
  cpds["V1"] = {"V1", {}, table({{1.0 - p1, p1}})};
  cpds["V2"] = {"V2", {"V1"}, table({{1.0 - p2_0, p2_0}, {1.0 - p2_1, p2_1}})};
  cpds["V3"] = {"V3", {"V1"}, table({{1.0 - p3_0, p3_0}, {1.0 - p3_1, p3_1}})};
  return CausalModel(vars, {{"V1", "V2"}, {"V1", "V3"}}, cpds);
}

// Product of CPD entries, computed straight from the tables.
inline double brute_joint(const CausalModel& model, const std::vector<std::size_t>& states) {
  double p = 1.0;
  for (std::size_t v = 0; v < model.size(); ++v) {
    const auto& var = model.variable(v);
    const CpdTable& cpd = model.cpds().at(var.name);
    std::size_t row = 0;
    for (const auto& parent : cpd.parent_order) {
      std::size_t idx = model.index_of(parent);
      row = row * model.variable(idx).cardinality() + states[idx];
    }
    p *= cpd.probabilities(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(states[v]));
  }
  return p;
}

// Calls visit(states) for every full assignment, first variable most significant.
template <typename Visit>
void for_each_assignment(const CausalModel& model, Visit visit) {
  std::vector<std::size_t> states(model.size(), 0);
  while (true) {
    visit(states);
    std::size_t v = model.size();
    while (v > 0) {
      --v;
      if (++states[v] < model.variable(v).cardinality()) break;
      states[v] = 0;
      if (v == 0) return;
    }
    if (model.size() == 0) return;
  }
}

// Sum of brute_joint over assignments consistent with `partial`.
inline double brute_marginal(const CausalModel& model, const Assignment& partial) {
  double total = 0.0;
  for_each_assignment(model, [&](const std::vector<std::size_t>& s) {
    for (const auto& [name, state] : partial) {
      if (s[model.index_of(name)] != state) return;
    }
    total += brute_joint(model, s);
  });
  return total;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cnpc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cnpc::testing

#endif  // CNPC_TESTS_SUPPORT_HPP_
