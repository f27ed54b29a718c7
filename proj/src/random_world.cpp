#include "cnpc/random_world.hpp"

#include <algorithm>

#include "cnpc/error.hpp"

namespace cnpc {

namespace {

std::vector<std::string> state_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

}  // namespace

CausalModel random_cpds(const CausalModel& model, Rng& rng) {
  std::map<std::string, CpdTable> cpds;
  for (std::size_t v = 0; v < model.size(); ++v) {
    const auto& var = model.variable(v);
    auto parents = model.parent_order(v);
    std::size_t rows = 1;
    std::vector<std::string> names;
    for (auto p : parents) {
      rows *= model.variable(p).cardinality();
      names.push_back(model.variable(p).name);
    }
    Eigen::MatrixXd table(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(var.cardinality()));
    for (Eigen::Index r = 0; r < table.rows(); ++r) table.row(r) = rng.dirichlet(var.cardinality()).transpose();
    cpds.emplace(var.name, CpdTable{var.name, std::move(names), std::move(table)});
  }
  return CausalModel(model.variables(), model.edges(), std::move(cpds));
}

CausalModel random_model(Rng& rng, const RandomModelConfig& config) {
  if (config.min_variables < 2 || config.max_variables < config.min_variables || config.max_states < 2) {
    throw ValidationError("random_model: invalid configuration");
  }
  const std::size_t n = draw_between(rng, config.min_variables, config.max_variables);
  std::vector<Variable> vars;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    vars.push_back({"V" + std::to_string(i), state_labels(draw_between(rng, 2, config.max_states)), Role::attribute});
  }
  vars.push_back({"Y", state_labels(draw_between(rng, 2, config.max_states)), Role::class_label});
  std::vector<Edge> edges;
  for (std::size_t j = 1; j + 1 < n; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (rng.uniform() < config.edge_probability) edges.emplace_back(vars[i].name, vars[j].name);
    }
  }
  std::vector<std::string> y_parents;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (rng.uniform() < config.edge_probability) y_parents.push_back(vars[i].name);
  }
  if (y_parents.empty()) y_parents.push_back(vars[rng.index(n - 1)].name);
  for (const auto& p : y_parents) edges.emplace_back(p, "Y");
  return random_cpds(CausalModel(std::move(vars), std::move(edges)), rng);
}

CausalModel random_verification_world(Rng& rng, const VerificationWorldConfig& config) {
  const std::size_t k = draw_between(rng, config.min_attributes, config.max_attributes);
  std::vector<Variable> vars;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < k; ++i) {
    vars.push_back({"A" + std::to_string(i + 1), state_labels(draw_between(rng, 2, config.max_states)), Role::attribute});
    for (std::size_t p = 0; p < i; ++p) {
      if (rng.uniform() < 0.5) edges.emplace_back(vars[p].name, vars[i].name);
    }
  }
  vars.push_back({"X", state_labels(draw_between(rng, config.min_x_states, config.max_x_states)),
                  Role::auxiliary_input});
  for (std::size_t i = 0; i < k; ++i) edges.emplace_back(vars[i].name, "X");
  vars.push_back({"Y", state_labels(draw_between(rng, 2, config.max_states)), Role::class_label});
  std::vector<std::string> y_parents;
  for (std::size_t i = 0; i < k; ++i) {
    if (rng.uniform() < 0.6) y_parents.push_back(vars[i].name);
  }
  if (y_parents.empty()) y_parents.push_back(vars[rng.index(k)].name);
  for (const auto& p : y_parents) edges.emplace_back(p, "Y");
  return random_cpds(CausalModel(std::move(vars), std::move(edges)), rng);
}

InterventionSet random_intervention(const CausalModel& model, Rng& rng) {
  auto attrs = model.attribute_indices();
  if (attrs.empty()) throw ValidationError("model has no attributes to intervene on");
  std::size_t a = attrs[rng.index(attrs.size())];
  InterventionSet out;
  out.assignments[model.variable(a).name] = rng.index(model.variable(a).cardinality());
  return out;
}

CausalModel without_auxiliary(const CausalModel& model) {
  std::vector<Variable> vars;
  for (const auto& v : model.variables()) {
    if (v.role != Role::auxiliary_input) vars.push_back(v);
  }
  auto keep = [&model](const std::string& name) {
    return model.variable(model.index_of(name)).role != Role::auxiliary_input;
  };
  std::vector<Edge> edges;
  for (const auto& e : model.edges()) {
    if (keep(e.first) && keep(e.second)) edges.push_back(e);
  }
  std::map<std::string, CpdTable> cpds;
  for (const auto& [name, table] : model.cpds()) {
    if (!keep(name)) continue;
    for (const auto& p : table.parent_order) {
      if (!keep(p)) throw ValidationError("cannot drop auxiliary input " + p + ": it is a parent of " + name);
    }
    cpds.emplace(name, table);
  }
  return CausalModel(std::move(vars), std::move(edges), std::move(cpds));
}

CausalModel perturb_cpds(const CausalModel& model, double eps, Rng& rng) {
  auto cpds = model.cpds();
  for (auto& [name, table] : cpds) {
    for (Eigen::Index r = 0; r < table.probabilities.rows(); ++r) {
      Eigen::RowVectorXd noise = rng.dirichlet(static_cast<std::size_t>(table.probabilities.cols())).transpose();
      table.probabilities.row(r) = (1.0 - eps) * table.probabilities.row(r) + eps * noise;
      table.probabilities.row(r) /= table.probabilities.row(r).sum();
    }
  }
  return CausalModel(model.variables(), model.edges(), std::move(cpds));
}

}  // namespace cnpc
