#include "cnpc/exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cnpc/error.hpp"
#include "cnpc/joint_space.hpp"

namespace cnpc::oracle {
namespace {

std::vector<long> dense(const CausalModel& model, const Assignment& partial) {
  std::vector<long> out(model.size(), -1);
  for (const auto& [name, state] : partial) {
    std::size_t v = model.index_of(name);
    if (state >= model.variable(v).cardinality()) throw ValidationError("state out of range for " + name);
    out[v] = static_cast<long>(state);
  }
  return out;
}

bool matches(const std::vector<std::size_t>& states, const std::vector<long>& partial) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (partial[i] >= 0 && static_cast<std::size_t>(partial[i]) != states[i]) return false;
  }
  return true;
}

std::size_t auxiliary_input(const CausalModel& world) {
  auto aux = world.indices_with_role(Role::auxiliary_input);
  if (aux.size() != 1) throw PreconditionError("world must contain exactly one auxiliary-input variable");
  return aux.front();
}

std::vector<std::size_t> cardinalities(const CausalModel& model, const std::vector<std::size_t>& vars) {
  std::vector<std::size_t> cards;
  for (std::size_t v : vars) cards.push_back(model.variable(v).cardinality());
  return cards;
}

}  // namespace

void enumerate(const CausalModel& model,
               const std::function<void(const std::vector<std::size_t>&, double)>& visit) {
  if (!model.has_cpds()) throw ValidationError("oracle requires a model with CPDs");
  std::vector<std::size_t> all(model.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  JointSpace space;
  try {
    space = JointSpace(cardinalities(model, all), kEnumerationCap);
  } catch (const CapExceededError&) {
    throw CapExceededError("oracle enumeration exceeds 2^22 joint states; use the compiled circuit instead");
  }
  std::vector<std::vector<std::size_t>> orders(model.size());
  std::vector<const Eigen::MatrixXd*> tables(model.size());
  for (std::size_t v = 0; v < model.size(); ++v) {
    orders[v] = model.parent_order(v);
    tables[v] = &model.cpd(v).probabilities;
  }
  std::vector<std::size_t> states(model.size(), 0);
  do {
    double p = 1.0;
    for (std::size_t v = 0; v < model.size() && p != 0.0; ++v) {
      std::size_t row = 0;
      for (std::size_t parent : orders[v]) row = row * model.variable(parent).cardinality() + states[parent];
      p *= (*tables[v])(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(states[v]));
    }
    visit(states, p);
  } while (space.next(states));
}

double joint(const CausalModel& model, const Assignment& full) {
  auto partial = dense(model, full);
  if (std::any_of(partial.begin(), partial.end(), [](long s) { return s < 0; })) {
    throw ValidationError("joint requires a full assignment");
  }
  double p = 1.0;
  std::vector<std::size_t> states(partial.begin(), partial.end());
  for (std::size_t v = 0; v < model.size(); ++v) {
    p *= model.cpd(v).probabilities(static_cast<Eigen::Index>(model.cpd_row(v, states)),
                                    static_cast<Eigen::Index>(states[v]));
  }
  return p;
}

double marginal(const CausalModel& model, const Assignment& partial) {
  auto constraint = dense(model, partial);
  double total = 0.0;
  enumerate(model, [&](const std::vector<std::size_t>& states, double p) {
    if (matches(states, constraint)) total += p;
  });
  return total;
}

double conditional(const CausalModel& model, const Assignment& target, const Assignment& evidence) {
  double denominator = marginal(model, evidence);
  if (!(denominator > 0.0)) throw PreconditionError("conditioning on zero-probability evidence");
  Assignment combined = evidence;
  for (const auto& [name, state] : target) {
    auto it = combined.find(name);
    if (it != combined.end() && it->second != state) return 0.0;
    combined[name] = state;
  }
  return marginal(model, combined) / denominator;
}

double interventional(const CausalModel& model, const Assignment& query, const InterventionSet& interventions) {
  if (interventions.empty()) return marginal(model, query);
  return marginal(mutilate(model, interventions), query);
}

Eigen::VectorXd marginal_table(const CausalModel& model, const std::vector<std::size_t>& vars,
                               const Assignment& evidence) {
  JointSpace space(cardinalities(model, vars), kEnumerationCap);
  auto constraint = dense(model, evidence);
  Eigen::VectorXd table = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  std::vector<std::size_t> sub(vars.size());
  enumerate(model, [&](const std::vector<std::size_t>& states, double p) {
    if (!matches(states, constraint)) return;
    for (std::size_t i = 0; i < vars.size(); ++i) sub[i] = states[vars[i]];
    table[static_cast<Eigen::Index>(space.index(sub))] += p;
  });
  return table;
}

Eigen::VectorXd conditional_table(const CausalModel& model, const std::vector<std::size_t>& vars,
                                  const Assignment& evidence) {
  Eigen::VectorXd table = marginal_table(model, vars, evidence);
  double total = table.sum();
  if (!(total > 0.0)) throw PreconditionError("conditioning on zero-probability evidence");
  return table / total;
}

ClassGivenX interventional_class_given_x(const CausalModel& world, std::size_t x_state,
                                         const InterventionSet& interventions) {
  const std::size_t x = auxiliary_input(world);
  const std::size_t y = world.class_index();
  const auto attributes = world.attribute_indices();
  const Assignment at_x{{world.variable(x).name, x_state}};
  const CausalModel mutilated = mutilate(world, interventions);

  ClassGivenX out;
  if (!(marginal(mutilated, at_x) > 0.0)) throw PreconditionError("P^do(X=x) is zero");
  out.direct = conditional_table(mutilated, {y}, at_x);

  // sum_a P(Y | a) P^do(a | x)
  const Eigen::VectorXd attr_given_x = conditional_table(mutilated, attributes, at_x);
  const Eigen::VectorXd attr_marginal = marginal_table(world, attributes);
  std::vector<std::size_t> with_class = attributes;
  with_class.push_back(y);
  const Eigen::VectorXd attr_class = marginal_table(world, with_class);
  const auto ny = static_cast<Eigen::Index>(world.variable(y).cardinality());
  JointSpace space(cardinalities(world, attributes));
  out.composed = Eigen::VectorXd::Zero(ny);
  std::vector<std::size_t> full_states(world.size(), 0);
  for (std::size_t a = 0; a < space.size(); ++a) {
    const double weight = attr_given_x[static_cast<Eigen::Index>(a)];
    if (weight == 0.0) continue;
    Eigen::VectorXd class_given_a(ny);
    if (attr_marginal[static_cast<Eigen::Index>(a)] > 0.0) {
      class_given_a = attr_class.segment(static_cast<Eigen::Index>(a) * ny, ny) / attr_marginal[static_cast<Eigen::Index>(a)];
    } else {
      // P(a) = 0 observationally: fall back to the class mechanism, which the
      // structural assumption makes equal to P(Y | a).
      auto decoded = space.decode(a);
      for (std::size_t i = 0; i < attributes.size(); ++i) full_states[attributes[i]] = decoded[i];
      class_given_a = world.cpd(y).probabilities.row(static_cast<Eigen::Index>(world.cpd_row(y, full_states))).transpose();
    }
    out.composed += weight * class_given_a;
  }
  out.max_abs_diff = (out.direct - out.composed).cwiseAbs().maxCoeff();
  return out;
}

SimplisticAttr simplistic_interventional_attr(const CausalModel& world, std::size_t x_state,
                                              const InterventionSet& interventions) {
  const std::size_t x = auxiliary_input(world);
  const auto attributes = world.attribute_indices();
  std::set<std::size_t> parents(world.parents(x).begin(), world.parents(x).end());
  if (parents != std::set<std::size_t>(attributes.begin(), attributes.end())) {
    throw PreconditionError("ratio formula requires Pa(X) to be exactly the attributes; P^do(X|A) may differ from P(X|A)");
  }
  const Assignment at_x{{world.variable(x).name, x_state}};
  const CausalModel mutilated = mutilate(world, interventions);

  const Eigen::VectorXd prior = marginal_table(world, attributes);
  const Eigen::VectorXd prior_do = marginal_table(mutilated, attributes);
  const Eigen::VectorXd posterior = conditional_table(world, attributes, at_x);
  JointSpace space(cardinalities(world, attributes));
  for (std::size_t a = 0; a < space.size(); ++a) {
    if (!(prior[static_cast<Eigen::Index>(a)] > 0.0)) {
      throw PreconditionError("ratio formula undefined: P(a) = 0 at joint attribute index " + std::to_string(a));
    }
  }
  SimplisticAttr out;
  out.ratio_formula = prior_do.cwiseQuotient(prior).cwiseProduct(posterior);
  const double total = out.ratio_formula.sum();
  if (!(total > 0.0)) throw PreconditionError("ratio formula has zero mass at this x");
  out.ratio_formula /= total;
  out.mutilated = conditional_table(mutilated, attributes, at_x);
  out.max_abs_diff = (out.ratio_formula - out.mutilated).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace cnpc::oracle
