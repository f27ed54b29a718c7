#include "cnpc/circuit_runtime.hpp"

#include <string>

#include "cnpc/joint_space.hpp"

namespace cnpc {

ParamBinding bind_params(const Circuit& circuit, const CausalModel& model) {
  check_circuit_matches(circuit, model);
  if (!model.has_cpds()) throw ValidationError("cannot bind parameters: model has no CPDs");
  ParamBinding binding;
  binding.values.assign(circuit.param_count, 0.0);
  for (std::size_t v = 0; v < circuit.variables.size(); ++v) {
    const auto& cv = circuit.variables[v];
    std::size_t mv = model.index_of(cv.name);
    const auto& table = model.cpd(mv).probabilities;
    std::size_t rows = 1;
    for (auto p : cv.parents) rows *= circuit.variables[p].states.size();
    if (static_cast<std::size_t>(table.rows()) != rows ||
        static_cast<std::size_t>(table.cols()) != cv.states.size()) {
      throw ValidationError("CPD of " + cv.name + " does not match the circuit's parameter layout");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t s = 0; s < cv.states.size(); ++s) {
        binding.values[circuit.param_offset[v] + r * cv.states.size() + s] =
            table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s));
      }
    }
  }
  return binding;
}

IndicatorState all_indicators(const Circuit& circuit, double value) {
  return IndicatorState{std::vector<double>(circuit.indicator_count, value)};
}

double evaluate(const Circuit& circuit, const ParamBinding& params, const IndicatorState& indicators) {
  std::vector<double> scratch;
  return evaluate<double>(circuit, params.values, indicators.values, scratch);
}

CircuitQuery::CircuitQuery(const Circuit& circuit, ParamBinding params)
    : circuit_(&circuit), params_(std::move(params)) {
  if (params_.values.size() != circuit.param_count) throw ValidationError("parameter binding is incomplete");
  std::size_t classes = 0;
  for (std::size_t v = 0; v < circuit.variables.size(); ++v) {
    if (circuit.variables[v].role == Role::attribute) attributes_.push_back(v);
    if (circuit.variables[v].role == Role::class_label) {
      class_ = v;
      ++classes;
    }
  }
  if (classes != 1) throw ValidationError("circuit must contain exactly one class variable");
}

std::vector<std::size_t> CircuitQuery::attribute_cardinalities() const {
  std::vector<std::size_t> cards;
  for (auto a : attributes_) cards.push_back(circuit_->variables[a].states.size());
  return cards;
}

std::vector<std::pair<std::size_t, std::size_t>> CircuitQuery::resolve(const Assignment& assignment) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [name, state] : assignment) {
    std::size_t v = circuit_->find_variable(name);
    if (state >= circuit_->variables[v].states.size()) {
      throw ValidationError("state index out of range for " + name);
    }
    out.emplace_back(v, state);
  }
  return out;
}

IndicatorState CircuitQuery::indicators_for(
    const std::vector<std::pair<std::size_t, std::size_t>>& constraints) const {
  IndicatorState ind = all_indicators(*circuit_);
  for (const auto& [v, s] : constraints) {
    std::size_t card = circuit_->variables[v].states.size();
    for (std::size_t t = 0; t < card; ++t) {
      if (t != s) ind.values[circuit_->indicator_offset[v] + t] = 0.0;
    }
  }
  return ind;
}

std::vector<double> CircuitQuery::clamped_params(const InterventionSet& interventions) const {
  std::vector<double> overlay = params_.values;
  for (const auto& [name, state] : interventions.assignments) {
    std::size_t v = circuit_->find_variable(name);
    const auto& cv = circuit_->variables[v];
    if (cv.role != Role::attribute) throw ValidationError("cannot intervene on non-attribute " + name);
    if (state >= cv.states.size()) throw ValidationError("intervention state out of range for " + name);
    std::size_t rows = 1;
    for (auto p : cv.parents) rows *= circuit_->variables[p].states.size();
    std::size_t begin = circuit_->param_offset[v];
    std::fill(overlay.begin() + static_cast<long>(begin),
              overlay.begin() + static_cast<long>(begin + rows * cv.states.size()), 1.0);
  }
  return overlay;
}

double CircuitQuery::run(const std::vector<double>& params, const IndicatorState& indicators) const {
  std::vector<double> scratch;
  passes_.fetch_add(1);
  return evaluate<double>(*circuit_, params, indicators.values, scratch);
}

double CircuitQuery::marginal(const Assignment& event) const {
  return run(params_.values, indicators_for(resolve(event)));
}

double CircuitQuery::conditional(const Assignment& target, const Assignment& evidence) const {
  auto ev = resolve(evidence);
  double denom = run(params_.values, indicators_for(ev));
  auto joint = ev;
  auto tg = resolve(target);
  joint.insert(joint.end(), tg.begin(), tg.end());
  double numer = run(params_.values, indicators_for(joint));
  if (!(denom > 0.0)) throw PreconditionError("conditional query on zero-probability evidence");
  return numer / denom;
}

double CircuitQuery::interventional(const Assignment& event, const InterventionSet& interventions) const {
  auto constraints = resolve(event);
  auto forced = resolve(Assignment(interventions.assignments.begin(), interventions.assignments.end()));
  constraints.insert(constraints.end(), forced.begin(), forced.end());
  return run(clamped_params(interventions), indicators_for(constraints));
}

double CircuitQuery::interventional_conditional(const Assignment& target, const Assignment& evidence,
                                                const InterventionSet& interventions) const {
  auto overlay = clamped_params(interventions);
  auto ev = resolve(evidence);
  auto forced = resolve(Assignment(interventions.assignments.begin(), interventions.assignments.end()));
  ev.insert(ev.end(), forced.begin(), forced.end());
  double denom = run(overlay, indicators_for(ev));
  auto joint = ev;
  auto tg = resolve(target);
  joint.insert(joint.end(), tg.begin(), tg.end());
  double numer = run(overlay, indicators_for(joint));
  if (!(denom > 0.0)) throw PreconditionError("interventional conditional on zero-probability evidence");
  return numer / denom;
}

Eigen::VectorXd CircuitQuery::interventional_attr_table(const InterventionSet& interventions) const {
  JointSpace space(attribute_cardinalities(), kAttributeTableCap);
  auto overlay = clamped_params(interventions);
  auto forced = resolve(Assignment(interventions.assignments.begin(), interventions.assignments.end()));
  Eigen::VectorXd table(static_cast<Eigen::Index>(space.size()));
  std::vector<std::size_t> states(attributes_.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> constraints;
  for (std::size_t i = 0; i < space.size(); ++i) {
    space.decode(i, states);
    constraints = forced;
    for (std::size_t k = 0; k < attributes_.size(); ++k) constraints.emplace_back(attributes_[k], states[k]);
    table[static_cast<Eigen::Index>(i)] = run(overlay, indicators_for(constraints));
  }
  return table;
}

ClassConditionalTable CircuitQuery::class_conditional_table() const {
  JointSpace space(attribute_cardinalities(), kAttributeTableCap);
  const auto& class_var = circuit_->variables[class_];
  const std::size_t classes = class_var.states.size();
  ClassConditionalTable out;
  out.probs.resize(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(classes));
  out.flagged.assign(space.size(), false);
  std::vector<std::size_t> states(attributes_.size(), 0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    space.decode(i, states);
    Assignment evidence;
    for (std::size_t k = 0; k < attributes_.size(); ++k) {
      evidence[circuit_->variables[attributes_[k]].name] = states[k];
    }
    const auto row = static_cast<Eigen::Index>(i);
    if (!(marginal(evidence) > 0.0)) {
      out.probs.row(row).setConstant(1.0 / static_cast<double>(classes));
      out.flagged[i] = true;
      ++out.flagged_count;
      continue;
    }
    for (std::size_t y = 0; y < classes; ++y) {
      out.probs(row, static_cast<Eigen::Index>(y)) = conditional({{class_var.name, y}}, evidence);
    }
    out.probs.row(row) /= out.probs.row(row).sum();
  }
  return out;
}

}  // namespace cnpc
