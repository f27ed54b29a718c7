#ifndef CNPC_CIRCUIT_RUNTIME_HPP_
#define CNPC_CIRCUIT_RUNTIME_HPP_

#include <atomic>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/causal_model.hpp"
#include "cnpc/circuit.hpp"
#include "cnpc/error.hpp"

namespace cnpc {

// One value per parameter slot (see Circuit::param_slot).
struct ParamBinding {
  std::vector<double> values;
};

// One value per indicator slot.
struct IndicatorState {
  std::vector<double> values;
};

// Checks the structure digest and copies the model CPDs into slot order.
ParamBinding bind_params(const Circuit& circuit, const CausalModel& model);

IndicatorState all_indicators(const Circuit& circuit, double value = 1.0);

// Bottom-up pass along eval_order. `scratch` is resized to the node count and
// may be reused across calls by the same thread.
template <typename Scalar>
Scalar evaluate(const Circuit& circuit, std::span<const Scalar> params, std::span<const Scalar> indicators,
                std::vector<Scalar>& scratch) {
  if (params.size() != circuit.param_count || indicators.size() != circuit.indicator_count) {
    throw ValidationError("evaluate: incomplete parameter or indicator binding");
  }
  scratch.resize(circuit.nodes.size());
  for (auto id : circuit.eval_order) {
    const CircuitNode& node = circuit.nodes[id];
    switch (node.kind) {
      case NodeKind::param_leaf:
        scratch[id] = params[circuit.param_slot(node)];
        break;
      case NodeKind::indicator_leaf:
        scratch[id] = indicators[circuit.indicator_slot(node)];
        break;
      case NodeKind::sum: {
        Scalar acc = Scalar(0);
        for (auto c : node.children) acc += scratch[c];
        scratch[id] = acc;
        break;
      }
      case NodeKind::product: {
        Scalar acc = Scalar(1);
        for (auto c : node.children) acc *= scratch[c];
        scratch[id] = acc;
        break;
      }
    }
  }
  return scratch[circuit.root];
}

double evaluate(const Circuit& circuit, const ParamBinding& params, const IndicatorState& indicators);

struct ClassConditionalTable {
  Eigen::MatrixXd probs;       // rows: joint attribute assignments, cols: class states
  std::vector<bool> flagged;   // rows with P_w(a) = 0, filled uniform
  std::size_t flagged_count = 0;
};

inline constexpr std::size_t kAttributeTableCap = std::size_t{1} << 20;

// Query front end over an immutable circuit and parameter binding. Every
// method uses call-local scratch, so one instance serves concurrent callers.
class CircuitQuery {
 public:
  CircuitQuery(const Circuit& circuit, ParamBinding params);

  const Circuit& circuit() const { return *circuit_; }
  const ParamBinding& params() const { return params_; }

  // One pass each.
  double marginal(const Assignment& event) const;
  double interventional(const Assignment& event, const InterventionSet& interventions) const;
  // Two passes each. Throw PreconditionError when the evidence has zero mass.
  double conditional(const Assignment& target, const Assignment& evidence) const;
  double interventional_conditional(const Assignment& target, const Assignment& evidence,
                                    const InterventionSet& interventions) const;

  // Attributes in circuit declaration order; the joint table uses mixed radix
  // over them, first attribute most significant.
  const std::vector<std::size_t>& attributes() const { return attributes_; }
  std::vector<std::size_t> attribute_cardinalities() const;
  std::size_t class_variable() const { return class_; }

  // P_w^do(a) for every joint attribute assignment, one pass per entry.
  Eigen::VectorXd interventional_attr_table(const InterventionSet& interventions) const;
  // P_w(Y | a) for every joint attribute assignment.
  ClassConditionalTable class_conditional_table() const;

  std::size_t passes() const { return passes_.load(); }

 private:
  IndicatorState indicators_for(const std::vector<std::pair<std::size_t, std::size_t>>& constraints) const;
  std::vector<std::pair<std::size_t, std::size_t>> resolve(const Assignment& assignment) const;
  std::vector<double> clamped_params(const InterventionSet& interventions) const;
  double run(const std::vector<double>& params, const IndicatorState& indicators) const;

  const Circuit* circuit_;
  ParamBinding params_;
  std::vector<std::size_t> attributes_;
  std::size_t class_ = 0;
  mutable std::atomic<std::size_t> passes_{0};
};

}  // namespace cnpc

#endif  // CNPC_CIRCUIT_RUNTIME_HPP_
