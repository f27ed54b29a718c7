#ifndef CNPC_EXACT_ORACLE_HPP_
#define CNPC_EXACT_ORACLE_HPP_

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/causal_model.hpp"

// Brute-force enumeration over the full joint space. This is the reference
// every circuit and fusion result is checked against on small models; it is
// not meant for production-size graphs.
namespace cnpc::oracle {

inline constexpr std::size_t kEnumerationCap = std::size_t{1} << 22;

// Calls visit(states, probability) for every full assignment in mixed-radix
// declaration order. Throws CapExceededError above kEnumerationCap.
void enumerate(const CausalModel& model,
               const std::function<void(const std::vector<std::size_t>&, double)>& visit);

double joint(const CausalModel& model, const Assignment& full);
double marginal(const CausalModel& model, const Assignment& partial);
// Throws PreconditionError when the evidence has zero probability.
double conditional(const CausalModel& model, const Assignment& target, const Assignment& evidence);
double interventional(const CausalModel& model, const Assignment& query, const InterventionSet& interventions);

// Unnormalized table P(vars = ·, evidence) over the mixed-radix space of `vars`.
Eigen::VectorXd marginal_table(const CausalModel& model, const std::vector<std::size_t>& vars,
                               const Assignment& evidence = {});
// Normalized P(vars | evidence); throws PreconditionError on zero evidence.
Eigen::VectorXd conditional_table(const CausalModel& model, const std::vector<std::size_t>& vars,
                                  const Assignment& evidence);

struct ClassGivenX {
  Eigen::VectorXd direct;    // P^do(Y | X=x) on the mutilated world
  Eigen::VectorXd composed;  // sum_a P(Y | a) P^do(a | X=x)
  double max_abs_diff = 0.0;
};

// World must hold exactly one auxiliary-input variable X. Throws
// PreconditionError when P^do(X=x) = 0.
ClassGivenX interventional_class_given_x(const CausalModel& world, std::size_t x_state,
                                         const InterventionSet& interventions);

struct SimplisticAttr {
  Eigen::VectorXd ratio_formula;  // ∝ P^do(a)/P(a) · P(a|x)
  Eigen::VectorXd mutilated;      // P^do(a | x) from the mutilated world
  double max_abs_diff = 0.0;
};

// Requires Pa(X) to be exactly the attribute set and P(a) > 0 everywhere;
// otherwise throws PreconditionError.
SimplisticAttr simplistic_interventional_attr(const CausalModel& world, std::size_t x_state,
                                              const InterventionSet& interventions);

}  // namespace cnpc::oracle

#endif  // CNPC_EXACT_ORACLE_HPP_
