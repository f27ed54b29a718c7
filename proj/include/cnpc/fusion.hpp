#ifndef CNPC_FUSION_HPP_
#define CNPC_FUSION_HPP_

#include <cstddef>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/circuit_runtime.hpp"
#include "cnpc/predictor.hpp"

namespace cnpc {

struct FusionConfig {
  double alpha = 0.9;
};

void check_alpha(double alpha);

// Joint table over attribute assignments (mixed radix, head 0 most
// significant) of the product of the per-head distributions.
Eigen::VectorXd factorized_joint(const AttrDists& dists);

// Sum_a P_w(Y|a) * joint(a), renormalized. class_table rows index joint
// attribute assignments, columns index class states.
Eigen::VectorXd mix_class_dist(const Eigen::VectorXd& joint, const Eigen::MatrixXd& class_table);

Eigen::VectorXd npc_class_dist(const AttrDists& dists, const Eigen::MatrixXd& class_table);
Eigen::VectorXd npc_interventional(const AttrDists& dists, const InterventionSet& interventions,
                                   const std::vector<std::string>& names, const Eigen::MatrixXd& class_table);

struct PoeResult {
  Eigen::VectorXd table;
  double z_alpha = 0.0;
  std::vector<std::size_t> support;  // indices with nonzero mass
};

// m(a) = theta(a)^(1-alpha) * w(a)^alpha in log space. Nonzero circuit
// masses are floored at 1e-12 (the neural heads carry their own floor);
// 0^b = 0 for b > 0; a factor with exponent 0 contributes 1.
// Throws PreconditionError when every mass is zero.
PoeResult poe_attribute_dist(const Eigen::VectorXd& theta_joint, const Eigen::VectorXd& w_table, double alpha);

Eigen::VectorXd cnpc_interventional(const PoeResult& poe, const Eigen::MatrixXd& class_table);

struct LabelPrediction {
  std::vector<std::size_t> attributes;
  std::size_t class_label = 0;
};

// Joint argmax over the table (ties: lexicographically smallest assignment)
// and class argmax (ties: smallest index).
LabelPrediction predict_labels(const Eigen::VectorXd& joint_table, const Eigen::VectorXd& class_dist,
                               const std::vector<std::size_t>& cardinalities);

std::vector<Eigen::VectorXd> attribute_marginals(const Eigen::VectorXd& joint_table,
                                                 const std::vector<std::size_t>& cardinalities);
// Per-attribute argmax of the marginals (ties: smallest state).
std::vector<std::size_t> marginal_argmax(const std::vector<Eigen::VectorXd>& marginals);

struct FusedPrediction {
  AttrDists neural;            // unclamped head outputs
  AttrDists clamped;           // heads after intervention
  PoeResult poe;
  std::vector<Eigen::VectorXd> poe_marginals;
  Eigen::VectorXd npc_class;
  Eigen::VectorXd cnpc_class;
  LabelPrediction npc_labels;   // per-head argmax of clamped heads
  LabelPrediction cnpc_labels;  // joint argmax of the PoE table
};

// Binds a circuit query to a predictor. The class-conditional table is
// computed once; interventional attribute tables are cached per
// intervention set behind a mutex.
class FusionEngine {
 public:
  FusionEngine(const CircuitQuery& query, std::vector<std::string> attribute_names);

  const std::vector<std::string>& attribute_names() const { return names_; }
  const std::vector<std::size_t>& cardinalities() const { return cards_; }
  const ClassConditionalTable& class_table() const { return class_table_; }
  const std::string& circuit_digest() const { return query_->circuit().model_digest; }
  Eigen::VectorXd attr_table(const InterventionSet& interventions) const;

  // With no intervention CNPC follows the NPC path for every output.
  FusedPrediction predict(const AttrDists& neural, const InterventionSet& interventions, double alpha) const;

 private:
  const CircuitQuery* query_;
  std::vector<std::string> names_;
  std::vector<std::size_t> cards_;
  ClassConditionalTable class_table_;
  mutable std::mutex mutex_;
  mutable std::map<InterventionSet, Eigen::VectorXd> cache_;
};

}  // namespace cnpc

#endif  // CNPC_FUSION_HPP_
