#include "cnpc/fusion.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "cnpc/error.hpp"
#include "cnpc/joint_space.hpp"

namespace cnpc {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
}

Eigen::VectorXd factorized_joint(const AttrDists& dists) {
  std::vector<std::size_t> cards;
  for (const auto& d : dists) cards.push_back(static_cast<std::size_t>(d.size()));
  JointSpace space(cards, kAttributeTableCap);
  Eigen::VectorXd joint(static_cast<Eigen::Index>(space.size()));
  std::vector<std::size_t> states(cards.size(), 0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    space.decode(i, states);
    double p = 1.0;
    for (std::size_t k = 0; k < dists.size(); ++k) p *= dists[k][static_cast<Eigen::Index>(states[k])];
    joint[static_cast<Eigen::Index>(i)] = p;
  }
  return joint;
}

Eigen::VectorXd mix_class_dist(const Eigen::VectorXd& joint, const Eigen::MatrixXd& class_table) {
  if (joint.size() != class_table.rows()) throw ValidationError("class table does not cover the attribute space");
  Eigen::VectorXd out = class_table.transpose() * joint;
  const double total = out.sum();
  if (!(total > 0.0)) throw PreconditionError("class distribution has zero mass");
  if (std::abs(total - 1.0) > 1e-6) spdlog::warn("class distribution renormalized from mass {}", total);
  return out / total;
}

Eigen::VectorXd npc_class_dist(const AttrDists& dists, const Eigen::MatrixXd& class_table) {
  return mix_class_dist(factorized_joint(dists), class_table);
}

Eigen::VectorXd npc_interventional(const AttrDists& dists, const InterventionSet& interventions,
                                   const std::vector<std::string>& names, const Eigen::MatrixXd& class_table) {
  return npc_class_dist(clamp(dists, interventions, names), class_table);
}

PoeResult poe_attribute_dist(const Eigen::VectorXd& theta_joint, const Eigen::VectorXd& w_table, double alpha) {
  check_alpha(alpha);
  if (theta_joint.size() != w_table.size()) throw ValidationError("PoE factors cover different joint spaces");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto log_term = [neg_inf](double p, double exponent, double floor) {
    if (exponent == 0.0) return 0.0;
    if (p <= 0.0) return neg_inf;
    return exponent * std::log(std::max(p, floor));
  };
  const Eigen::Index n = theta_joint.size();
  Eigen::VectorXd logm(n);
  double top = neg_inf;
  for (Eigen::Index i = 0; i < n; ++i) {
    // The neural factor is a product of heads already floored by the predictor.
    logm[i] = log_term(theta_joint[i], 1.0 - alpha, 0.0) + log_term(w_table[i], alpha, kProbabilityFloor);
    top = std::max(top, logm[i]);
  }
  if (top == neg_inf) throw PreconditionError("PoE has empty support: the two factors share no nonzero assignment");
  PoeResult out;
  out.table.resize(n);
  double scaled = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.table[i] = logm[i] == neg_inf ? 0.0 : std::exp(logm[i] - top);
    scaled += out.table[i];
  }
  out.z_alpha = std::exp(top + std::log(scaled));
  out.table /= scaled;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.table[i] > 0.0) out.support.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

Eigen::VectorXd cnpc_interventional(const PoeResult& poe, const Eigen::MatrixXd& class_table) {
  return mix_class_dist(poe.table, class_table);
}

LabelPrediction predict_labels(const Eigen::VectorXd& joint_table, const Eigen::VectorXd& class_dist,
                               const std::vector<std::size_t>& cardinalities) {
  JointSpace space(cardinalities, kAttributeTableCap);
  if (static_cast<std::size_t>(joint_table.size()) != space.size()) {
    throw ValidationError("joint table does not match the attribute cardinalities");
  }
  LabelPrediction out;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < joint_table.size(); ++i) {
    if (joint_table[i] > joint_table[best]) best = i;
  }
  out.attributes = space.decode(static_cast<std::size_t>(best));
  Eigen::Index y = 0;
  for (Eigen::Index i = 1; i < class_dist.size(); ++i) {
    if (class_dist[i] > class_dist[y]) y = i;
  }
  out.class_label = static_cast<std::size_t>(y);
  return out;
}

std::vector<Eigen::VectorXd> attribute_marginals(const Eigen::VectorXd& joint_table,
                                                 const std::vector<std::size_t>& cardinalities) {
  JointSpace space(cardinalities, kAttributeTableCap);
  std::vector<Eigen::VectorXd> out;
  for (auto c : cardinalities) out.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c)));
  std::vector<std::size_t> states(cardinalities.size(), 0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    space.decode(i, states);
    for (std::size_t k = 0; k < states.size(); ++k) {
      out[k][static_cast<Eigen::Index>(states[k])] += joint_table[static_cast<Eigen::Index>(i)];
    }
  }
  return out;
}

std::vector<std::size_t> marginal_argmax(const std::vector<Eigen::VectorXd>& marginals) {
  std::vector<std::size_t> out;
  for (const auto& m : marginals) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < m.size(); ++i) {
      if (m[i] > m[best]) best = i;
    }
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

FusionEngine::FusionEngine(const CircuitQuery& query, std::vector<std::string> attribute_names)
    : query_(&query), names_(std::move(attribute_names)), cards_(query.attribute_cardinalities()) {
  const auto& attrs = query.attributes();
  if (attrs.size() != names_.size()) throw ValidationError("predictor heads do not match the circuit attributes");
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    if (query.circuit().variables[attrs[k]].name != names_[k]) {
      throw ValidationError("predictor head " + names_[k] + " does not match circuit attribute " +
                            query.circuit().variables[attrs[k]].name);
    }
  }
  class_table_ = query.class_conditional_table();
  if (class_table_.flagged_count > 0) {
    spdlog::info("{} attribute assignments have zero mass; their class rows are uniform", class_table_.flagged_count);
  }
}

Eigen::VectorXd FusionEngine::attr_table(const InterventionSet& interventions) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(interventions);
    if (it != cache_.end()) return it->second;
  }
  Eigen::VectorXd table = query_->interventional_attr_table(interventions);
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.emplace(interventions, std::move(table)).first->second;
}

FusedPrediction FusionEngine::predict(const AttrDists& neural, const InterventionSet& interventions,
                                      double alpha) const {
  check_alpha(alpha);
  if (neural.size() != cards_.size()) throw ValidationError("wrong number of attribute distributions");
  for (std::size_t k = 0; k < cards_.size(); ++k) {
    if (static_cast<std::size_t>(neural[k].size()) != cards_[k]) throw ValidationError("attribute distribution has wrong width");
  }
  FusedPrediction out;
  out.neural = neural;
  out.clamped = clamp(neural, interventions, names_);
  Eigen::VectorXd theta = factorized_joint(out.clamped);
  out.npc_class = mix_class_dist(theta, class_table_.probs);
  const double effective_alpha = interventions.empty() ? 0.0 : alpha;
  out.poe = poe_attribute_dist(theta, effective_alpha == 0.0 ? theta : attr_table(interventions), effective_alpha);
  out.poe_marginals = attribute_marginals(out.poe.table, cards_);
  out.cnpc_class = interventions.empty() ? out.npc_class : cnpc_interventional(out.poe, class_table_.probs);

  out.npc_labels.attributes = marginal_argmax(out.clamped);
  out.npc_labels.class_label = predict_labels(theta, out.npc_class, cards_).class_label;
  out.cnpc_labels = predict_labels(out.poe.table, out.cnpc_class, cards_);
  return out;
}

}  // namespace cnpc
