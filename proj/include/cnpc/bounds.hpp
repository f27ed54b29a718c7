#ifndef CNPC_BOUNDS_HPP_
#define CNPC_BOUNDS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnpc/causal_model.hpp"

namespace cnpc {

struct BoundRow {
  std::size_t trial = 0;
  // observational, npc_interventional, cnpc_interventional, cnpc_within_npc;
  // "_equality" is appended for the exact trial.
  std::string inequality;
  double alpha = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
};

struct BoundReport {
  std::vector<BoundRow> rows;
  std::size_t trials = 0;
  std::size_t premise_held = 0;
  // Largest |KL(P*|PoE) - ((1-a) KL_theta + a KL_w + log Z)| over all checks.
  double max_identity_error = 0.0;
  // Largest gap between the mutilated-graph P^do(Y|x) and sum_a P(Y|a) P^do(a|x).
  double max_composition_error = 0.0;
  double max_z_alpha = 0.0;
  std::size_t world_retries = 0;

  double min_slack(std::string_view inequality) const;
};

// Everything one trial needs, computed by exact enumeration. Exposed for tests.
struct TrialInputs {
  CausalModel world;          // attributes, auxiliary X, class Y with true CPDs
  CausalModel w_model;        // attributes and Y with model CPDs P_w
  InterventionSet interventions;
  std::vector<Eigen::VectorXd> theta;     // P_theta(A | x), one joint table per x
  std::vector<Eigen::VectorXd> theta_do;  // P_theta^do(A | x)
};

std::vector<BoundRow> check_trial(const TrialInputs& inputs, std::size_t trial, bool equality_trial,
                                  BoundReport& report);

// Trial 0 is the exact-equality case (P_theta = P*, P_w = P*); trials 1..n
// are random worlds.
BoundReport verify_bounds(std::size_t trials, std::uint64_t seed);

std::string bounds_csv(const BoundReport& report);

}  // namespace cnpc

#endif  // CNPC_BOUNDS_HPP_
