#ifndef CNPC_RANDOM_WORLD_HPP_
#define CNPC_RANDOM_WORLD_HPP_

#include <cstddef>

#include "cnpc/causal_model.hpp"
#include "cnpc/rng.hpp"

namespace cnpc {

struct RandomModelConfig {
  std::size_t min_variables = 2;
  std::size_t max_variables = 7;
  std::size_t max_states = 3;
  double edge_probability = 0.5;
};

// Random DAG over attributes V0..V{n-2} plus a class sink Y whose parents are
// a nonempty attribute subset. CPD rows are Dirichlet(1) draws.
CausalModel random_model(Rng& rng, const RandomModelConfig& config = {});

// Dirichlet(1) CPDs for every variable of `model`, keeping its structure.
CausalModel random_cpds(const CausalModel& model, Rng& rng);

struct VerificationWorldConfig {
  std::size_t min_attributes = 2;
  std::size_t max_attributes = 3;
  std::size_t max_states = 3;
  std::size_t min_x_states = 2;
  std::size_t max_x_states = 4;
};

// Attributes A1..AK with a random DAG among them, an auxiliary input X whose
// parents are all attributes, and a class Y whose parents are a random
// nonempty attribute subset. Satisfies the structural assumption.
CausalModel random_verification_world(Rng& rng, const VerificationWorldConfig& config = {});

// A random intervention on one attribute.
InterventionSet random_intervention(const CausalModel& model, Rng& rng);

// The model with auxiliary inputs removed (their edges and CPDs dropped).
CausalModel without_auxiliary(const CausalModel& model);

// Mixes every CPD row with a Dirichlet draw: (1 - eps) * row + eps * noise.
CausalModel perturb_cpds(const CausalModel& model, double eps, Rng& rng);

}  // namespace cnpc

#endif  // CNPC_RANDOM_WORLD_HPP_
