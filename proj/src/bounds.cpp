#include "cnpc/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cnpc/circuit.hpp"
#include "cnpc/circuit_runtime.hpp"
#include "cnpc/error.hpp"
#include "cnpc/evaluation.hpp"
#include "cnpc/exact_oracle.hpp"
#include "cnpc/fusion.hpp"
#include "cnpc/io.hpp"
#include "cnpc/joint_space.hpp"
#include "cnpc/random_world.hpp"

namespace cnpc {

namespace {

constexpr double kAlphas[] = {0.0, 0.3, 0.7, 1.0};

std::size_t auxiliary_index(const CausalModel& world) {
  auto aux = world.indices_with_role(Role::auxiliary_input);
  if (aux.size() != 1) throw ValidationError("verification world needs exactly one auxiliary input");
  return aux.front();
}

struct Joint {
  Eigen::VectorXd p_x;                  // P(x)
  std::vector<Eigen::VectorXd> a_given_x;  // P(A | x)
  Eigen::VectorXd p_a;                  // P(a)
};

// P(A, X) of `model` split into P(x), P(A | x) and P(a).
Joint attr_x_joint(const CausalModel& model, const std::vector<std::size_t>& attrs, std::size_t x) {
  auto vars = attrs;
  vars.push_back(x);
  Eigen::VectorXd table = oracle::marginal_table(model, vars);
  const auto nx = static_cast<Eigen::Index>(model.variable(x).cardinality());
  const Eigen::Index na = table.size() / nx;
  Eigen::Map<const Eigen::MatrixXd> grid(table.data(), nx, na);  // column = attribute assignment
  Joint j;
  j.p_x = grid.rowwise().sum();
  j.p_a = grid.colwise().sum().transpose();
  for (Eigen::Index xi = 0; xi < nx; ++xi) {
    Eigen::VectorXd row = grid.row(xi).transpose();
    if (j.p_x[xi] > 0.0) {
      row /= j.p_x[xi];
    } else {
      row.setConstant(1.0 / static_cast<double>(na));
    }
    j.a_given_x.push_back(std::move(row));
  }
  return j;
}

// P*(Y | a) read straight from the class CPD (Pa(Y) is a subset of the attributes).
Eigen::MatrixXd true_class_given_attrs(const CausalModel& world, const std::vector<std::size_t>& attrs) {
  std::vector<std::size_t> cards;
  for (auto a : attrs) cards.push_back(world.variable(a).cardinality());
  JointSpace space(cards);
  const std::size_t y = world.class_index();
  const auto& cpd = world.cpd(y).probabilities;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(space.size()), cpd.cols());
  std::vector<std::size_t> states(world.size(), 0);
  std::vector<std::size_t> digits(attrs.size(), 0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    space.decode(i, digits);
    for (std::size_t k = 0; k < attrs.size(); ++k) states[attrs[k]] = digits[k];
    out.row(static_cast<Eigen::Index>(i)) = cpd.row(static_cast<Eigen::Index>(world.cpd_row(y, states)));
  }
  return out;
}

BoundRow make_row(std::size_t trial, std::string name, double alpha, double lhs, double rhs) {
  return BoundRow{trial, std::move(name), alpha, lhs, rhs, rhs - lhs};
}

// Clamp a joint attribute table: marginalize the intervened attributes out and
// put their mass on the forced states.
Eigen::VectorXd clamp_joint(const Eigen::VectorXd& joint, const std::vector<std::size_t>& cards,
                            const std::vector<std::size_t>& forced) {
  JointSpace space(cards);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(joint.size());
  std::vector<std::size_t> states(cards.size(), 0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    space.decode(i, states);
    for (std::size_t k = 0; k < cards.size(); ++k) {
      if (forced[k] != std::numeric_limits<std::size_t>::max()) states[k] = forced[k];
    }
    out[static_cast<Eigen::Index>(space.index(states))] += joint[static_cast<Eigen::Index>(i)];
  }
  return out;
}

}  // namespace

double BoundReport::min_slack(std::string_view inequality) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (r.inequality == inequality) best = std::min(best, r.slack);
  }
  return best;
}

std::vector<BoundRow> check_trial(const TrialInputs& inputs, std::size_t trial, bool equality_trial,
                                  BoundReport& report) {
  const CausalModel& world = inputs.world;
  const auto attrs = world.attribute_indices();
  const std::size_t x = auxiliary_index(world);
  const std::size_t y = world.class_index();
  const std::string suffix = equality_trial ? "_equality" : "";

  const CausalModel world_do = mutilate(world, inputs.interventions);
  const Joint obs = attr_x_joint(world, attrs, x);
  const Joint dox = attr_x_joint(world_do, attrs, x);
  const Eigen::MatrixXd true_y_given_a = true_class_given_attrs(world, attrs);
  const std::size_t nx = world.variable(x).cardinality();
  if (inputs.theta.size() != nx || inputs.theta_do.size() != nx) {
    throw ValidationError("check_trial: one P_theta table per X state is required");
  }

  Circuit circuit = compile(inputs.w_model, minfill_order(inputs.w_model));
  CircuitQuery query(circuit, bind_params(circuit, inputs.w_model));
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    if (circuit.variables[query.attributes()[k]].name != world.variable(attrs[k]).name) {
      throw ValidationError("check_trial: P_w attribute order differs from the world");
    }
  }
  const Eigen::MatrixXd w_y_given_a = query.class_conditional_table().probs;
  const Eigen::VectorXd w_do = query.interventional_attr_table(inputs.interventions);

  auto class_term = [&](const Eigen::VectorXd& weights) {
    double total = 0.0;
    for (Eigen::Index a = 0; a < weights.size(); ++a) {
      if (weights[a] > 0.0) {
        total += weights[a] * kl(true_y_given_a.row(a).transpose(), w_y_given_a.row(a).transpose());
      }
    }
    return total;
  };

  std::vector<BoundRow> rows;
  // Observational bound, no intervention.
  {
    double lhs = 0.0;
    double attr_term = 0.0;
    for (std::size_t xi = 0; xi < nx; ++xi) {
      const double px = obs.p_x[static_cast<Eigen::Index>(xi)];
      if (!(px > 0.0)) continue;
      Eigen::VectorXd truth = oracle::conditional_table(world, {y}, {{world.variable(x).name, xi}});
      lhs += px * kl(truth, mix_class_dist(inputs.theta[xi], w_y_given_a));
      attr_term += px * kl(obs.a_given_x[xi], inputs.theta[xi]);
    }
    rows.push_back(make_row(trial, "observational" + suffix, 0.0, lhs, attr_term + class_term(obs.p_a)));
  }

  // Interventional quantities shared by the NPC and CNPC bounds.
  std::vector<Eigen::VectorXd> truth_do(nx);
  std::vector<double> kl_theta(nx, 0.0), kl_w(nx, 0.0);
  double e_theta = 0.0;
  double e_w = 0.0;
  for (std::size_t xi = 0; xi < nx; ++xi) {
    const double px = dox.p_x[static_cast<Eigen::Index>(xi)];
    if (!(px > 0.0)) continue;
    auto composed = oracle::interventional_class_given_x(world, xi, inputs.interventions);
    report.max_composition_error = std::max(report.max_composition_error, composed.max_abs_diff);
    truth_do[xi] = composed.direct;
    kl_theta[xi] = kl(dox.a_given_x[xi], inputs.theta_do[xi]);
    kl_w[xi] = kl(dox.a_given_x[xi], w_do);
    e_theta += px * kl_theta[xi];
    e_w += px * kl_w[xi];
  }
  const double e_class = class_term(dox.p_a);
  const double b_npc = e_theta + e_class;

  {
    double lhs = 0.0;
    for (std::size_t xi = 0; xi < nx; ++xi) {
      const double px = dox.p_x[static_cast<Eigen::Index>(xi)];
      if (!(px > 0.0)) continue;
      lhs += px * kl(truth_do[xi], mix_class_dist(inputs.theta_do[xi], w_y_given_a));
    }
    rows.push_back(make_row(trial, "npc_interventional" + suffix, 0.0, lhs, b_npc));
  }

  bool premise = true;
  for (std::size_t xi = 0; xi < nx; ++xi) {
    if (dox.p_x[static_cast<Eigen::Index>(xi)] > 0.0 && kl_w[xi] > kl_theta[xi]) premise = false;
  }
  if (premise && !equality_trial) ++report.premise_held;

  for (double alpha : kAlphas) {
    if (equality_trial && alpha != 0.0) continue;
    double lhs = 0.0;
    for (std::size_t xi = 0; xi < nx; ++xi) {
      const double px = dox.p_x[static_cast<Eigen::Index>(xi)];
      if (!(px > 0.0)) continue;
      PoeResult poe = poe_attribute_dist(inputs.theta_do[xi], w_do, alpha);
      report.max_z_alpha = std::max(report.max_z_alpha, poe.z_alpha);
      const double identity = (1.0 - alpha) * kl_theta[xi] + alpha * kl_w[xi] + std::log(poe.z_alpha);
      report.max_identity_error =
          std::max(report.max_identity_error, std::abs(kl(dox.a_given_x[xi], poe.table) - identity));
      lhs += px * kl(truth_do[xi], cnpc_interventional(poe, w_y_given_a));
    }
    const double b_cnpc = (1.0 - alpha) * e_theta + alpha * e_w + e_class;
    rows.push_back(make_row(trial, "cnpc_interventional" + suffix, alpha, lhs, b_cnpc));
    if (premise && !equality_trial) rows.push_back(make_row(trial, "cnpc_within_npc", alpha, b_cnpc, b_npc));
  }
  return rows;
}

namespace {

std::vector<Eigen::VectorXd> true_attr_tables(const CausalModel& world) {
  return attr_x_joint(world, world.attribute_indices(), auxiliary_index(world)).a_given_x;
}

TrialInputs make_trial(Rng& rng, bool equality_trial) {
  TrialInputs in;
  in.world = random_verification_world(rng);
  require_valid(in.world);
  in.interventions = random_intervention(in.world, rng);
  const auto attrs = in.world.attribute_indices();
  std::vector<std::size_t> cards;
  std::vector<std::size_t> forced(attrs.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    cards.push_back(in.world.variable(attrs[k]).cardinality());
    auto it = in.interventions.assignments.find(in.world.variable(attrs[k]).name);
    if (it != in.interventions.assignments.end()) forced[k] = it->second;
  }
  const auto truth = true_attr_tables(in.world);
  if (equality_trial) {
    in.w_model = without_auxiliary(in.world);
    in.theta = truth;
    in.theta_do = true_attr_tables(mutilate(in.world, in.interventions));
    return in;
  }
  in.w_model = perturb_cpds(without_auxiliary(in.world), rng.uniform(0.1, 0.9), rng);
  const double t = rng.uniform();
  for (std::size_t xi = 0; xi < truth.size(); ++xi) {
    AttrDists heads;
    for (auto c : cards) heads.push_back(rng.dirichlet(c));
    Eigen::VectorXd theta = t * truth[xi] + (1.0 - t) * factorized_joint(heads);
    theta /= theta.sum();
    in.theta_do.push_back(clamp_joint(theta, cards, forced));
    in.theta.push_back(std::move(theta));
  }
  return in;
}

}  // namespace

BoundReport verify_bounds(std::size_t trials, std::uint64_t seed) {
  constexpr std::size_t kMaxRetries = 10;
  BoundReport report;
  Rng rng(seed);
  for (std::size_t trial = 0; trial <= trials; ++trial) {
    const bool equality = trial == 0;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        TrialInputs inputs = make_trial(rng, equality);
        auto rows = check_trial(inputs, trial, equality, report);
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        break;
      } catch (const PreconditionError&) {
        if (attempt + 1 >= kMaxRetries) throw;
        ++report.world_retries;
      }
    }
  }
  report.trials = trials;
  return report;
}

std::string bounds_csv(const BoundReport& report) {
  std::string out = "trial,inequality,alpha,lhs,rhs,slack\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.trial) + "," + r.inequality + "," + format_short(r.alpha) + "," + format_short(r.lhs) +
           "," + format_short(r.rhs) + "," + format_short(r.slack) + "\n";
  }
  return out;
}

}  // namespace cnpc
