#include "cnpc/circuit.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "cnpc/error.hpp"
#include "cnpc/io.hpp"
#include "cnpc/joint_space.hpp"

namespace cnpc {

using nlohmann::json;

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::sum:
      return "sum";
    case NodeKind::product:
      return "product";
    case NodeKind::param_leaf:
      return "param_leaf";
    case NodeKind::indicator_leaf:
      return "indicator_leaf";
  }
  return "sum";
}

namespace {

NodeKind parse_kind(std::string_view text) {
  if (text == "sum") return NodeKind::sum;
  if (text == "product") return NodeKind::product;
  if (text == "param_leaf") return NodeKind::param_leaf;
  if (text == "indicator_leaf") return NodeKind::indicator_leaf;
  throw ValidationError("circuit: unknown node kind '" + std::string(text) + "'");
}

std::size_t row_count(const std::vector<CircuitVariable>& variables, std::size_t v) {
  std::size_t rows = 1;
  for (auto p : variables[v].parents) rows *= variables[p].states.size();
  return rows;
}

void compute_layout(Circuit& circuit) {
  const auto& vars = circuit.variables;
  circuit.param_offset.assign(vars.size(), 0);
  circuit.indicator_offset.assign(vars.size(), 0);
  std::size_t params = 0;
  std::size_t indicators = 0;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    circuit.param_offset[v] = params;
    circuit.indicator_offset[v] = indicators;
    params += row_count(vars, v) * vars[v].states.size();
    indicators += vars[v].states.size();
  }
  circuit.param_count = params;
  circuit.indicator_count = indicators;
}

using AdjacencySets = std::vector<std::set<std::size_t>>;

AdjacencySets moral_graph(const CausalModel& model) {
  AdjacencySets adj(model.size());
  auto connect = [&adj](std::size_t a, std::size_t b) {
    if (a == b) return;
    adj[a].insert(b);
    adj[b].insert(a);
  };
  for (std::size_t v = 0; v < model.size(); ++v) {
    auto parents = model.parent_order(v);
    for (std::size_t i = 0; i < parents.size(); ++i) {
      connect(v, parents[i]);
      for (std::size_t j = i + 1; j < parents.size(); ++j) connect(parents[i], parents[j]);
    }
  }
  return adj;
}

std::size_t fill_count(const AdjacencySets& adj, std::size_t v) {
  std::vector<std::size_t> nbrs(adj[v].begin(), adj[v].end());
  std::size_t fill = 0;
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
      if (!adj[nbrs[i]].contains(nbrs[j])) ++fill;
    }
  }
  return fill;
}

struct Factor {
  std::vector<std::size_t> scope;  // variable indices, ascending
  std::vector<std::uint32_t> entries;
};

class CircuitBuilder {
 public:
  explicit CircuitBuilder(Circuit& circuit) : circuit_(circuit) {}

  std::uint32_t leaf(NodeKind kind, std::uint32_t variable, std::uint32_t state, std::uint32_t row) {
    CircuitNode node;
    node.kind = kind;
    node.variable = variable;
    node.state = state;
    node.parent_row = row;
    circuit_.nodes.push_back(std::move(node));
    return static_cast<std::uint32_t>(circuit_.nodes.size() - 1);
  }

  std::uint32_t internal(NodeKind kind, std::vector<std::uint32_t> children) {
    if (children.size() == 1) return children.front();
    std::sort(children.begin(), children.end());
    auto key = std::make_pair(kind, children);
    auto it = dedup_.find(key);
    if (it != dedup_.end()) return it->second;
    CircuitNode node;
    node.kind = kind;
    node.children = std::move(children);
    circuit_.nodes.push_back(std::move(node));
    auto id = static_cast<std::uint32_t>(circuit_.nodes.size() - 1);
    dedup_.emplace(std::move(key), id);
    return id;
  }

 private:
  Circuit& circuit_;
  std::map<std::pair<NodeKind, std::vector<std::uint32_t>>, std::uint32_t> dedup_;
};

std::vector<std::size_t> cards_of(const CausalModel& model, const std::vector<std::size_t>& scope) {
  std::vector<std::size_t> cards;
  for (std::size_t v : scope) cards.push_back(model.variable(v).cardinality());
  return cards;
}

}  // namespace

std::size_t Circuit::internal_node_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const CircuitNode& n) {
    return n.kind == NodeKind::sum || n.kind == NodeKind::product;
  }));
}

std::size_t Circuit::find_variable(std::string_view name) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].name == name) return i;
  }
  throw ValidationError("circuit has no variable " + std::string(name));
}

std::vector<std::string> minfill_order(const CausalModel& model) {
  AdjacencySets adj = moral_graph(model);
  std::vector<std::size_t> initial_fill(model.size());
  for (std::size_t v = 0; v < model.size(); ++v) initial_fill[v] = fill_count(adj, v);

  std::vector<bool> eliminated(model.size(), false);
  std::vector<std::string> order;
  for (std::size_t step = 0; step < model.size(); ++step) {
    std::size_t best = model.size();
    std::size_t best_fill = 0;
    for (std::size_t v = 0; v < model.size(); ++v) {
      if (eliminated[v]) continue;
      std::size_t fill = fill_count(adj, v);
      if (best == model.size() || fill < best_fill ||
          (fill == best_fill && initial_fill[v] < initial_fill[best])) {
        best = v;
        best_fill = fill;
      }
    }
    std::vector<std::size_t> nbrs(adj[best].begin(), adj[best].end());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
        adj[nbrs[i]].insert(nbrs[j]);
        adj[nbrs[j]].insert(nbrs[i]);
      }
    }
    for (std::size_t n : nbrs) adj[n].erase(best);
    adj[best].clear();
    eliminated[best] = true;
    order.push_back(model.variable(best).name);
  }
  return order;
}

std::vector<std::string> reverse_declaration_order(const CausalModel& model) {
  std::vector<std::string> order;
  for (std::size_t v = model.size(); v-- > 0;) order.push_back(model.variable(v).name);
  return order;
}

Circuit compile(const CausalModel& model, const std::vector<std::string>& order) {
  if (order.size() != model.size()) throw ValidationError("elimination order is not a permutation of the variables");
  std::vector<std::size_t> elimination;
  std::set<std::size_t> seen;
  for (const auto& name : order) {
    auto v = model.find(name);
    if (!v || !seen.insert(*v).second) throw ValidationError("elimination order is not a permutation of the variables");
    elimination.push_back(*v);
  }
  if (!model.is_acyclic()) throw ValidationError("cannot compile a cyclic graph");

  Circuit circuit;
  circuit.model_digest = structure_digest(model);
  for (std::size_t v = 0; v < model.size(); ++v) {
    const auto& var = model.variable(v);
    if (var.cardinality() == 0) throw ValidationError("variable " + var.name + " has no states");
    CircuitVariable cv{var.name, var.states, var.role, {}};
    for (std::size_t p : model.parent_order(v)) cv.parents.push_back(static_cast<std::uint32_t>(p));
    circuit.variables.push_back(std::move(cv));
  }
  compute_layout(circuit);

  CircuitBuilder builder(circuit);
  std::vector<Factor> pool;
  // φ_V over (parents..., V): entry index row * |V| + state, matching slot order.
  for (std::size_t v = 0; v < model.size(); ++v) {
    const std::size_t card = model.variable(v).cardinality();
    const std::size_t rows = row_count(circuit.variables, v);
    std::vector<std::size_t> raw_scope = model.parent_order(v);
    raw_scope.push_back(v);
    std::vector<std::uint32_t> raw_entries;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t s = 0; s < card; ++s) {
        raw_entries.push_back(builder.leaf(NodeKind::param_leaf, static_cast<std::uint32_t>(v),
                                           static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(r)));
      }
    }
    // Re-express over an ascending scope.
    Factor phi;
    phi.scope = raw_scope;
    std::sort(phi.scope.begin(), phi.scope.end());
    JointSpace raw_space(cards_of(model, raw_scope));
    JointSpace sorted_space(cards_of(model, phi.scope));
    phi.entries.resize(sorted_space.size());
    std::vector<std::size_t> raw_states(raw_scope.size());
    std::vector<std::size_t> sorted_states(phi.scope.size());
    for (std::size_t i = 0; i < raw_space.size(); ++i) {
      raw_space.decode(i, raw_states);
      for (std::size_t k = 0; k < raw_scope.size(); ++k) {
        auto pos = std::lower_bound(phi.scope.begin(), phi.scope.end(), raw_scope[k]) - phi.scope.begin();
        sorted_states[static_cast<std::size_t>(pos)] = raw_states[k];
      }
      phi.entries[sorted_space.index(sorted_states)] = raw_entries[i];
    }
    pool.push_back(std::move(phi));
  }
  for (std::size_t v = 0; v < model.size(); ++v) {
    Factor lambda;
    lambda.scope = {v};
    for (std::size_t s = 0; s < model.variable(v).cardinality(); ++s) {
      lambda.entries.push_back(
          builder.leaf(NodeKind::indicator_leaf, static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(s), 0));
    }
    pool.push_back(std::move(lambda));
  }

  for (std::size_t x : elimination) {
    std::vector<Factor> involved;
    std::vector<Factor> rest;
    for (auto& f : pool) {
      if (std::binary_search(f.scope.begin(), f.scope.end(), x)) {
        involved.push_back(std::move(f));
      } else {
        rest.push_back(std::move(f));
      }
    }
    pool = std::move(rest);
    if (involved.empty()) continue;

    std::set<std::size_t> union_set;
    for (const auto& f : involved) union_set.insert(f.scope.begin(), f.scope.end());
    std::vector<std::size_t> scope(union_set.begin(), union_set.end());
    JointSpace space(cards_of(model, scope));

    // Position of each factor variable inside the union scope.
    std::vector<std::vector<std::size_t>> positions;
    std::vector<JointSpace> factor_spaces;
    for (const auto& f : involved) {
      std::vector<std::size_t> pos;
      for (std::size_t v : f.scope) {
        pos.push_back(static_cast<std::size_t>(std::lower_bound(scope.begin(), scope.end(), v) - scope.begin()));
      }
      positions.push_back(std::move(pos));
      factor_spaces.emplace_back(cards_of(model, f.scope));
    }

    std::vector<std::uint32_t> products(space.size());
    std::vector<std::size_t> states(scope.size(), 0);
    std::vector<std::size_t> sub;
    for (std::size_t i = 0; i < space.size(); ++i) {
      space.decode(i, states);
      std::vector<std::uint32_t> children;
      for (std::size_t f = 0; f < involved.size(); ++f) {
        sub.resize(positions[f].size());
        for (std::size_t k = 0; k < sub.size(); ++k) sub[k] = states[positions[f][k]];
        children.push_back(involved[f].entries[factor_spaces[f].index(sub)]);
      }
      products[i] = builder.internal(NodeKind::product, std::move(children));
    }

    const std::size_t x_pos =
        static_cast<std::size_t>(std::lower_bound(scope.begin(), scope.end(), x) - scope.begin());
    Factor tau;
    for (std::size_t k = 0; k < scope.size(); ++k) {
      if (k != x_pos) tau.scope.push_back(scope[k]);
    }
    JointSpace tau_space(cards_of(model, tau.scope));
    tau.entries.resize(tau_space.size());
    std::vector<std::size_t> tau_states(tau.scope.size());
    for (std::size_t t = 0; t < tau_space.size(); ++t) {
      tau_space.decode(t, tau_states);
      std::vector<std::size_t> full(scope.size());
      for (std::size_t k = 0, j = 0; k < scope.size(); ++k) {
        if (k != x_pos) full[k] = tau_states[j++];
      }
      std::vector<std::uint32_t> children;
      for (std::size_t s = 0; s < model.variable(x).cardinality(); ++s) {
        full[x_pos] = s;
        children.push_back(products[space.index(full)]);
      }
      tau.entries[t] = builder.internal(NodeKind::sum, std::move(children));
    }
    pool.push_back(std::move(tau));
  }

  std::vector<std::uint32_t> scalars;
  for (const auto& f : pool) scalars.push_back(f.entries.front());
  circuit.root = builder.internal(NodeKind::product, std::move(scalars));
  circuit.eval_order.resize(circuit.nodes.size());
  for (std::size_t i = 0; i < circuit.nodes.size(); ++i) circuit.eval_order[i] = static_cast<std::uint32_t>(i);
  return circuit;
}

std::string serialize_circuit(const Circuit& circuit) {
  json variables = json::array();
  for (const auto& v : circuit.variables) {
    json parents = json::array();
    for (auto p : v.parents) parents.push_back(circuit.variables[p].name);
    variables.push_back(
        {{"name", v.name}, {"states", v.states}, {"role", std::string(to_string(v.role))}, {"parents", parents}});
  }
  json nodes = json::array();
  for (const auto& node : circuit.nodes) {
    json item = {{"kind", std::string(to_string(node.kind))}};
    const auto& var = circuit.variables[node.variable];
    switch (node.kind) {
      case NodeKind::sum:
      case NodeKind::product:
        item["children"] = node.children;
        break;
      case NodeKind::indicator_leaf:
        item["binding"] = {{"variable", var.name}, {"state", var.states[node.state]}};
        break;
      case NodeKind::param_leaf: {
        json parents = json::object();
        std::size_t row = node.parent_row;
        for (std::size_t k = var.parents.size(); k-- > 0;) {
          const auto& parent = circuit.variables[var.parents[k]];
          parents[parent.name] = parent.states[row % parent.states.size()];
          row /= parent.states.size();
        }
        item["binding"] = {{"variable", var.name}, {"state", var.states[node.state]}, {"parents", parents}};
        break;
      }
    }
    nodes.push_back(std::move(item));
  }
  json doc = {{"model_digest", circuit.model_digest},
              {"variables", variables},
              {"nodes", nodes},
              {"root", circuit.root},
              {"eval_order", circuit.eval_order}};
  return canonical_dump(doc);
}

Circuit parse_circuit(std::string_view text) {
  json doc = parse_json(text, "circuit");
  Circuit circuit;
  try {
    circuit.model_digest = doc.at("model_digest").get<std::string>();
    std::map<std::string, std::size_t> index;
    const json& vars = doc.at("variables");
    for (const auto& item : vars) {
      CircuitVariable v;
      v.name = item.at("name").get<std::string>();
      v.states = item.at("states").get<std::vector<std::string>>();
      v.role = parse_role(item.at("role").get<std::string>());
      if (!index.emplace(v.name, circuit.variables.size()).second) {
        throw ValidationError("circuit: duplicate variable " + v.name);
      }
      circuit.variables.push_back(std::move(v));
    }
    for (std::size_t i = 0; i < vars.size(); ++i) {
      for (const auto& parent : vars[i].at("parents")) {
        auto it = index.find(parent.get<std::string>());
        if (it == index.end()) throw ValidationError("circuit: unknown parent " + parent.get<std::string>());
        circuit.variables[i].parents.push_back(static_cast<std::uint32_t>(it->second));
      }
    }
    compute_layout(circuit);

    auto state_of = [&circuit](std::size_t v, const std::string& label) {
      const auto& states = circuit.variables[v].states;
      auto it = std::find(states.begin(), states.end(), label);
      if (it == states.end()) throw ValidationError("circuit: unknown state " + label + " of " + circuit.variables[v].name);
      return static_cast<std::uint32_t>(it - states.begin());
    };
    auto var_of = [&index](const std::string& name) {
      auto it = index.find(name);
      if (it == index.end()) throw ValidationError("circuit: binding names unknown variable " + name);
      return it->second;
    };

    const json& nodes = doc.at("nodes");
    std::vector<bool> param_seen(circuit.param_count, false);
    std::vector<bool> indicator_seen(circuit.indicator_count, false);
    for (const auto& item : nodes) {
      CircuitNode node;
      node.kind = parse_kind(item.at("kind").get<std::string>());
      if (node.kind == NodeKind::sum || node.kind == NodeKind::product) {
        for (const auto& child : item.at("children")) {
          auto c = child.get<long long>();
          if (c < 0 || static_cast<std::size_t>(c) >= nodes.size()) {
            throw ValidationError("circuit: dangling child index " + std::to_string(c));
          }
          node.children.push_back(static_cast<std::uint32_t>(c));
        }
        if (node.children.empty()) throw ValidationError("circuit: internal node without children");
      } else {
        const json& binding = item.at("binding");
        std::size_t v = var_of(binding.at("variable").get<std::string>());
        node.variable = static_cast<std::uint32_t>(v);
        node.state = state_of(v, binding.at("state").get<std::string>());
        if (node.kind == NodeKind::param_leaf) {
          const json& parents = binding.at("parents");
          if (parents.size() != circuit.variables[v].parents.size()) {
            throw ValidationError("circuit: param binding of " + circuit.variables[v].name + " has wrong parents");
          }
          std::size_t row = 0;
          for (auto p : circuit.variables[v].parents) {
            const auto& parent = circuit.variables[p];
            if (!parents.contains(parent.name)) throw ValidationError("circuit: param binding misses parent " + parent.name);
            row = row * parent.states.size() + state_of(p, parents.at(parent.name).get<std::string>());
          }
          node.parent_row = static_cast<std::uint32_t>(row);
          std::size_t slot = circuit.param_slot(node);
          if (param_seen[slot]) throw ValidationError("circuit: duplicate param leaf binding for " + circuit.variables[v].name);
          param_seen[slot] = true;
        } else {
          std::size_t slot = circuit.indicator_slot(node);
          if (indicator_seen[slot]) {
            throw ValidationError("circuit: duplicate indicator leaf binding for " + circuit.variables[v].name);
          }
          indicator_seen[slot] = true;
        }
      }
      circuit.nodes.push_back(std::move(node));
    }
    if (std::find(param_seen.begin(), param_seen.end(), false) != param_seen.end() ||
        std::find(indicator_seen.begin(), indicator_seen.end(), false) != indicator_seen.end()) {
      throw ValidationError("circuit: missing leaf bindings");
    }

    auto root = doc.at("root").get<long long>();
    if (root < 0 || static_cast<std::size_t>(root) >= circuit.nodes.size()) throw ValidationError("circuit: root out of range");
    circuit.root = static_cast<std::uint32_t>(root);

    std::vector<long> position(circuit.nodes.size(), -1);
    for (const auto& item : doc.at("eval_order")) {
      auto n = item.get<long long>();
      if (n < 0 || static_cast<std::size_t>(n) >= circuit.nodes.size() || position[static_cast<std::size_t>(n)] >= 0) {
        throw ValidationError("circuit: eval_order is not a permutation of node indices");
      }
      position[static_cast<std::size_t>(n)] = static_cast<long>(circuit.eval_order.size());
      circuit.eval_order.push_back(static_cast<std::uint32_t>(n));
    }
    if (circuit.eval_order.size() != circuit.nodes.size()) {
      throw ValidationError("circuit: eval_order is not a permutation of node indices");
    }
    for (std::size_t n = 0; n < circuit.nodes.size(); ++n) {
      for (auto c : circuit.nodes[n].children) {
        if (position[c] >= position[n]) throw ValidationError("circuit: eval_order places a child after its parent");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("circuit: malformed document: ") + e.what());
  }
  return circuit;
}

Circuit read_circuit_file(const std::string& path) { return parse_circuit(read_text_file(path)); }

void write_circuit_file(const Circuit& circuit, const std::string& path) {
  write_text_file(path, serialize_circuit(circuit));
}

void check_circuit_matches(const Circuit& circuit, const CausalModel& model) {
  if (circuit.model_digest != structure_digest(model)) {
    throw ValidationError("circuit was compiled from a different model structure (digest mismatch)");
  }
}

}  // namespace cnpc
