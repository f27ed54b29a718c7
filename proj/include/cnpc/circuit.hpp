#ifndef CNPC_CIRCUIT_HPP_
#define CNPC_CIRCUIT_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cnpc/causal_model.hpp"

namespace cnpc {

enum class NodeKind : std::uint8_t { sum, product, param_leaf, indicator_leaf };

std::string_view to_string(NodeKind kind);

struct CircuitNode {
  NodeKind kind = NodeKind::sum;
  std::vector<std::uint32_t> children;  // sum/product only
  // Leaf binding. param_leaf: (variable, state, parent_row); indicator_leaf: (variable, state).
  std::uint32_t variable = 0;
  std::uint32_t state = 0;
  std::uint32_t parent_row = 0;

  bool operator==(const CircuitNode&) const = default;
};

// Variable signature a circuit was compiled against; enough to interpret
// leaf bindings and to lay out parameter and indicator slots.
struct CircuitVariable {
  std::string name;
  std::vector<std::string> states;
  Role role = Role::attribute;
  std::vector<std::uint32_t> parents;  // CPD parent order, indices into Circuit::variables

  bool operator==(const CircuitVariable&) const = default;
};

// Immutable arithmetic circuit computing the network polynomial of a model.
// Parameter slot of (v, row, state) is param_offset[v] + row * |v| + state;
// indicator slot of (v, state) is indicator_offset[v] + state.
struct Circuit {
  std::vector<CircuitVariable> variables;
  std::vector<CircuitNode> nodes;
  std::uint32_t root = 0;
  std::vector<std::uint32_t> eval_order;
  std::string model_digest;

  std::vector<std::size_t> param_offset;
  std::vector<std::size_t> indicator_offset;
  std::size_t param_count = 0;
  std::size_t indicator_count = 0;

  std::size_t param_slot(const CircuitNode& leaf) const {
    return param_offset[leaf.variable] + leaf.parent_row * variables[leaf.variable].states.size() + leaf.state;
  }
  std::size_t indicator_slot(const CircuitNode& leaf) const {
    return indicator_offset[leaf.variable] + leaf.state;
  }
  std::size_t internal_node_count() const;
  std::size_t find_variable(std::string_view name) const;

  bool operator==(const Circuit& other) const {
    return variables == other.variables && nodes == other.nodes && root == other.root &&
           eval_order == other.eval_order && model_digest == other.model_digest;
  }
};

// Greedy MinFill over the moral graph. Ties: fewest fill edges in the
// initial moral graph, then declaration order.
std::vector<std::string> minfill_order(const CausalModel& model);

std::vector<std::string> reverse_declaration_order(const CausalModel& model);

// Symbolic variable elimination. Each step multiplies the factors mentioning
// the eliminated variable (one product node per scope assignment) and sums it
// out (one sum node per remaining assignment). Structurally identical nodes
// are emitted once. Throws ValidationError if `order` is not a permutation.
Circuit compile(const CausalModel& model, const std::vector<std::string>& order);

std::string serialize_circuit(const Circuit& circuit);
// Checks child indices, leaf uniqueness and completeness, and eval_order.
Circuit parse_circuit(std::string_view text);
Circuit read_circuit_file(const std::string& path);
void write_circuit_file(const Circuit& circuit, const std::string& path);

// Throws ValidationError unless the circuit was compiled from this structure.
void check_circuit_matches(const Circuit& circuit, const CausalModel& model);

}  // namespace cnpc

#endif  // CNPC_CIRCUIT_HPP_
