#ifndef CNPC_CAUSAL_MODEL_HPP_
#define CNPC_CAUSAL_MODEL_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cnpc {

enum class Role { attribute, class_label, auxiliary_input };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct Variable {
  std::string name;
  std::vector<std::string> states;
  Role role = Role::attribute;

  std::size_t cardinality() const { return states.size(); }
  // Throws ValidationError for an unknown label.
  std::size_t state_index(std::string_view label) const;

  bool operator==(const Variable&) const = default;
};

// Conditional table for one variable. Row r is the parent configuration whose
// mixed-radix digits follow parent_order, first parent most significant;
// column c is the child state.
struct CpdTable {
  std::string variable;
  std::vector<std::string> parent_order;
  Eigen::MatrixXd probabilities;

  bool operator==(const CpdTable& other) const {
    return variable == other.variable && parent_order == other.parent_order &&
           probabilities.rows() == other.probabilities.rows() &&
           probabilities.cols() == other.probabilities.cols() &&
           probabilities == other.probabilities;
  }
};

using Edge = std::pair<std::string, std::string>;

// variable name -> state index.
using Assignment = std::map<std::string, std::size_t>;

// attribute name -> forced state index.
struct InterventionSet {
  std::map<std::string, std::size_t> assignments;

  bool empty() const { return assignments.empty(); }
  std::size_t size() const { return assignments.size(); }
  bool operator==(const InterventionSet&) const = default;
  auto operator<=>(const InterventionSet&) const = default;
};

// Immutable DAG over categorical variables with optional CPDs. The
// constructor resolves names and rejects duplicate names and dangling edges;
// semantic checks (acyclicity, normalization, structural assumption) belong
// to validate().
class CausalModel {
 public:
  CausalModel() = default;
  CausalModel(std::vector<Variable> variables, std::vector<Edge> edges,
              std::map<std::string, CpdTable> cpds = {});

  std::size_t size() const { return variables_.size(); }
  const std::vector<Variable>& variables() const { return variables_; }
  const Variable& variable(std::size_t index) const { return variables_[index]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::map<std::string, CpdTable>& cpds() const { return cpds_; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  // Graph parents/children in edge declaration order.
  const std::vector<std::size_t>& parents(std::size_t index) const { return parents_[index]; }
  const std::vector<std::size_t>& children(std::size_t index) const { return children_[index]; }

  // Parent order defining CPD rows: the CPD's parent_order when present,
  // otherwise the graph parents.
  std::vector<std::size_t> parent_order(std::size_t index) const;

  bool has_cpds() const { return !variables_.empty() && cpds_.size() == variables_.size(); }
  const CpdTable& cpd(std::size_t index) const;
  // Row index of the CPD for `index` under a full (or parent-covering) dense assignment.
  std::size_t cpd_row(std::size_t index, const std::vector<std::size_t>& states) const;

  // Throws ValidationError unless exactly one class variable exists.
  std::size_t class_index() const;
  std::vector<std::size_t> attribute_indices() const;
  std::vector<std::string> attribute_names() const;
  std::vector<std::size_t> indices_with_role(Role role) const;

  // Kahn order with declaration-order priority. Throws ValidationError on cycles.
  std::vector<std::size_t> topological_order() const;
  bool is_acyclic() const;

  bool operator==(const CausalModel& other) const {
    return variables_ == other.variables_ && edges_ == other.edges_ && cpds_ == other.cpds_;
  }

 private:
  std::vector<Variable> variables_;
  std::vector<Edge> edges_;
  std::map<std::string, CpdTable> cpds_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
};

struct Violation {
  std::string kind;
  std::string element;
  std::string message;
};

// Acyclicity, CPD shape/normalization, role constraints and the structural
// assumption Pa(Y) ⊆ attributes ⊆ ND(Y). Empty result means valid.
std::vector<Violation> validate(const CausalModel& model);
// Throws ValidationError listing every violation.
void require_valid(const CausalModel& model);

// Variables not reachable from `name` by a directed path, excluding itself,
// in declaration order.
std::vector<std::string> non_descendants(const CausalModel& model, std::string_view name);
std::vector<std::size_t> descendants(const CausalModel& model, std::size_t index);

// Attributes sorted by longest path from any root; ties by declaration order.
std::vector<std::string> depth_order(const CausalModel& model);

// Removes edges into intervened variables and replaces their CPDs by point
// masses. Throws ValidationError for non-attribute targets.
CausalModel mutilate(const CausalModel& model, const InterventionSet& interventions);

// Rejects unknown names, out-of-range states and non-attribute targets.
void check_interventions(const CausalModel& model, const InterventionSet& interventions);

// Complete discrete observations: rows x columns of state indices.
struct LabelTable {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<std::size_t> values;  // row-major

  std::size_t at(std::size_t row, std::size_t column) const { return values[row * columns.size() + column]; }
  std::size_t& at(std::size_t row, std::size_t column) { return values[row * columns.size() + column]; }
  std::size_t column_index(std::string_view name) const;
  LabelTable select_rows(const std::vector<std::size_t>& row_indices) const;
  bool operator==(const LabelTable&) const = default;
};

// Closed-form maximum likelihood with additive smoothing:
// (count(child, parents) + s) / (count(parents) + s * |child|).
CausalModel fit_cpds(const CausalModel& model, const LabelTable& data, double smoothing = 1.0);

CausalModel parse_model(std::string_view text);
// Canonical text: sorted keys, 17 significant digits.
std::string serialize_model(const CausalModel& model);
CausalModel read_model_file(const std::string& path);
void write_model_file(const CausalModel& model, const std::string& path);

// SHA-256 over the canonical structure (variables, edges, parent orders), so
// circuits stay valid across parameter refits.
std::string structure_digest(const CausalModel& model);

}  // namespace cnpc

#endif  // CNPC_CAUSAL_MODEL_HPP_
