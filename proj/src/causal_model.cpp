#include "cnpc/causal_model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <sstream>

#include "cnpc/error.hpp"
#include "cnpc/io.hpp"

namespace cnpc {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::attribute:
      return "attribute";
    case Role::class_label:
      return "class";
    case Role::auxiliary_input:
      return "auxiliary-input";
  }
  return "attribute";
}

Role parse_role(std::string_view text) {
  if (text == "attribute") return Role::attribute;
  if (text == "class") return Role::class_label;
  if (text == "auxiliary-input") return Role::auxiliary_input;
  throw ValidationError("unknown role '" + std::string(text) + "'");
}

std::size_t Variable::state_index(std::string_view label) const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] == label) return i;
  }
  throw ValidationError("variable " + name + " has no state '" + std::string(label) + "'");
}

CausalModel::CausalModel(std::vector<Variable> variables, std::vector<Edge> edges,
                         std::map<std::string, CpdTable> cpds)
    : variables_(std::move(variables)), edges_(std::move(edges)), cpds_(std::move(cpds)) {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (!index_.emplace(variables_[i].name, i).second) {
      throw ValidationError("duplicate variable name " + variables_[i].name);
    }
  }
  parents_.assign(variables_.size(), {});
  children_.assign(variables_.size(), {});
  for (const auto& [from, to] : edges_) {
    auto p = find(from);
    auto c = find(to);
    if (!p || !c) throw ValidationError("edge " + from + "->" + to + " references an unknown variable");
    parents_[*c].push_back(*p);
    children_[*p].push_back(*c);
  }
  for (const auto& [name, table] : cpds_) {
    if (!find(name)) throw ValidationError("CPD for unknown variable " + name);
    if (table.variable != name) throw ValidationError("CPD keyed " + name + " describes " + table.variable);
    for (const auto& parent : table.parent_order) {
      if (!find(parent)) throw ValidationError("CPD of " + name + " names unknown parent " + parent);
    }
  }
}

std::optional<std::size_t> CausalModel::find(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CausalModel::index_of(std::string_view name) const {
  auto found = find(name);
  if (!found) throw ValidationError("unknown variable " + std::string(name));
  return *found;
}

std::vector<std::size_t> CausalModel::parent_order(std::size_t index) const {
  auto it = cpds_.find(variables_[index].name);
  if (it == cpds_.end()) return parents_[index];
  std::vector<std::size_t> order;
  order.reserve(it->second.parent_order.size());
  for (const auto& name : it->second.parent_order) order.push_back(index_of(name));
  return order;
}

const CpdTable& CausalModel::cpd(std::size_t index) const {
  auto it = cpds_.find(variables_[index].name);
  if (it == cpds_.end()) throw ValidationError("variable " + variables_[index].name + " has no CPD");
  return it->second;
}

std::size_t CausalModel::cpd_row(std::size_t index, const std::vector<std::size_t>& states) const {
  std::size_t row = 0;
  for (std::size_t parent : parent_order(index)) row = row * variables_[parent].cardinality() + states[parent];
  return row;
}

std::size_t CausalModel::class_index() const {
  auto classes = indices_with_role(Role::class_label);
  if (classes.size() != 1) {
    throw ValidationError("model must have exactly one class variable, found " + std::to_string(classes.size()));
  }
  return classes.front();
}

std::vector<std::size_t> CausalModel::indices_with_role(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].role == role) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> CausalModel::attribute_indices() const { return indices_with_role(Role::attribute); }

std::vector<std::string> CausalModel::attribute_names() const {
  std::vector<std::string> names;
  for (std::size_t i : attribute_indices()) names.push_back(variables_[i].name);
  return names;
}

std::vector<std::size_t> CausalModel::topological_order() const {
  std::vector<std::size_t> indegree(variables_.size());
  for (std::size_t i = 0; i < variables_.size(); ++i) indegree[i] = parents_[i].size();
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (std::size_t c : children_[v]) {
      if (--indegree[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != variables_.size()) throw ValidationError("graph contains a directed cycle");
  return order;
}

bool CausalModel::is_acyclic() const {
  try {
    topological_order();
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

std::vector<std::size_t> descendants(const CausalModel& model, std::size_t index) {
  std::vector<bool> seen(model.size(), false);
  std::deque<std::size_t> queue(model.children(index).begin(), model.children(index).end());
  std::vector<std::size_t> out;
  while (!queue.empty()) {
    std::size_t v = queue.front();
    queue.pop_front();
    if (seen[v]) continue;
    seen[v] = true;
    out.push_back(v);
    for (std::size_t c : model.children(v)) queue.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Violation> validate(const CausalModel& model) {
  std::vector<Violation> out;
  auto report = [&out](std::string kind, std::string element, std::string message) {
    out.push_back({std::move(kind), std::move(element), std::move(message)});
  };

  for (const auto& v : model.variables()) {
    if (v.cardinality() < 2) report("cardinality", v.name, "variable " + v.name + " has fewer than 2 states");
    std::set<std::string> labels(v.states.begin(), v.states.end());
    if (labels.size() != v.states.size()) report("states", v.name, "variable " + v.name + " has duplicate state labels");
  }

  std::size_t class_count = model.indices_with_role(Role::class_label).size();
  if (class_count != 1) {
    report("class", "", "model must have exactly one class variable, found " + std::to_string(class_count));
  }

  std::set<Edge> seen_edges;
  for (const auto& edge : model.edges()) {
    if (edge.first == edge.second) report("edge", edge.first + "->" + edge.second, "self-loop on " + edge.first);
    if (!seen_edges.insert(edge).second) report("edge", edge.first + "->" + edge.second, "duplicate edge");
  }

  const bool acyclic = model.is_acyclic();
  if (!acyclic) report("cycle", "", "graph contains a directed cycle");

  if (!model.cpds().empty()) {
    for (std::size_t i = 0; i < model.size(); ++i) {
      const auto& var = model.variable(i);
      auto it = model.cpds().find(var.name);
      if (it == model.cpds().end()) {
        report("cpd", var.name, "missing CPD for " + var.name);
        continue;
      }
      const CpdTable& table = it->second;
      std::set<std::size_t> graph_parents(model.parents(i).begin(), model.parents(i).end());
      auto order = model.parent_order(i);
      std::set<std::size_t> cpd_parents(order.begin(), order.end());
      if (graph_parents != cpd_parents || cpd_parents.size() != order.size()) {
        report("cpd", var.name, "CPD parent order of " + var.name + " does not match its graph parents");
        continue;
      }
      std::size_t rows = 1;
      for (std::size_t p : order) rows *= model.variable(p).cardinality();
      if (static_cast<std::size_t>(table.probabilities.rows()) != rows ||
          static_cast<std::size_t>(table.probabilities.cols()) != var.cardinality()) {
        report("cpd", var.name, "CPD of " + var.name + " has wrong shape");
        continue;
      }
      for (Eigen::Index r = 0; r < table.probabilities.rows(); ++r) {
        const auto row = table.probabilities.row(r);
        bool in_range = row.allFinite() && (row.array() >= 0.0).all() && (row.array() <= 1.0).all();
        if (!in_range) {
          report("cpd", var.name + "[" + std::to_string(r) + "]", "CPD entry out of [0,1] for " + var.name);
        } else if (std::abs(row.sum() - 1.0) > 1e-9) {
          std::ostringstream msg;
          msg.precision(17);
          msg << "row not normalized: " << var.name << " row " << r << " sums to " << row.sum();
          report("cpd", var.name + "[" + std::to_string(r) + "]", msg.str());
        }
      }
    }
  }

  if (class_count == 1) {
    std::size_t y = model.class_index();
    for (std::size_t p : model.parents(y)) {
      if (model.variable(p).role != Role::attribute) {
        report("assumption", model.variable(p).name,
               "parent " + model.variable(p).name + " of class is not an attribute");
      }
    }
    for (std::size_t d : descendants(model, y)) {
      if (model.variable(d).role == Role::attribute) {
        report("assumption", model.variable(d).name,
               "attribute " + model.variable(d).name + " is a descendant of class");
      }
    }
  }
  return out;
}

void require_valid(const CausalModel& model) {
  auto violations = validate(model);
  if (violations.empty()) return;
  std::string message = "invalid model:";
  for (const auto& v : violations) message += "\n  " + v.message;
  throw ValidationError(message);
}

std::vector<std::string> non_descendants(const CausalModel& model, std::string_view name) {
  std::size_t v = model.index_of(name);
  std::vector<bool> excluded(model.size(), false);
  excluded[v] = true;
  for (std::size_t d : descendants(model, v)) excluded[d] = true;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!excluded[i]) out.push_back(model.variable(i).name);
  }
  return out;
}

std::vector<std::string> depth_order(const CausalModel& model) {
  std::vector<std::size_t> depth(model.size(), 0);
  for (std::size_t v : model.topological_order()) {
    for (std::size_t p : model.parents(v)) depth[v] = std::max(depth[v], depth[p] + 1);
  }
  auto attributes = model.attribute_indices();
  std::stable_sort(attributes.begin(), attributes.end(),
                   [&depth](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
  std::vector<std::string> out;
  for (std::size_t a : attributes) out.push_back(model.variable(a).name);
  return out;
}

void check_interventions(const CausalModel& model, const InterventionSet& interventions) {
  for (const auto& [name, state] : interventions.assignments) {
    auto index = model.find(name);
    if (!index) throw ValidationError("intervention on unknown variable " + name);
    const auto& var = model.variable(*index);
    if (var.role == Role::class_label) throw ValidationError("cannot intervene on the class variable " + name);
    if (var.role != Role::attribute) throw ValidationError("cannot intervene on non-attribute variable " + name);
    if (state >= var.cardinality()) throw ValidationError("intervention state out of range for " + name);
  }
}

CausalModel mutilate(const CausalModel& model, const InterventionSet& interventions) {
  check_interventions(model, interventions);
  if (interventions.empty()) return model;
  std::vector<Edge> edges;
  for (const auto& edge : model.edges()) {
    if (!interventions.assignments.contains(edge.second)) edges.push_back(edge);
  }
  auto cpds = model.cpds();
  if (!cpds.empty()) {
    for (const auto& [name, state] : interventions.assignments) {
      const auto& var = model.variable(model.index_of(name));
      CpdTable point{name, {}, Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(var.cardinality()))};
      point.probabilities(0, static_cast<Eigen::Index>(state)) = 1.0;
      cpds[name] = std::move(point);
    }
  }
  return CausalModel(model.variables(), std::move(edges), std::move(cpds));
}

std::size_t LabelTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw ValidationError("label table has no column " + std::string(name));
}

LabelTable LabelTable::select_rows(const std::vector<std::size_t>& row_indices) const {
  LabelTable out{columns, row_indices.size(), {}};
  out.values.reserve(row_indices.size() * columns.size());
  for (std::size_t r : row_indices) {
    for (std::size_t c = 0; c < columns.size(); ++c) out.values.push_back(at(r, c));
  }
  return out;
}

CausalModel fit_cpds(const CausalModel& model, const LabelTable& data, double smoothing) {
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw ValidationError("smoothing must be a nonnegative real");
  std::vector<std::size_t> column(model.size());
  for (std::size_t v = 0; v < model.size(); ++v) column[v] = data.column_index(model.variable(v).name);

  std::vector<std::size_t> states(model.size());
  std::map<std::string, CpdTable> cpds;
  std::vector<Eigen::MatrixXd> counts(model.size());
  std::vector<std::vector<std::size_t>> orders(model.size());
  for (std::size_t v = 0; v < model.size(); ++v) {
    orders[v] = model.parent_order(v);
    std::size_t rows = 1;
    for (std::size_t p : orders[v]) rows *= model.variable(p).cardinality();
    counts[v] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                      static_cast<Eigen::Index>(model.variable(v).cardinality()));
  }
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t v = 0; v < model.size(); ++v) {
      states[v] = data.at(r, column[v]);
      if (states[v] >= model.variable(v).cardinality()) {
        throw ValidationError("unknown state index " + std::to_string(states[v]) + " for " + model.variable(v).name +
                              " in row " + std::to_string(r));
      }
    }
    for (std::size_t v = 0; v < model.size(); ++v) {
      std::size_t row = 0;
      for (std::size_t p : orders[v]) row = row * model.variable(p).cardinality() + states[p];
      counts[v](static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(states[v])) += 1.0;
    }
  }
  for (std::size_t v = 0; v < model.size(); ++v) {
    const auto& var = model.variable(v);
    Eigen::MatrixXd table = counts[v].array() + smoothing;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
      double total = table.row(r).sum();
      if (total > 0.0) {
        table.row(r) /= total;
      } else {
        table.row(r).setConstant(1.0 / static_cast<double>(var.cardinality()));
      }
    }
    std::vector<std::string> parent_names;
    for (std::size_t p : orders[v]) parent_names.push_back(model.variable(p).name);
    cpds.emplace(var.name, CpdTable{var.name, std::move(parent_names), std::move(table)});
  }
  return CausalModel(model.variables(), model.edges(), std::move(cpds));
}

namespace {

json structure_json(const CausalModel& model) {
  json variables = json::array();
  for (const auto& v : model.variables()) {
    variables.push_back({{"name", v.name}, {"states", v.states}, {"role", std::string(to_string(v.role))}});
  }
  json edges = json::array();
  for (const auto& [from, to] : model.edges()) edges.push_back(json::array({from, to}));
  return {{"variables", variables}, {"edges", edges}};
}

template <typename T>
T field(const json& object, const char* key, std::string_view context) {
  if (!object.is_object() || !object.contains(key)) {
    throw ValidationError(std::string(context) + ": missing field '" + key + "'");
  }
  try {
    return object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(context) + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

CausalModel parse_model(std::string_view text) {
  json doc = parse_json(text, "model");
  if (!doc.is_object()) throw ValidationError("model: document must be an object");
  std::vector<Variable> variables;
  for (const auto& item : field<json>(doc, "variables", "model")) {
    Variable v;
    v.name = field<std::string>(item, "name", "model variable");
    v.states = field<std::vector<std::string>>(item, "states", "model variable " + v.name);
    v.role = parse_role(field<std::string>(item, "role", "model variable " + v.name));
    std::set<std::string> labels(v.states.begin(), v.states.end());
    if (labels.size() != v.states.size()) throw ValidationError("model: duplicate state labels in " + v.name);
    variables.push_back(std::move(v));
  }
  std::size_t classes = std::count_if(variables.begin(), variables.end(),
                                      [](const Variable& v) { return v.role == Role::class_label; });
  if (classes != 1) throw ValidationError("model: expected exactly one class variable, found " + std::to_string(classes));

  std::vector<Edge> edges;
  if (doc.contains("edges")) {
    for (const auto& item : doc.at("edges")) {
      if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) {
        throw ValidationError("model: edges must be [parent, child] name pairs");
      }
      edges.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
    }
  }

  std::map<std::string, CpdTable> cpds;
  if (doc.contains("cpds") && !doc.at("cpds").is_null()) {
    const json& tables = doc.at("cpds");
    if (!tables.is_object()) throw ValidationError("model: cpds must be an object");
    std::map<std::string, const Variable*> by_name;
    for (const auto& v : variables) by_name[v.name] = &v;
    for (auto it = tables.begin(); it != tables.end(); ++it) {
      auto found = by_name.find(it.key());
      if (found == by_name.end()) throw ValidationError("model: CPD for unknown variable " + it.key());
      const Variable& var = *found->second;
      CpdTable table;
      table.variable = var.name;
      table.parent_order = field<std::vector<std::string>>(it.value(), "parents", "model cpd " + var.name);
      std::size_t rows = 1;
      for (const auto& parent : table.parent_order) {
        auto p = by_name.find(parent);
        if (p == by_name.end()) throw ValidationError("model: CPD of " + var.name + " names unknown parent " + parent);
        rows *= p->second->cardinality();
      }
      auto raw = field<std::vector<std::vector<double>>>(it.value(), "table", "model cpd " + var.name);
      if (raw.size() != rows) {
        throw ValidationError("model: CPD of " + var.name + " has " + std::to_string(raw.size()) + " rows, expected " +
                              std::to_string(rows));
      }
      table.probabilities.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(var.cardinality()));
      for (std::size_t r = 0; r < rows; ++r) {
        if (raw[r].size() != var.cardinality()) {
          throw ValidationError("model: CPD of " + var.name + " row " + std::to_string(r) + " has wrong width");
        }
        for (std::size_t c = 0; c < raw[r].size(); ++c) {
          table.probabilities(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = raw[r][c];
        }
      }
      cpds.emplace(var.name, std::move(table));
    }
  }
  return CausalModel(std::move(variables), std::move(edges), std::move(cpds));
}

std::string serialize_model(const CausalModel& model) {
  json doc = structure_json(model);
  if (!model.cpds().empty()) {
    json tables = json::object();
    for (const auto& [name, table] : model.cpds()) {
      json rows = json::array();
      for (Eigen::Index r = 0; r < table.probabilities.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < table.probabilities.cols(); ++c) row.push_back(table.probabilities(r, c));
        rows.push_back(std::move(row));
      }
      tables[name] = {{"parents", table.parent_order}, {"table", std::move(rows)}};
    }
    doc["cpds"] = std::move(tables);
  }
  return canonical_dump(doc);
}

CausalModel read_model_file(const std::string& path) { return parse_model(read_text_file(path)); }

void write_model_file(const CausalModel& model, const std::string& path) { write_text_file(path, serialize_model(model)); }

std::string structure_digest(const CausalModel& model) {
  json doc = structure_json(model);
  json orders = json::object();
  for (std::size_t v = 0; v < model.size(); ++v) {
    json names = json::array();
    for (std::size_t p : model.parent_order(v)) names.push_back(model.variable(p).name);
    orders[model.variable(v).name] = std::move(names);
  }
  doc["parent_orders"] = std::move(orders);
  return sha256_hex(canonical_dump(doc));
}

}  // namespace cnpc
