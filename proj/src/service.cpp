#include "cnpc/service.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cnpc/error.hpp"
#include "cnpc/io.hpp"

namespace cnpc {

using nlohmann::json;

std::unique_ptr<LoadedBundle> make_bundle(CausalModel model, Circuit circuit, PredictorParams predictor,
                                          std::optional<Dataset> dataset, const std::string& predictor_dataset_digest,
                                          double alpha, bool reveal_ground_truth) {
  check_alpha(alpha);
  require_valid(model);
  auto bundle = std::make_unique<LoadedBundle>();
  bundle->model = std::move(model);
  bundle->circuit = std::move(circuit);
  bundle->predictor = std::move(predictor);
  bundle->fusion.alpha = alpha;
  bundle->reveal_ground_truth = reveal_ground_truth;
  bundle->query = std::make_unique<CircuitQuery>(bundle->circuit, bind_params(bundle->circuit, bundle->model));
  bundle->engine = std::make_unique<FusionEngine>(*bundle->query, bundle->predictor.head_names);
  if (dataset) {
    if (structure_digest(dataset->model) != bundle->circuit.model_digest) {
      throw ValidationError("dataset model does not match the circuit (digest mismatch)");
    }
    if (!predictor_dataset_digest.empty() && predictor_dataset_digest != dataset->base_digest) {
      throw ValidationError("predictor was trained on a different dataset (digest mismatch)");
    }
    if (static_cast<std::size_t>(dataset->embeddings.cols()) != bundle->predictor.input_dim()) {
      throw ValidationError("dataset embedding width does not match the predictor input");
    }
    bundle->dataset = std::move(dataset);
  }
  return bundle;
}

std::unique_ptr<LoadedBundle> load_bundle(const BundlePaths& paths, double alpha, bool reveal_ground_truth) {
  CausalModel model = read_model_file(paths.params);
  Circuit circuit = read_circuit_file(paths.circuit);
  PredictorFile predictor = read_predictor_file(paths.predictor);
  std::optional<Dataset> dataset;
  if (!paths.data_dir.empty()) dataset = read_dataset(paths.data_dir, paths.corruption);
  return make_bundle(std::move(model), std::move(circuit), std::move(predictor.params), std::move(dataset),
                     predictor.dataset_digest, alpha, reveal_ground_truth);
}

namespace {

HttpResult error(int status, const std::string& message) { return {status, json{{"error", message}}}; }

json dist_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

std::optional<std::size_t> parse_index(const std::string& text) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  try {
    return static_cast<std::size_t>(std::stoull(text));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

HttpResult handle_model(const LoadedBundle& bundle) {
  json variables = json::array();
  for (const auto& v : bundle.model.variables()) {
    variables.push_back({{"name", v.name}, {"states", v.states}, {"role", std::string(to_string(v.role))}});
  }
  json edges = json::array();
  for (const auto& [from, to] : bundle.model.edges()) edges.push_back(json::array({from, to}));
  return {200,
          {{"variables", variables},
           {"edges", edges},
           {"class", bundle.model.variable(bundle.model.class_index()).name},
           {"depth_order", depth_order(bundle.model)},
           {"default_alpha", bundle.fusion.alpha}}};
}

HttpResult handle_instances(const LoadedBundle& bundle, const QueryParams& params) {
  if (!bundle.dataset) return error(404, "no dataset loaded");
  const Dataset& ds = *bundle.dataset;
  auto get = [&params](const std::string& key, const std::string& fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  const std::string split_name = get("split", "test");
  const std::vector<std::size_t>* rows = nullptr;
  if (split_name == "train") rows = &ds.splits.train;
  if (split_name == "val") rows = &ds.splits.val;
  if (split_name == "test") rows = &ds.splits.test;
  if (!rows) return error(400, "split must be train, val or test");
  auto offset = parse_index(get("offset", "0"));
  auto limit = parse_index(get("limit", "20"));
  if (!offset || !limit) return error(400, "offset and limit must be nonnegative integers");
  json instances = json::array();
  for (std::size_t i = *offset; i < rows->size() && i < *offset + *limit; ++i) {
    const std::size_t row = (*rows)[i];
    json item = {{"id", row}};
    if (bundle.reveal_ground_truth) {
      json labels = json::object();
      for (std::size_t c = 0; c < ds.labels.columns.size(); ++c) {
        const auto& var = ds.model.variable(ds.model.index_of(ds.labels.columns[c]));
        labels[var.name] = var.states[ds.labels.at(row, c)];
      }
      item["labels"] = std::move(labels);
    }
    instances.push_back(std::move(item));
  }
  return {200,
          {{"split", split_name},
           {"offset", *offset},
           {"limit", *limit},
           {"total", rows->size()},
           {"corruption", ds.corruption},
           {"instances", instances}}};
}

HttpResult handle_predict(const LoadedBundle& bundle, std::string_view body) {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "request body is not valid JSON");
  }
  if (!request.is_object()) return error(400, "request body must be an object");
  if (!bundle.dataset) return error(404, "no dataset loaded");
  const Dataset& ds = *bundle.dataset;
  if (!request.contains("instance_id") || !request["instance_id"].is_number_integer()) {
    return error(400, "instance_id must be an integer");
  }
  const auto id = request["instance_id"].get<long long>();
  if (id < 0 || static_cast<std::size_t>(id) >= ds.size()) return error(404, "unknown instance " + std::to_string(id));
  double alpha = bundle.fusion.alpha;
  if (request.contains("alpha")) {
    if (!request["alpha"].is_number()) return error(422, "alpha must be a number in [0, 1]");
    alpha = request["alpha"].get<double>();
    if (!(alpha >= 0.0 && alpha <= 1.0)) return error(422, "alpha must lie in [0, 1]");
  }
  InterventionSet interventions;
  if (request.contains("interventions")) {
    const json& list = request["interventions"];
    if (!list.is_array()) return error(400, "interventions must be a list");
    for (const auto& item : list) {
      if (!item.is_object() || !item.contains("attribute") || !item["attribute"].is_string() || !item.contains("value")) {
        return error(400, "each intervention needs an attribute name and a value");
      }
      const std::string name = item["attribute"].get<std::string>();
      auto index = bundle.model.find(name);
      if (!index) return error(400, "unknown attribute " + name);
      const auto& var = bundle.model.variable(*index);
      if (var.role != Role::attribute) return error(400, "cannot intervene on " + name + ": not an attribute");
      std::size_t state = 0;
      const json& value = item["value"];
      if (value.is_string()) {
        auto it = std::find(var.states.begin(), var.states.end(), value.get<std::string>());
        if (it == var.states.end()) return error(400, "unknown state " + value.get<std::string>() + " of " + name);
        state = static_cast<std::size_t>(it - var.states.begin());
      } else if (value.is_number_integer() && value.get<long long>() >= 0 &&
                 static_cast<std::size_t>(value.get<long long>()) < var.cardinality()) {
        state = static_cast<std::size_t>(value.get<long long>());
      } else {
        return error(400, "invalid value for " + name);
      }
      if (interventions.assignments.contains(name)) return error(400, "attribute " + name + " intervened twice");
      interventions.assignments[name] = state;
    }
  }

  const auto row = static_cast<std::size_t>(id);
  AttrDists neural = forward(bundle.predictor, ds.embeddings.row(static_cast<Eigen::Index>(row)).transpose());
  FusedPrediction fused = bundle.engine->predict(neural, interventions, alpha);
  const auto& names = bundle.engine->attribute_names();
  const auto& class_var = bundle.model.variable(bundle.model.class_index());
  auto labels_json = [&](const std::vector<std::size_t>& states) {
    json out = json::object();
    for (std::size_t k = 0; k < names.size(); ++k) {
      out[names[k]] = bundle.model.variable(bundle.model.index_of(names[k])).states[states[k]];
    }
    return out;
  };
  json neural_json = json::object();
  json poe_json = json::object();
  for (std::size_t k = 0; k < names.size(); ++k) {
    neural_json[names[k]] = dist_json(fused.neural[k]);
    poe_json[names[k]] = dist_json(fused.poe_marginals[k]);
  }
  json applied = json::array();
  for (const auto& [name, state] : interventions.assignments) {
    applied.push_back({{"attribute", name}, {"value", bundle.model.variable(bundle.model.index_of(name)).states[state]}});
  }
  return {200,
          {{"instance_id", row},
           {"alpha", alpha},
           {"interventions", applied},
           {"corruption", ds.corruption},
           {"neural", neural_json},
           {"poe_marginals", poe_json},
           {"z_alpha", fused.poe.z_alpha},
           {"npc",
            {{"class_distribution", dist_json(fused.npc_class)},
             {"predicted_class", class_var.states[fused.npc_labels.class_label]},
             {"predicted_attributes", labels_json(fused.npc_labels.attributes)}}},
           {"cnpc",
            {{"class_distribution", dist_json(fused.cnpc_class)},
             {"predicted_class", class_var.states[fused.cnpc_labels.class_label]},
             {"predicted_attributes", labels_json(fused.cnpc_labels.attributes)}}}}};
}

HttpResult handle_suggest(const LoadedBundle& bundle, const QueryParams& params) {
  std::vector<std::string> already;
  auto it = params.find("already");
  if (it != params.end() && !it->second.empty()) {
    const std::string& text = it->second;
    if (text.front() == '[') {
      try {
        already = json::parse(text).get<std::vector<std::string>>();
      } catch (const json::exception&) {
        return error(400, "already must be a JSON list of attribute names");
      }
    } else {
      std::string current;
      for (char c : text + ",") {
        if (c == ',') {
          if (!current.empty()) already.push_back(current);
          current.clear();
        } else {
          current += c;
        }
      }
    }
  }
  for (const auto& name : already) {
    auto index = bundle.model.find(name);
    if (!index || bundle.model.variable(*index).role != Role::attribute) {
      return error(400, "unknown attribute " + name);
    }
  }
  for (const auto& name : depth_order(bundle.model)) {
    if (std::find(already.begin(), already.end(), name) == already.end()) return {200, {{"suggestion", name}}};
  }
  return {200, {{"suggestion", nullptr}}};
}

HttpResult dispatch(const LoadedBundle& bundle, std::string_view method, std::string_view path,
                    const QueryParams& params, std::string_view body) {
  try {
    if (method == "GET" && path == "/model") return handle_model(bundle);
    if (method == "GET" && path == "/instances") return handle_instances(bundle, params);
    if (method == "POST" && path == "/predict") return handle_predict(bundle, body);
    if (method == "GET" && path == "/suggest") return handle_suggest(bundle, params);
  } catch (const ValidationError& e) {
    return error(400, e.what());
  }
  return error(404, "no route for " + std::string(method) + " " + std::string(path));
}

struct ServiceServer::Impl {
  httplib::Server server;
};

ServiceServer::ServiceServer(const LoadedBundle& bundle) : impl_(std::make_unique<Impl>()) {
  auto handler = [&bundle](const httplib::Request& req, httplib::Response& res) {
    QueryParams params;
    for (const auto& [key, value] : req.params) params[key] = value;
    HttpResult result;
    try {
      result = dispatch(bundle, req.method, req.path, params, req.body);
    } catch (const std::exception& e) {
      spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
      result = {500, json{{"error", "internal error"}}};
    }
    res.status = result.status;
    res.set_content(result.body.dump(), "application/json");
  };
  for (const char* path : {"/model", "/instances", "/suggest"}) impl_->server.Get(path, handler);
  impl_->server.Post("/predict", handler);
}

ServiceServer::~ServiceServer() { stop(); }

int ServiceServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ServiceServer::listen_after_bind() { impl_->server.listen_after_bind(); }

void ServiceServer::stop() {
  if (impl_) impl_->server.stop();
}

bool ServiceServer::running() const { return impl_->server.is_running(); }

void serve(const LoadedBundle& bundle, const std::string& host, int port) {
  ServiceServer server(bundle);
  int bound = server.bind(host, port);
  spdlog::info("serving on http://{}:{}", host, bound);
  server.listen_after_bind();
}

}  // namespace cnpc
