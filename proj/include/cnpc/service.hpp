#ifndef CNPC_SERVICE_HPP_
#define CNPC_SERVICE_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "cnpc/causal_model.hpp"
#include "cnpc/circuit.hpp"
#include "cnpc/circuit_runtime.hpp"
#include "cnpc/data_gen.hpp"
#include "cnpc/fusion.hpp"
#include "cnpc/predictor.hpp"

namespace cnpc {

// Everything the service and the evaluation commands need, loaded once and
// immutable afterwards. Not movable: the engine points into the circuit.
struct LoadedBundle {
  CausalModel model;  // with fitted CPDs
  Circuit circuit;
  std::unique_ptr<CircuitQuery> query;
  std::unique_ptr<FusionEngine> engine;
  PredictorParams predictor;
  std::optional<Dataset> dataset;
  FusionConfig fusion;
  bool reveal_ground_truth = false;

  LoadedBundle() = default;
  LoadedBundle(const LoadedBundle&) = delete;
  LoadedBundle& operator=(const LoadedBundle&) = delete;
};

struct BundlePaths {
  std::string params;  // model file with CPDs
  std::string circuit;
  std::string predictor;
  std::string data_dir;  // optional
  std::optional<std::string> corruption;
};

// Cross-checks circuit against model and predictor against dataset.
std::unique_ptr<LoadedBundle> load_bundle(const BundlePaths& paths, double alpha, bool reveal_ground_truth);
// Same checks for already-built parts; dataset digest check skipped when
// `predictor_dataset_digest` is empty.
std::unique_ptr<LoadedBundle> make_bundle(CausalModel model, Circuit circuit, PredictorParams predictor,
                                          std::optional<Dataset> dataset, const std::string& predictor_dataset_digest,
                                          double alpha, bool reveal_ground_truth);

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

using QueryParams = std::map<std::string, std::string>;

HttpResult handle_model(const LoadedBundle& bundle);
HttpResult handle_instances(const LoadedBundle& bundle, const QueryParams& params);
HttpResult handle_predict(const LoadedBundle& bundle, std::string_view body);
HttpResult handle_suggest(const LoadedBundle& bundle, const QueryParams& params);

// Routes one request; unknown paths give 404.
HttpResult dispatch(const LoadedBundle& bundle, std::string_view method, std::string_view path,
                    const QueryParams& params, std::string_view body);

// HTTP front end over dispatch(). listen() blocks; stop() may be called from
// another thread.
class ServiceServer {
 public:
  explicit ServiceServer(const LoadedBundle& bundle);
  ~ServiceServer();
  ServiceServer(const ServiceServer&) = delete;
  ServiceServer& operator=(const ServiceServer&) = delete;

  // port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  void listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocks serving HTTP on host:port.
void serve(const LoadedBundle& bundle, const std::string& host, int port);

}  // namespace cnpc

#endif  // CNPC_SERVICE_HPP_
