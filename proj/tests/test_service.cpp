#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "cnpc/circuit.hpp"
#include "cnpc/data_gen.hpp"
#include "cnpc/error.hpp"
#include "cnpc/evaluation.hpp"
#include "cnpc/service.hpp"

// after Eigen: the resolver headers pulled in here define _res
#include <httplib.h>

using namespace cnpc;
using nlohmann::json;

namespace {

struct Fixture {
  Dataset dataset;
  PredictorParams predictor;
  std::unique_ptr<LoadedBundle> bundle;
  std::unique_ptr<LoadedBundle> revealing;

  Fixture() {
    DatasetConfig dc;
    dc.n = 300;
    dc.seed = 9;
    dc.embed.epochs = 4;
    dataset = make_dataset(mnistadd_syn(), dc);
    TrainConfig tc;
    tc.epochs = 5;
    tc.hidden_dim = 16;
    predictor = train_predictor(dataset, tc).params;
    bundle = build(false);
    revealing = build(true);
  }

  std::unique_ptr<LoadedBundle> build(bool reveal) const {
    CausalModel model = mnistadd_syn();
    Circuit circuit = compile(model, minfill_order(model));
    return make_bundle(model, circuit, predictor, dataset, dataset.base_digest, 0.9, reveal);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

HttpResult predict(const LoadedBundle& b, const json& request) { return dispatch(b, "POST", "/predict", {}, request.dump()); }

double total(const json& dist) {
  double s = 0.0;
  for (const auto& v : dist) s += v.get<double>();
  return s;
}

}  // namespace

TEST_CASE("bundle cross-checks") {
  Fixture& f = fixture();
  CausalModel model = mnistadd_syn();
  Circuit circuit = compile(model, minfill_order(model));
  CHECK_THROWS_AS(make_bundle(model, circuit, f.predictor, f.dataset, "0000", 0.9, false), ValidationError);
  PredictorParams narrow = init_predictor(3, 4, {"A1", "A2"}, {10, 10}, 1);
  CHECK_THROWS_AS(make_bundle(model, circuit, narrow, f.dataset, "", 0.9, false), ValidationError);
  CHECK_NOTHROW(make_bundle(model, circuit, f.predictor, std::nullopt, "", 0.9, false));
}

TEST_CASE("model endpoint") {
  HttpResult r = dispatch(*fixture().bundle, "GET", "/model", {}, "");
  CHECK(r.status == 200);
  CHECK(r.body["class"] == "Y");
  CHECK(r.body["variables"].size() == 3);
  CHECK(r.body["depth_order"] == json::array({"A1", "A2"}));
  CHECK(r.body["default_alpha"] == 0.9);
  CHECK(dispatch(*fixture().bundle, "GET", "/nothing", {}, "").status == 404);
  CHECK(dispatch(*fixture().bundle, "DELETE", "/model", {}, "").status == 404);
}

TEST_CASE("instances endpoint") {
  Fixture& f = fixture();
  HttpResult r = dispatch(*f.bundle, "GET", "/instances", {{"limit", "5"}, {"offset", "2"}}, "");
  CHECK(r.status == 200);
  CHECK(r.body["split"] == "test");
  CHECK(r.body["total"] == f.dataset.splits.test.size());
  REQUIRE(r.body["instances"].size() == 5);
  CHECK(r.body["instances"][0]["id"] == f.dataset.splits.test[2]);
  CHECK_FALSE(r.body["instances"][0].contains("labels"));

  HttpResult shown = dispatch(*f.revealing, "GET", "/instances", {{"split", "train"}, {"limit", "1"}}, "");
  const std::size_t row = f.dataset.splits.train[0];
  CHECK(shown.body["instances"][0]["labels"]["Y"] == std::to_string(f.dataset.class_label(row)));

  CHECK(dispatch(*f.bundle, "GET", "/instances", {{"split", "dev"}}, "").status == 400);
  CHECK(dispatch(*f.bundle, "GET", "/instances", {{"limit", "-1"}}, "").status == 400);
  CHECK(dispatch(*f.bundle, "GET", "/instances", {{"offset", "100000"}}, "").body["instances"].empty());

  CausalModel model = mnistadd_syn();
  auto bare = make_bundle(model, compile(model, minfill_order(model)), f.predictor, std::nullopt, "", 0.9, false);
  CHECK(dispatch(*bare, "GET", "/instances", {}, "").status == 404);
  CHECK(predict(*bare, {{"instance_id", 0}}).status == 404);
}

TEST_CASE("predict validation") {
  const LoadedBundle& b = *fixture().bundle;
  CHECK(dispatch(b, "POST", "/predict", {}, "{nope").status == 400);
  CHECK(predict(b, json::array()).status == 400);
  CHECK(predict(b, {{"instance_id", "3"}}).status == 400);
  CHECK(predict(b, {{"instance_id", 100000}}).status == 404);
  CHECK(predict(b, {{"instance_id", -1}}).status == 404);
  CHECK(predict(b, {{"instance_id", 0}, {"alpha", 1.5}}).status == 422);
  CHECK(predict(b, {{"instance_id", 0}, {"alpha", "high"}}).status == 422);
  auto with = [](json interventions) { return json{{"instance_id", 0}, {"interventions", interventions}}; };
  CHECK(predict(b, with({{{"attribute", "A9"}, {"value", "1"}}})).status == 400);
  CHECK(predict(b, with({{{"attribute", "Y"}, {"value", "1"}}})).status == 400);
  CHECK(predict(b, with({{{"attribute", "A1"}, {"value", "10"}}})).status == 400);
  CHECK(predict(b, with({{{"attribute", "A1"}, {"value", 10}}})).status == 400);
  CHECK(predict(b, with({{{"attribute", "A1"}, {"value", 1}}, {{"attribute", "A1"}, {"value", 2}}})).status == 400);
  CHECK(predict(b, with(json{{"A1", 1}})).status == 400);
  CHECK(predict(b, with({{{"attribute", "A1"}}})).status == 400);
}

TEST_CASE("predict responses") {
  Fixture& f = fixture();
  const LoadedBundle& b = *f.bundle;
  const std::size_t id = f.dataset.splits.test[0];

  HttpResult plain = predict(b, {{"instance_id", id}});
  REQUIRE(plain.status == 200);
  CHECK(plain.body["alpha"] == 0.9);
  CHECK(plain.body["corruption"] == "none");
  CHECK(plain.body["npc"]["class_distribution"] == plain.body["cnpc"]["class_distribution"]);
  CHECK(total(plain.body["npc"]["class_distribution"]) == doctest::Approx(1.0));
  CHECK(total(plain.body["neural"]["A1"]) == doctest::Approx(1.0));
  CHECK(plain.body["npc"]["class_distribution"].size() == 19);

  json full = {{"instance_id", id},
               {"alpha", 0.3},
               {"interventions", {{{"attribute", "A1"}, {"value", "2"}}, {{"attribute", "A2"}, {"value", 5}}}}};
  HttpResult r = predict(b, full);
  REQUIRE(r.status == 200);
  CHECK(r.body["alpha"] == 0.3);
  CHECK(r.body["interventions"].size() == 2);
  CHECK(r.body["interventions"][1]["value"] == "5");
  for (const char* variant : {"npc", "cnpc"}) {
    CHECK(r.body[variant]["predicted_class"] == "7");
    CHECK(r.body[variant]["class_distribution"][7].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.body[variant]["predicted_attributes"]["A1"] == "2");
  }
  CHECK(r.body["poe_marginals"]["A2"][5].get<double>() == doctest::Approx(1.0).epsilon(1e-12));

  json one = {{"instance_id", id}, {"interventions", {{{"attribute", "A1"}, {"value", "4"}}}}};
  HttpResult partial = predict(b, one);
  CHECK(total(partial.body["cnpc"]["class_distribution"]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(partial.body["z_alpha"].get<double>() <= 1.0 + 1e-12);
  // Requests are independent: repeating one gives identical bytes.
  predict(b, full);
  CHECK(predict(b, one).body.dump() == partial.body.dump());
}

TEST_CASE("suggest endpoint") {
  const LoadedBundle& b = *fixture().bundle;
  CHECK(dispatch(b, "GET", "/suggest", {}, "").body["suggestion"] == "A1");
  CHECK(dispatch(b, "GET", "/suggest", {{"already", "A1"}}, "").body["suggestion"] == "A2");
  CHECK(dispatch(b, "GET", "/suggest", {{"already", "[\"A2\"]"}}, "").body["suggestion"] == "A1");
  CHECK(dispatch(b, "GET", "/suggest", {{"already", "A1,A2"}}, "").body["suggestion"].is_null());
  CHECK(dispatch(b, "GET", "/suggest", {{"already", "Y"}}, "").status == 400);
  CHECK(dispatch(b, "GET", "/suggest", {{"already", "[1"}}, "").status == 400);
}

TEST_CASE("http server round trip") {
  Fixture& f = fixture();
  ServiceServer server(*f.bundle);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread worker([&server] { server.listen_after_bind(); });
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 100 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));

  auto model = client.Get("/model");
  REQUIRE(model);
  CHECK(model->status == 200);
  CHECK(json::parse(model->body)["class"] == "Y");

  auto suggest = client.Get("/suggest?already=A1");
  REQUIRE(suggest);
  CHECK(json::parse(suggest->body)["suggestion"] == "A2");

  json request = {{"instance_id", f.dataset.splits.test[1]}, {"interventions", {{{"attribute", "A1"}, {"value", "3"}}}}};
  auto res = client.Post("/predict", request.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body) == predict(*f.bundle, request).body);

  auto bad = client.Post("/predict", "{\"instance_id\": 0, \"alpha\": 2}", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 422);
  CHECK(json::parse(bad->body).contains("error"));

  server.stop();
  worker.join();
}
