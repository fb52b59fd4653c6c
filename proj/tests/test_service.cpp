#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "svcsel/service.hpp"

#include <httplib.h>

using namespace svcsel;
using namespace svcsel::service;

namespace {

const Api& api() {
  static const Api instance = [] {
    auto cohort = fixtures::small_cohort(60, 12, 5, 51);
    auto model = fixtures::random_model(cohort, 52);
    ServiceOptions opts;
    opts.max_budget = 5000;
    return Api(std::move(model), std::move(cohort), opts);
  }();
  return instance;
}

// Real server on an ephemeral port for the lifetime of one test.
struct LiveServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  LiveServer() {
    mount(server, api());
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("catalog and patient listing") {
  const auto cat = api().catalog();
  CHECK(cat.status == 200);
  CHECK(cat.body.at("services").size() == 12);
  const auto list = api().patients();
  CHECK(list.body.at("patients").size() == 60);

  const auto& p = api().cohort().patients[7];
  const auto one = api().patient(p.id);
  CHECK(one.status == 200);
  CHECK(one.body.at("risk").get<double>() == score_risk(api().model(), p, p.observed_plan));
  CHECK(one.body.at("plan").size() == p.observed_plan.size());

  const auto missing = api().patient("NOPE");
  CHECK(missing.status == 404);
  CHECK(missing.body.contains("error"));
}

TEST_CASE("score endpoint") {
  const auto& p = api().cohort().patients[3];
  const auto observed = plan_codes(p.observed_plan, api().cohort().catalog);
  const auto r = api().score({{"patient_id", p.id}, {"plan", observed}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("risk").get<double>() == api().patient(p.id).body.at("risk").get<double>());
  CHECK(r.body.at("reward").get<double>() == 1.0 - r.body.at("risk").get<double>());

  const auto empty = api().score({{"patient_id", p.id}, {"plan", nlohmann::json::array()}});
  CHECK(empty.body.at("risk").get<double>() == score_risk(api().model(), p, CarePlan{}));

  const auto bad = api().score({{"patient_id", p.id}, {"plan", {"CANE", "XYZ", "QQQ"}}});
  CHECK(bad.status == 422);
  CHECK(bad.body.at("invalid_codes") == nlohmann::json({"XYZ", "QQQ"}));

  CHECK(api().score({{"patient_id", "NOPE"}, {"plan", nlohmann::json::array()}}).status == 404);
  CHECK(api().score({{"plan", nlohmann::json::array()}}).status == 400);
}

TEST_CASE("recommend endpoint matches the library search") {
  const auto& p = api().cohort().patients[9];
  const nlohmann::json req{{"patient_id", p.id}, {"mode", "ph_and_time"}, {"budget", 2000},
                           {"plan_size", 4}, {"seed", 17}, {"pins", {"CANE"}}};
  const auto a = api().recommend(req);
  INFO(a.body.dump());
  REQUIRE(a.status == 200);
  CHECK(api().recommend(req).body == a.body);
  const auto plan = a.body.at("plan").get<std::vector<std::string>>();
  CHECK(std::find(plan.begin(), plan.end(), "CANE") != plan.end());
  CHECK(a.body.at("risk_reduction").get<double>() ==
        doctest::Approx(100.0 * (a.body.at("initial_risk").get<double>() - a.body.at("risk").get<double>()))
            .epsilon(1e-12));

  const auto cfg = recommend_config(req, api().cohort().catalog, {});
  const auto direct = search::run_search(api().model(), p, 12, cfg);
  CHECK(search::result_to_json(direct, api().cohort().catalog) == a.body);
}

TEST_CASE("recommend rejects bad requests") {
  const auto& id = api().cohort().patients[0].id;
  CHECK(api().recommend({{"patient_id", id}, {"budget", 999999}}).status == 422);
  CHECK(api().recommend({{"patient_id", id}, {"budget", 100}, {"mode", "greedy"}}).status == 422);
  CHECK(api().recommend({{"patient_id", id}}).status == 422);
  const auto pins = api().recommend({{"patient_id", id}, {"budget", 100}, {"pins", {"ZZZ"}}});
  CHECK(pins.status == 422);
  CHECK(pins.body.at("invalid_codes") == nlohmann::json({"ZZZ"}));
  CHECK(api().recommend({{"patient_id", id}, {"budget", 100}, {"plan_size", 99}}).status == 422);
}

TEST_CASE("HTTP round trips") {
  LiveServer live;
  httplib::Client client("127.0.0.1", live.port);
  const auto cat = client.Get("/catalog");
  REQUIRE(cat);
  CHECK(cat->status == 200);
  CHECK(nlohmann::json::parse(cat->body).at("services").size() == 12);

  const auto& p = api().cohort().patients[2];
  const auto one = client.Get("/patients/" + p.id);
  REQUIRE(one);
  CHECK(one->status == 200);
  CHECK(client.Get("/patients/NOPE")->status == 404);

  const nlohmann::json score_req{{"patient_id", p.id},
                                 {"plan", plan_codes(p.observed_plan, api().cohort().catalog)}};
  const auto score = client.Post("/score", score_req.dump(), "application/json");
  REQUIRE(score);
  CHECK(score->status == 200);
  CHECK(score->body == score_body(score_risk(api().model(), p, p.observed_plan)).dump());

  const auto malformed = client.Post("/score", "{not json", "application/json");
  CHECK(malformed->status == 400);

  const nlohmann::json rec{{"patient_id", p.id}, {"budget", 1000}, {"plan_size", 3}, {"seed", 4}};
  const auto first = client.Post("/recommend", rec.dump(), "application/json");
  REQUIRE(first);
  CHECK(first->status == 200);
  CHECK(client.Post("/recommend", rec.dump(), "application/json")->body == first->body);
}

TEST_CASE("concurrent recommendations do not share search state") {
  LiveServer live;
  const auto& patients = api().cohort().patients;
  std::vector<std::string> expected(8), got(8);
  for (std::size_t i = 0; i < 8; ++i) {
    const nlohmann::json rec{{"patient_id", patients[i].id}, {"budget", 1500}, {"plan_size", 4}, {"seed", i}};
    expected[i] = api().recommend(rec).body.dump();
  }
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < 8; ++i)
    threads.emplace_back([&, i] {
      httplib::Client client("127.0.0.1", live.port);
      const nlohmann::json rec{{"patient_id", patients[i].id}, {"budget", 1500}, {"plan_size", 4}, {"seed", i}};
      if (auto r = client.Post("/recommend", rec.dump(), "application/json")) got[i] = r->body;
    });
  for (auto& t : threads) t.join();
  CHECK(got == expected);
}
