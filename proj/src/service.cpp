#include "svcsel/service.hpp"

#include <httplib.h>

#include <iostream>

namespace svcsel::service {

namespace {

Response error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::vector<std::string> unknown_codes(const nlohmann::json& codes, const ServiceCatalog& catalog) {
  std::vector<std::string> bad;
  for (const auto& c : codes) {
    if (!c.is_string()) {
      bad.push_back(c.dump());
    } else if (!catalog.find(c.get<std::string>())) {
      bad.push_back(c.get<std::string>());
    }
  }
  return bad;
}

std::vector<std::string> as_codes(const nlohmann::json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + " must be an array of codes");
  std::vector<std::string> out;
  for (const auto& c : j) out.push_back(c.get<std::string>());
  return out;
}

}  // namespace

nlohmann::json score_body(double risk) { return {{"risk", risk}, {"reward", 1.0 - risk}}; }

Api::Api(EnsembleModel model, Cohort cohort, ServiceOptions options)
    : model_(std::move(model)), cohort_(std::move(cohort)), options_(options) {
  check_integrity(model_);
  validate_cohort(cohort_);
  for (const auto& [id, p] : model_.predictors) {
    const bool left_ok = p.left.index() < cohort_.catalog.size();
    const bool right_ok = p.kind != PredictorKind::kServiceService ||
                          p.right_service().index() < cohort_.catalog.size();
    if (!left_ok || !right_ok)
      throw ModelIntegrityError("predictor " + std::to_string(id) +
                                " references a service outside the cohort catalog");
  }
  for (const auto& p : cohort_.patients)
    initial_risk_.push_back(score_risk(model_, p, p.observed_plan));
}

nlohmann::json Api::patient_json(std::size_t index) const {
  const auto& p = cohort_.patients[index];
  return {{"id", p.id},
          {"characteristics", p.characteristics},
          {"los", p.los},
          {"plan", plan_codes(p.observed_plan, cohort_.catalog)},
          {"outcome", p.observed_outcome},
          {"risk", initial_risk_[index]}};
}

Response Api::catalog() const {
  auto services = nlohmann::json::array();
  for (const auto& s : cohort_.catalog.services())
    services.push_back({{"index", s.id.index()}, {"code", s.code}, {"category", s.category}});
  return {200, {{"services", services}}};
}

Response Api::patients() const {
  auto list = nlohmann::json::array();
  for (std::size_t i = 0; i < cohort_.patients.size(); ++i) list.push_back(patient_json(i));
  return {200, {{"patients", list}}};
}

Response Api::patient(std::string_view id) const {
  const PatientRecord* p = cohort_.find(id);
  if (!p) return error(404, "unknown patient " + std::string(id));
  return {200, patient_json(static_cast<std::size_t>(p - cohort_.patients.data()))};
}

const PatientRecord* Api::lookup(const nlohmann::json& request, Response& err) const {
  if (!request.is_object() || !request.contains("patient_id") ||
      !request["patient_id"].is_string()) {
    err = error(400, "patient_id (string) is required");
    return nullptr;
  }
  const auto id = request["patient_id"].get<std::string>();
  const PatientRecord* p = cohort_.find(id);
  if (!p) err = error(404, "unknown patient " + id);
  return p;
}

Response Api::score(const nlohmann::json& request) const {
  Response err;
  const PatientRecord* p = lookup(request, err);
  if (!p) return err;
  if (!request.contains("plan") || !request["plan"].is_array())
    return error(400, "plan must be an array of service codes");
  const auto bad = unknown_codes(request["plan"], cohort_.catalog);
  if (!bad.empty()) return {422, {{"error", "unknown service codes"}, {"invalid_codes", bad}}};
  CarePlan plan;
  try {
    const auto codes = as_codes(request["plan"], "plan");
    plan = plan_from_codes(codes, cohort_.catalog);
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  return {200, score_body(score_risk(model_, *p, plan))};
}

search::SearchConfig recommend_config(const nlohmann::json& request, const ServiceCatalog& catalog,
                                      const ServiceOptions& options) {
  search::SearchConfig cfg;
  cfg.mode = search::parse_mode(request.value("mode", std::string("ph_and_time")));
  if (!request.contains("budget") || !request["budget"].is_number_integer() ||
      request["budget"].get<std::int64_t>() < 0)
    throw std::invalid_argument("budget must be a non-negative simulation count");
  const auto budget = request["budget"].get<std::uint64_t>();
  if (budget > options.max_budget)
    throw std::invalid_argument("budget " + std::to_string(budget) + " exceeds the server cap of " +
                                std::to_string(options.max_budget) +
                                " simulations; use the CLI for longer searches");
  cfg.budget = search::SimulationBudget{budget};
  const auto plan_size = request.value("plan_size", std::size_t{8});
  if (plan_size > options.max_plan_size)
    throw std::invalid_argument("plan_size exceeds the server cap of " +
                                std::to_string(options.max_plan_size));
  cfg.max_plan_size = plan_size;
  cfg.seed = request.value("seed", std::uint64_t{1});
  if (request.contains("pins")) {
    const auto codes = as_codes(request["pins"], "pins");
    for (const auto& c : codes) cfg.pinned.push_back(*catalog.find(c));
  }
  search::validate(cfg, catalog.size());
  return cfg;
}

Response Api::recommend(const nlohmann::json& request) const {
  Response err;
  const PatientRecord* p = lookup(request, err);
  if (!p) return err;
  if (request.contains("pins")) {
    if (!request["pins"].is_array()) return error(400, "pins must be an array of service codes");
    const auto bad = unknown_codes(request["pins"], cohort_.catalog);
    if (!bad.empty()) return {422, {{"error", "unknown service codes"}, {"invalid_codes", bad}}};
  }
  search::SearchConfig cfg;
  try {
    cfg = recommend_config(request, cohort_.catalog, options_);
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  const auto result = search::run_search(model_, *p, cohort_.catalog.size(), cfg);
  return {200, search::result_to_json(result, cohort_.catalog)};
}

void mount(httplib::Server& server, const Api& api) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto with_body = [send](const httplib::Request& req, httplib::Response& res, auto&& handler) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      send(res, error(400, std::string("malformed JSON: ") + e.what()));
      return;
    }
    try {
      send(res, handler(body));
    } catch (const nlohmann::json::exception& e) {
      send(res, error(400, e.what()));
    }
  };
  server.Get("/catalog", [&api, send](const httplib::Request&, httplib::Response& res) {
    send(res, api.catalog());
  });
  server.Get("/patients", [&api, send](const httplib::Request&, httplib::Response& res) {
    send(res, api.patients());
  });
  server.Get(R"(/patients/([^/]+))", [&api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api.patient(req.matches[1].str()));
  });
  server.Post("/score", [&api, with_body](const httplib::Request& req, httplib::Response& res) {
    with_body(req, res, [&](const nlohmann::json& b) { return api.score(b); });
  });
  server.Post("/recommend", [&api, with_body](const httplib::Request& req, httplib::Response& res) {
    with_body(req, res, [&](const nlohmann::json& b) { return api.recommend(b); });
  });
  server.set_exception_handler([send](const httplib::Request& req, httplib::Response& res,
                                      std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    std::cerr << req.method << ' ' << req.path << ": " << what << '\n';
    send(res, error(500, what));
  });
}

}  // namespace svcsel::service
