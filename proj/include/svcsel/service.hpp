#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "svcsel/catalog.hpp"
#include "svcsel/scoring.hpp"
#include "svcsel/search.hpp"

namespace httplib {
class Server;
}

namespace svcsel::service {

struct ServiceOptions {
  /// Largest simulation count a /recommend request may ask for.
  std::uint64_t max_budget = 200'000;
  std::size_t max_plan_size = 16;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// {risk, reward}; shared with the CLI so both print identical bytes.
nlohmann::json score_body(double risk);

/// Request handlers over an immutable model and cohort. All methods are
/// const and safe to call concurrently.
class Api {
 public:
  Api(EnsembleModel model, Cohort cohort, ServiceOptions options = {});

  Response catalog() const;
  Response patients() const;
  Response patient(std::string_view id) const;
  Response score(const nlohmann::json& request) const;
  Response recommend(const nlohmann::json& request) const;

  const EnsembleModel& model() const { return model_; }
  const Cohort& cohort() const { return cohort_; }

 private:
  nlohmann::json patient_json(std::size_t index) const;
  const PatientRecord* lookup(const nlohmann::json& request, Response& error) const;

  EnsembleModel model_;
  Cohort cohort_;
  ServiceOptions options_;
  std::vector<double> initial_risk_;
};

/// Parses the request fields of POST /recommend into a search config. Throws
/// std::invalid_argument with a client-facing message.
search::SearchConfig recommend_config(const nlohmann::json& request, const ServiceCatalog& catalog,
                                      const ServiceOptions& options);

/// Registers the routes on `server`. `api` must outlive the server.
void mount(httplib::Server& server, const Api& api);

}  // namespace svcsel::service
