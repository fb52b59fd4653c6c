#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcsel/catalog.hpp"
#include "svcsel/glm.hpp"

namespace svcsel::propensity {

/// P(service used | characteristics). Degenerate services (used by everyone
/// or no one) carry no model and contribute a factor of 1 to every weight.
struct PropensityModel {
  ServiceId service;
  bool degenerate = false;
  bool separation = false;
  double marginal_rate = 0.0;
  double intercept = 0.0;
  /// Slope per characteristic name.
  std::map<std::string, double> slopes;

  double predict(const PatientRecord& patient) const;
};

PropensityModel fit_propensity(const Cohort& cohort, ServiceId service,
                               const glm::FitConfig& cfg = {});

/// One model per catalog service.
std::vector<PropensityModel> fit_all(const Cohort& cohort, const glm::FitConfig& cfg = {});

struct ClipBounds {
  double lo = 0.05;
  double hi = 20.0;
};

/// Stabilized inverse-probability factor for one service, clipped to the
/// bounds: marginal / propensity for users, (1 - marginal) / (1 - propensity)
/// for non-users.
double stabilized_factor(bool used, double marginal_rate, double propensity, ClipBounds clip);

struct CohortWeights {
  /// Aligned with the cohort's patient order.
  std::vector<std::string> patient_ids;
  std::vector<double> weights;
  ClipBounds clip;
  bool stabilized = true;
  /// Product weights are rescaled to mean 1; this records the factor applied.
  double normalization = 1.0;
  std::vector<std::string> degenerate_services;

  double weight_of(std::string_view patient_id) const;
  /// Weights for the given patients, in order.
  std::vector<double> select(std::span<const PatientRecord> patients) const;
};

/// Throws std::invalid_argument on bad clip bounds and std::runtime_error,
/// naming the service, when a propensity is not finite.
CohortWeights compute_weights(const Cohort& cohort, std::span<const PropensityModel> models,
                              ClipBounds clip = {});

/// Unit weights, for fitting without de-biasing.
CohortWeights uniform_weights(const Cohort& cohort);

/// (mean among users - mean among non-users) / pooled SD, optionally weighted.
double standardized_difference(const Cohort& cohort, std::span<const double> weights,
                               ServiceId service, const std::string& characteristic);

nlohmann::json weights_to_json(const CohortWeights& w);
CohortWeights weights_from_json(const nlohmann::json& j);

}  // namespace svcsel::propensity
