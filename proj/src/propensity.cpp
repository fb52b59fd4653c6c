#include "svcsel/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svcsel::propensity {

double PropensityModel::predict(const PatientRecord& patient) const {
  if (degenerate) return marginal_rate;
  double eta = intercept;
  for (const auto& [name, slope] : slopes) eta += slope * patient.characteristics.at(name);
  return glm::clamped_sigmoid(eta);
}

PropensityModel fit_propensity(const Cohort& cohort, ServiceId service,
                               const glm::FitConfig& cfg) {
  PropensityModel model;
  model.service = service;
  const auto n = cohort.patients.size();
  const auto& names = cohort.characteristic_names;
  std::vector<double> y(n), w(n, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  double users = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cohort.patients[i];
    y[i] = p.observed_plan.contains(service) ? 1.0 : 0.0;
    users += y[i];
    for (std::size_t c = 0; c < names.size(); ++c)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = p.characteristics.at(names[c]);
  }
  model.marginal_rate = n > 0 ? users / static_cast<double>(n) : 0.0;
  if (users == 0 || users == static_cast<double>(n)) {
    model.degenerate = true;
    return model;
  }
  const auto fit = glm::fit_weighted_logistic(x, y, w, cfg);
  model.separation = fit.diagnostics.separation;
  model.intercept = fit.coefficients[0];
  for (std::size_t c = 0; c < names.size(); ++c) model.slopes[names[c]] = fit.coefficients[c + 1];
  return model;
}

std::vector<PropensityModel> fit_all(const Cohort& cohort, const glm::FitConfig& cfg) {
  std::vector<PropensityModel> models;
  for (const auto& s : cohort.catalog.services()) models.push_back(fit_propensity(cohort, s.id, cfg));
  return models;
}

double stabilized_factor(bool used, double marginal_rate, double propensity, ClipBounds clip) {
  const double raw =
      used ? marginal_rate / propensity : (1.0 - marginal_rate) / (1.0 - propensity);
  return std::clamp(raw, clip.lo, clip.hi);
}

double CohortWeights::weight_of(std::string_view patient_id) const {
  for (std::size_t i = 0; i < patient_ids.size(); ++i)
    if (patient_ids[i] == patient_id) return weights[i];
  throw std::out_of_range("no weight for patient " + std::string(patient_id));
}

std::vector<double> CohortWeights::select(std::span<const PatientRecord> patients) const {
  std::map<std::string_view, double> index;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) index.emplace(patient_ids[i], weights[i]);
  std::vector<double> out;
  out.reserve(patients.size());
  for (const auto& p : patients) {
    auto it = index.find(p.id);
    if (it == index.end()) throw std::out_of_range("no weight for patient " + p.id);
    out.push_back(it->second);
  }
  return out;
}

CohortWeights compute_weights(const Cohort& cohort, std::span<const PropensityModel> models,
                              ClipBounds clip) {
  if (!(clip.lo > 0.0 && clip.lo < clip.hi && std::isfinite(clip.hi)))
    throw std::invalid_argument("clip bounds must satisfy 0 < lo < hi");
  CohortWeights out;
  out.clip = clip;
  const auto n = cohort.patients.size();
  out.patient_ids.reserve(n);
  std::vector<double> log_weight(n, 0.0);
  for (const auto& m : models) {
    if (m.degenerate) {
      out.degenerate_services.push_back(cohort.catalog.code(m.service));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = cohort.patients[i];
      const double e = m.predict(p);
      if (!std::isfinite(e))
        throw std::runtime_error("non-finite propensity for service " +
                                 cohort.catalog.code(m.service));
      log_weight[i] +=
          std::log(stabilized_factor(p.observed_plan.contains(m.service), m.marginal_rate, e, clip));
    }
  }
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.patient_ids.push_back(cohort.patients[i].id);
    out.weights[i] = std::exp(log_weight[i]);
  }
  const double mean =
      n > 0 ? std::accumulate(out.weights.begin(), out.weights.end(), 0.0) / static_cast<double>(n)
            : 1.0;
  out.normalization = 1.0 / mean;
  for (auto& w : out.weights) w *= out.normalization;
  return out;
}

CohortWeights uniform_weights(const Cohort& cohort) {
  CohortWeights out;
  out.stabilized = false;
  for (const auto& p : cohort.patients) {
    out.patient_ids.push_back(p.id);
    out.weights.push_back(1.0);
  }
  return out;
}

double standardized_difference(const Cohort& cohort, std::span<const double> weights,
                               ServiceId service, const std::string& characteristic) {
  double sw[2] = {0, 0}, sx[2] = {0, 0}, sxx[2] = {0, 0};
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    const auto& p = cohort.patients[i];
    const int g = p.observed_plan.contains(service) ? 1 : 0;
    const double w = weights.empty() ? 1.0 : weights[i];
    const double x = p.characteristics.at(characteristic);
    sw[g] += w;
    sx[g] += w * x;
    sxx[g] += w * x * x;
  }
  if (sw[0] == 0 || sw[1] == 0) return 0.0;
  double mean[2], var[2];
  for (int g = 0; g < 2; ++g) {
    mean[g] = sx[g] / sw[g];
    var[g] = std::max(0.0, sxx[g] / sw[g] - mean[g] * mean[g]);
  }
  const double pooled = std::sqrt(0.5 * (var[0] + var[1]));
  return pooled > 0 ? (mean[1] - mean[0]) / pooled : 0.0;
}

nlohmann::json weights_to_json(const CohortWeights& w) {
  nlohmann::json weights = nlohmann::json::object();
  for (std::size_t i = 0; i < w.patient_ids.size(); ++i) weights[w.patient_ids[i]] = w.weights[i];
  return {{"version", 1},
          {"clip", {w.clip.lo, w.clip.hi}},
          {"stabilized", w.stabilized},
          {"normalization", w.normalization},
          {"degenerate_services", w.degenerate_services},
          {"weights", weights}};
}

CohortWeights weights_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw SchemaError("unsupported weights file version");
    CohortWeights w;
    const auto clip = j.at("clip").get<std::vector<double>>();
    if (clip.size() != 2) throw SchemaError("clip must have two entries");
    w.clip = {clip[0], clip[1]};
    w.stabilized = j.at("stabilized").get<bool>();
    w.normalization = j.at("normalization").get<double>();
    w.degenerate_services = j.at("degenerate_services").get<std::vector<std::string>>();
    for (const auto& [id, v] : j.at("weights").items()) {
      const double value = v.get<double>();
      if (!(value > 0.0) || !std::isfinite(value))
        throw SchemaError("weight for " + id + " is not positive and finite");
      w.patient_ids.push_back(id);
      w.weights.push_back(value);
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(e.what());
  }
}

}  // namespace svcsel::propensity
