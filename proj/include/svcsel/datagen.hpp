#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include "json.hpp"
#include <string>
#include <vector>

#include "svcsel/catalog.hpp"

namespace svcsel::datagen {

struct CohortSpec {
  std::size_t n_patients = 4683;
  std::size_t n_services = 69;
  /// Includes the continuous "age" characteristic; the rest are binary
  /// diagnosis indicators.
  std::size_t n_characteristics = 30;
  double mean_plan_size = 8.0;
  /// Scale of the characteristic-dependent part of the service assignment
  /// logits; 0 gives assignment independent of characteristics.
  double bias_strength = 1.0;
  double base_rate = 0.2;
  /// Fraction of each predictor kind that carries a true coefficient.
  double service_service_density = 0.05;
  double service_characteristic_density = 0.03;
  double effect_scale = 1.0;
  std::uint64_t seed = 1;
};

/// Throws std::invalid_argument on an inconsistent spec.
void validate_spec(const CohortSpec& spec);

struct CharacteristicSpec {
  std::string name;
  bool binary = true;
  /// Bernoulli rate for binary characteristics.
  double prevalence = 0.0;
  // Continuous characteristics: truncated normal.
  double mean = 0.0;
  double sd = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const CharacteristicSpec&) const = default;
};

struct GroundTruth {
  ServiceCatalog catalog;
  std::vector<CharacteristicSpec> characteristics;
  // Outcome model: logit = intercept + sum coef * predictor + los_coefficient * los.
  double intercept = 0.0;
  std::map<int, double> coefficients;
  double los_coefficient = 0.0;
  // Assignment model: logit_s = service_offset[s] + bias * sum_c weight[s][c] * z_c,
  // with z_c the standardized characteristic.
  std::vector<double> service_offsets;
  std::vector<std::vector<double>> assignment_weights;
  double bias_strength = 0.0;
  // log LOS ~ N(los_log_mean + los_risk_shift * standardized interaction logit, los_log_sd)
  double los_log_mean = 0.0;
  double los_log_sd = 0.0;
  double los_risk_shift = 0.0;
  double interaction_logit_mean = 0.0;
  double interaction_logit_sd = 1.0;
  std::uint64_t seed = 0;

  std::vector<std::string> characteristic_names() const;
  /// The full candidate predictor universe the coefficient ids refer to.
  std::vector<Predictor> predictor_universe() const;
  bool operator==(const GroundTruth&) const = default;
};

GroundTruth generate_ground_truth(const CohortSpec& spec);

/// True risk of a (patient, plan) pair; always in (0, 1).
double true_risk(const GroundTruth& truth, const PatientRecord& patient, const CarePlan& plan);

/// Evaluates true_risk quickly for one patient across many plans.
class TruthEvaluator {
 public:
  TruthEvaluator(const GroundTruth& truth, const PatientRecord& patient);
  double risk(const CarePlan& plan) const;

 private:
  double base_ = 0.0;
  std::vector<double> single_;
  std::vector<double> pair_;  // dense S x S, upper triangle used
  std::size_t services_ = 0;
};

Cohort sample_cohort(const GroundTruth& truth, const CohortSpec& spec);

nlohmann::json spec_to_json(const CohortSpec& spec);
CohortSpec spec_from_json(const nlohmann::json& j);

nlohmann::json cohort_to_json(const Cohort& cohort);
Cohort cohort_from_json(const nlohmann::json& j);
nlohmann::json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);

/// Parses a JSON file; syntax errors are reported as SchemaError with the
/// line and column.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `j` with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

void export_cohort(const Cohort& cohort, const std::filesystem::path& path);
Cohort import_cohort(const std::filesystem::path& path);

}  // namespace svcsel::datagen
