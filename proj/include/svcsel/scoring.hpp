#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcsel/catalog.hpp"
#include "svcsel/glm.hpp"

namespace svcsel {

class ModelIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row of the grouping trace: groups n_i, features per group f_i and
/// predictors pruned p_i in iteration i.
struct IterationTrace {
  int iteration = 0;
  std::size_t groups = 0;
  double features_per_group = 0.0;
  std::size_t pruned = 0;
  std::size_t remaining = 0;

  bool operator==(const IterationTrace&) const = default;
};

struct EnsembleMetadata {
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::size_t screened_predictors = 0;
  std::vector<IterationTrace> trace;
  double training_auc = 0.0;
  /// Patients the model was fitted on; evaluation sets must avoid them.
  std::vector<std::string> training_ids;

  bool operator==(const EnsembleMetadata&) const = default;
};

/// Averaged set of logistic models over interaction predictors.
struct EnsembleModel {
  std::vector<glm::LogisticModel> members;
  /// Every predictor referenced by a member, keyed by id.
  std::map<int, Predictor> predictors;
  EnsembleMetadata metadata;

  /// Sum of member coefficient counts (LOS included).
  std::size_t coefficient_count() const;
  std::vector<Predictor> predictor_list() const;
  bool operator==(const EnsembleModel&) const = default;
};

/// Throws ModelIntegrityError if there are no members or a coefficient id is
/// missing from the dictionary.
void check_integrity(const EnsembleModel& model);

/// Mean of the member risks on featurize(patient, plan).
double score_risk(const EnsembleModel& model, const PatientRecord& patient, const CarePlan& plan);

/// 1 - risk: 1 is "no risk of emergent care".
double reward(const EnsembleModel& model, const PatientRecord& patient, const CarePlan& plan);

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json model_to_json(const EnsembleModel& model, const ServiceCatalog& catalog);
/// Throws ModelIntegrityError (naming the member index for bad members) or
/// SchemaError on version mismatch.
EnsembleModel model_from_json(const nlohmann::json& j);
void save_model(const EnsembleModel& model, const ServiceCatalog& catalog,
                const std::filesystem::path& path);
EnsembleModel load_model(const std::filesystem::path& path);

/// Per-patient precomputation of the ensemble: each member's logit becomes
/// base + sum over plan services of a per-service term + sum over plan pairs
/// of a pair term. Used by search in its inner loop.
class CompiledScorer {
 public:
  CompiledScorer(const EnsembleModel& model, const PatientRecord& patient,
                 std::size_t catalog_size);

  /// `services` must be duplicate-free; order does not matter.
  double risk(std::span<const ServiceId> services) const;
  double risk(const CarePlan& plan) const { return risk(plan.services()); }
  std::size_t catalog_size() const { return services_; }

 private:
  struct Member {
    double base = 0.0;
    std::vector<double> single;
    std::vector<double> pair;  // S x S, symmetric
  };
  std::vector<Member> members_;
  std::size_t services_ = 0;
};

}  // namespace svcsel
