#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace svcsel {

/// Raised when a record, predictor or file does not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stable index of a service inside a ServiceCatalog.
struct ServiceId {
  std::uint16_t value = 0;

  constexpr ServiceId() = default;
  constexpr explicit ServiceId(std::size_t v) : value(static_cast<std::uint16_t>(v)) {}
  constexpr std::size_t index() const { return value; }
  constexpr auto operator<=>(const ServiceId&) const = default;
};

/// The seven service categories used to label catalog entries.
inline constexpr const char* kServiceCategories[] = {
    "Assistive",      "Medical",     "Agency provided", "Personal care",
    "Therapy",        "Counselling", "Services provided to family"};

struct Service {
  ServiceId id;
  std::string code;
  std::string category;

  bool operator==(const Service&) const = default;
};

class ServiceCatalog {
 public:
  ServiceCatalog() = default;
  /// Validates contiguous indices, unique codes and at least two services.
  explicit ServiceCatalog(std::vector<Service> services);

  std::size_t size() const { return services_.size(); }
  const std::vector<Service>& services() const { return services_; }
  const Service& at(ServiceId id) const;
  const std::string& code(ServiceId id) const { return at(id).code; }
  std::optional<ServiceId> find(std::string_view code) const;

  bool operator==(const ServiceCatalog&) const = default;

 private:
  std::vector<Service> services_;
  std::map<std::string, ServiceId, std::less<>> by_code_;
};

/// Catalog of `n` services. The first entries carry recognizable codes
/// (cane, oxygen, ...); the rest are numbered per category.
ServiceCatalog make_default_catalog(std::size_t n = 69);

/// A set of services. Always stored in ascending index order, so two plans
/// built from different insertion orders compare equal.
class CarePlan {
 public:
  CarePlan() = default;
  /// Throws SchemaError on duplicates.
  explicit CarePlan(std::vector<ServiceId> services);

  const std::vector<ServiceId>& services() const { return services_; }
  std::size_t size() const { return services_.size(); }
  bool empty() const { return services_.empty(); }
  bool contains(ServiceId id) const;
  /// No-op if already present.
  void insert(ServiceId id);
  void erase(ServiceId id);

  bool operator==(const CarePlan&) const = default;
  auto operator<=>(const CarePlan&) const = default;

 private:
  std::vector<ServiceId> services_;
};

/// Throws SchemaError if any service is outside the catalog.
void validate_plan(const CarePlan& plan, const ServiceCatalog& catalog);
CarePlan plan_from_codes(std::span<const std::string> codes, const ServiceCatalog& catalog);
std::vector<std::string> plan_codes(const CarePlan& plan, const ServiceCatalog& catalog);

struct PatientRecord {
  std::string id;
  std::map<std::string, double, std::less<>> characteristics;
  double los = 0.0;
  CarePlan observed_plan;
  int observed_outcome = 0;

  bool operator==(const PatientRecord&) const = default;
};

/// Throws SchemaError when LOS is negative, a characteristic is non-finite,
/// the outcome is not binary, or the observed plan is out of catalog.
void validate_patient(const PatientRecord& patient, const ServiceCatalog& catalog);

enum class PredictorKind { kServiceService, kServiceCharacteristic };

/// Interaction term: two services, or one service and one characteristic.
struct Predictor {
  int id = 0;
  PredictorKind kind = PredictorKind::kServiceService;
  ServiceId left;
  std::variant<ServiceId, std::string> right;

  ServiceId right_service() const { return std::get<ServiceId>(right); }
  const std::string& characteristic() const { return std::get<std::string>(right); }
  bool operator==(const Predictor&) const = default;
};

Predictor make_service_service(int id, ServiceId a, ServiceId b);
Predictor make_service_characteristic(int id, ServiceId service, std::string characteristic);

/// Human-readable label, e.g. "CANE:GRAB_BARS" or "CANE:age".
std::string predictor_label(const Predictor& p, const ServiceCatalog& catalog);

/// Every admissible interaction, with dense ids: all service pairs (a < b) in
/// lexicographic order, then service-major service x characteristic terms.
std::vector<Predictor> enumerate_candidates(const ServiceCatalog& catalog,
                                            std::span<const std::string> characteristic_names);

/// Slot index used for the LOS main effect in coefficient maps.
inline constexpr int kLosTerm = -1;

/// Predictor values indexed by predictor id, plus the dedicated LOS slot.
struct FeatureVector {
  std::vector<double> values;
  double los = 0.0;

  double at(int term) const {
    return term == kLosTerm ? los : values.at(static_cast<std::size_t>(term));
  }
  bool operator==(const FeatureVector&) const = default;
};

double evaluate_predictor(const Predictor& p, const PatientRecord& patient, const CarePlan& plan);

/// Slots of ids not in `predictors` are zero. The vector is sized to the
/// largest id + 1.
FeatureVector featurize(const PatientRecord& patient, const CarePlan& plan,
                        std::span<const Predictor> predictors);

/// A catalog plus the patients recorded against it. Every patient carries the
/// same characteristic names.
struct Cohort {
  ServiceCatalog catalog;
  std::vector<std::string> characteristic_names;
  std::vector<PatientRecord> patients;

  const PatientRecord* find(std::string_view id) const;
  bool operator==(const Cohort&) const = default;
};

/// Checks every patient against the catalog and the shared characteristic set.
void validate_cohort(const Cohort& cohort);

/// Exact big-integer counts of size-k subsets and ordered k-sequences of S
/// services, as decimal strings.
struct PlanSpaceSize {
  std::string combinations;
  std::string ordered_leaves;
};
PlanSpaceSize plan_space_size(unsigned services, unsigned plan_size);

}  // namespace svcsel
