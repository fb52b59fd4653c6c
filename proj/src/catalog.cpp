#include "svcsel/catalog.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <set>

namespace svcsel {

ServiceCatalog::ServiceCatalog(std::vector<Service> services) : services_(std::move(services)) {
  if (services_.size() < 2) throw SchemaError("catalog needs at least two services");
  if (services_.size() > 0xFFFF) throw SchemaError("catalog too large");
  for (std::size_t i = 0; i < services_.size(); ++i) {
    const auto& s = services_[i];
    if (s.id.index() != i)
      throw SchemaError("catalog index " + std::to_string(s.id.index()) + " at position " +
                        std::to_string(i) + " is not contiguous");
    if (s.code.empty()) throw SchemaError("empty service code at index " + std::to_string(i));
    if (!by_code_.emplace(s.code, s.id).second)
      throw SchemaError("duplicate service code '" + s.code + "'");
  }
}

const Service& ServiceCatalog::at(ServiceId id) const {
  if (id.index() >= services_.size())
    throw SchemaError("service index " + std::to_string(id.index()) + " outside catalog");
  return services_[id.index()];
}

std::optional<ServiceId> ServiceCatalog::find(std::string_view code) const {
  auto it = by_code_.find(code);
  if (it == by_code_.end()) return std::nullopt;
  return it->second;
}

ServiceCatalog make_default_catalog(std::size_t n) {
  // Named services, grouped by category index into kServiceCategories.
  static const std::pair<const char*, int> kNamed[] = {
      {"CANE", 0},          {"GRAB_BARS", 0},     {"WALKER", 0},        {"MOTOR_CART", 0},
      {"BED_COMM", 0},      {"SHOWER_CHAIR", 0},  {"HOSPITAL_BED", 0},  {"WHEELCHAIR", 0},
      {"IV_PUMP", 1},       {"OXYGEN", 1},        {"APNEA", 1},         {"GLUCOSE", 1},
      {"NURSING", 1},       {"WOUND_CARE", 1},    {"CATHETER", 1},      {"NEBULIZER", 1},
      {"DEVICE_TRAINING", 2}, {"SAFETY_TRAINING", 2}, {"AGENCY_MONITOR", 2},
      {"TRANSPORT", 3},     {"MEALS", 3},         {"VOLUNTEERS", 3},    {"ADL_ASSIST", 3},
      {"HOMEMAKER", 3},     {"PHYSICAL_THERAPY", 4}, {"SPEECH_THERAPY", 4},
      {"OCCUPATIONAL_THERAPY", 4}, {"RESPIRATORY_THERAPY", 4},
      {"DIETARY", 5},       {"ETHICS", 5},        {"SPIRITUAL", 5},     {"SOCIAL_WORK", 5},
      {"BEREAVEMENT", 6},   {"MED_MANAGEMENT", 6}, {"RESPITE", 6},      {"CAREGIVER_TRAINING", 6},
  };
  constexpr std::size_t kNamedCount = std::size(kNamed);
  constexpr std::size_t kCategoryCount = std::size(kServiceCategories);

  std::vector<Service> out;
  out.reserve(n);
  std::vector<int> per_category(kCategoryCount, 0);
  for (std::size_t i = 0; i < n; ++i) {
    Service s;
    s.id = ServiceId(i);
    if (i < kNamedCount) {
      s.code = kNamed[i].first;
      s.category = kServiceCategories[kNamed[i].second];
    } else {
      const std::size_t cat = (i - kNamedCount) % kCategoryCount;
      s.category = kServiceCategories[cat];
      s.code = "SVC_" + std::to_string(cat) + "_" + std::to_string(++per_category[cat]);
    }
    out.push_back(std::move(s));
  }
  return ServiceCatalog(std::move(out));
}

CarePlan::CarePlan(std::vector<ServiceId> services) : services_(std::move(services)) {
  std::sort(services_.begin(), services_.end());
  if (std::adjacent_find(services_.begin(), services_.end()) != services_.end())
    throw SchemaError("care plan lists a service twice");
}

bool CarePlan::contains(ServiceId id) const {
  return std::binary_search(services_.begin(), services_.end(), id);
}

void CarePlan::insert(ServiceId id) {
  auto it = std::lower_bound(services_.begin(), services_.end(), id);
  if (it == services_.end() || *it != id) services_.insert(it, id);
}

void CarePlan::erase(ServiceId id) {
  auto it = std::lower_bound(services_.begin(), services_.end(), id);
  if (it != services_.end() && *it == id) services_.erase(it);
}

void validate_plan(const CarePlan& plan, const ServiceCatalog& catalog) {
  if (plan.size() > catalog.size()) throw SchemaError("plan larger than catalog");
  for (auto s : plan.services())
    if (s.index() >= catalog.size())
      throw SchemaError("plan references service index " + std::to_string(s.index()) +
                        " outside catalog");
}

CarePlan plan_from_codes(std::span<const std::string> codes, const ServiceCatalog& catalog) {
  std::vector<ServiceId> ids;
  std::vector<std::string> unknown;
  for (const auto& c : codes) {
    if (auto id = catalog.find(c))
      ids.push_back(*id);
    else
      unknown.push_back(c);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown service code(s):";
    for (const auto& u : unknown) msg += " " + u;
    throw SchemaError(msg);
  }
  return CarePlan(std::move(ids));
}

std::vector<std::string> plan_codes(const CarePlan& plan, const ServiceCatalog& catalog) {
  std::vector<std::string> out;
  out.reserve(plan.size());
  for (auto s : plan.services()) out.push_back(catalog.code(s));
  return out;
}

void validate_patient(const PatientRecord& patient, const ServiceCatalog& catalog) {
  if (!(patient.los >= 0.0) || !std::isfinite(patient.los))
    throw SchemaError("patient " + patient.id + ": LOS must be finite and nonnegative");
  for (const auto& [name, value] : patient.characteristics)
    if (!std::isfinite(value))
      throw SchemaError("patient " + patient.id + ": characteristic '" + name + "' is not finite");
  if (patient.observed_outcome != 0 && patient.observed_outcome != 1)
    throw SchemaError("patient " + patient.id + ": outcome must be 0 or 1");
  validate_plan(patient.observed_plan, catalog);
}

Predictor make_service_service(int id, ServiceId a, ServiceId b) {
  if (a == b) throw SchemaError("service interaction with itself");
  if (b < a) std::swap(a, b);
  return Predictor{id, PredictorKind::kServiceService, a, b};
}

Predictor make_service_characteristic(int id, ServiceId service, std::string characteristic) {
  if (characteristic.empty()) throw SchemaError("empty characteristic name");
  return Predictor{id, PredictorKind::kServiceCharacteristic, service, std::move(characteristic)};
}

std::string predictor_label(const Predictor& p, const ServiceCatalog& catalog) {
  if (p.kind == PredictorKind::kServiceService)
    return catalog.code(p.left) + ":" + catalog.code(p.right_service());
  return catalog.code(p.left) + ":" + p.characteristic();
}

std::vector<Predictor> enumerate_candidates(const ServiceCatalog& catalog,
                                            std::span<const std::string> characteristic_names) {
  std::vector<Predictor> out;
  const std::size_t s = catalog.size();
  out.reserve(s * (s - 1) / 2 + s * characteristic_names.size());
  int id = 0;
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = a + 1; b < s; ++b)
      out.push_back(make_service_service(id++, ServiceId(a), ServiceId(b)));
  for (std::size_t a = 0; a < s; ++a)
    for (const auto& c : characteristic_names)
      out.push_back(make_service_characteristic(id++, ServiceId(a), c));
  return out;
}

double evaluate_predictor(const Predictor& p, const PatientRecord& patient, const CarePlan& plan) {
  if (p.kind == PredictorKind::kServiceService)
    return plan.contains(p.left) && plan.contains(p.right_service()) ? 1.0 : 0.0;
  auto it = patient.characteristics.find(p.characteristic());
  if (it == patient.characteristics.end())
    throw SchemaError("patient " + patient.id + " has no characteristic '" + p.characteristic() +
                      "'");
  return plan.contains(p.left) ? it->second : 0.0;
}

FeatureVector featurize(const PatientRecord& patient, const CarePlan& plan,
                        std::span<const Predictor> predictors) {
  int max_id = -1;
  for (const auto& p : predictors) max_id = std::max(max_id, p.id);
  FeatureVector fv;
  fv.values.assign(static_cast<std::size_t>(max_id + 1), 0.0);
  fv.los = patient.los;
  for (const auto& p : predictors)
    fv.values[static_cast<std::size_t>(p.id)] = evaluate_predictor(p, patient, plan);
  return fv;
}

PlanSpaceSize plan_space_size(unsigned services, unsigned plan_size) {
  using boost::multiprecision::cpp_int;
  if (plan_size > services) throw std::invalid_argument("plan size exceeds service count");
  cpp_int ordered = 1;
  for (unsigned i = 0; i < plan_size; ++i) ordered *= services - i;
  cpp_int k_factorial = 1;
  for (unsigned i = 2; i <= plan_size; ++i) k_factorial *= i;
  const cpp_int combinations = ordered / k_factorial;
  return {combinations.str(), ordered.str()};
}

}  // namespace svcsel

namespace svcsel {

const PatientRecord* Cohort::find(std::string_view id) const {
  for (const auto& p : patients)
    if (p.id == id) return &p;
  return nullptr;
}

void validate_cohort(const Cohort& cohort) {
  std::set<std::string_view> ids;
  for (const auto& p : cohort.patients) {
    validate_patient(p, cohort.catalog);
    if (!ids.insert(p.id).second) throw SchemaError("duplicate patient id '" + p.id + "'");
    if (p.characteristics.size() != cohort.characteristic_names.size())
      throw SchemaError("patient " + p.id + " has an incomplete characteristic set");
    for (const auto& name : cohort.characteristic_names)
      if (!p.characteristics.contains(name))
        throw SchemaError("patient " + p.id + " lacks characteristic '" + name + "'");
  }
}

}  // namespace svcsel
