#include "svcsel/scoring.hpp"

#include <array>

#include <cmath>
#include <fstream>
#include <sstream>

#include "svcsel/datagen.hpp"

namespace svcsel {

std::size_t EnsembleModel::coefficient_count() const {
  std::size_t n = 0;
  for (const auto& m : members) n += m.coefficients.size();
  return n;
}

std::vector<Predictor> EnsembleModel::predictor_list() const {
  std::vector<Predictor> out;
  out.reserve(predictors.size());
  for (const auto& [id, p] : predictors) out.push_back(p);
  return out;
}

void check_integrity(const EnsembleModel& model) {
  if (model.members.empty()) throw ModelIntegrityError("ensemble has no members");
  for (std::size_t m = 0; m < model.members.size(); ++m) {
    const auto& member = model.members[m];
    if (!std::isfinite(member.intercept))
      throw ModelIntegrityError("member " + std::to_string(m) + ": non-finite intercept");
    for (const auto& [id, coef] : member.coefficients) {
      if (!std::isfinite(coef))
        throw ModelIntegrityError("member " + std::to_string(m) + ": non-finite coefficient");
      if (id != kLosTerm && !model.predictors.contains(id))
        throw ModelIntegrityError("member " + std::to_string(m) + ": predictor id " +
                                  std::to_string(id) + " not in dictionary");
    }
  }
  for (const auto& [id, p] : model.predictors)
    if (p.id != id) throw ModelIntegrityError("predictor dictionary key/id mismatch");
}

double score_risk(const EnsembleModel& model, const PatientRecord& patient, const CarePlan& plan) {
  check_integrity(model);
  const auto predictors = model.predictor_list();
  const auto x = featurize(patient, plan, predictors);
  double total = 0.0;
  for (const auto& m : model.members) total += glm::predict_risk(m, x);
  return total / static_cast<double>(model.members.size());
}

double reward(const EnsembleModel& model, const PatientRecord& patient, const CarePlan& plan) {
  return 1.0 - score_risk(model, patient, plan);
}

// ---- serialization -------------------------------------------------------

namespace {

nlohmann::json predictor_to_json(const Predictor& p, const ServiceCatalog& catalog) {
  nlohmann::json j;
  j["left"] = p.left.index();
  if (p.kind == PredictorKind::kServiceService) {
    j["kind"] = "service_service";
    j["right"] = p.right_service().index();
  } else {
    j["kind"] = "service_characteristic";
    j["right"] = p.characteristic();
  }
  j["label"] = predictor_label(p, catalog);
  return j;
}

Predictor predictor_from_json(int id, const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const ServiceId left(j.at("left").get<std::size_t>());
  if (kind == "service_service") {
    const ServiceId right(j.at("right").get<std::size_t>());
    if (!(left < right)) throw ModelIntegrityError("predictor " + std::to_string(id) +
                                                   ": service pair not in canonical order");
    return make_service_service(id, left, right);
  }
  if (kind == "service_characteristic")
    return make_service_characteristic(id, left, j.at("right").get<std::string>());
  throw ModelIntegrityError("predictor " + std::to_string(id) + ": unknown kind '" + kind + "'");
}

std::string term_key(int term) { return term == kLosTerm ? "los" : std::to_string(term); }

int term_from_key(const std::string& key) {
  if (key == "los") return kLosTerm;
  std::size_t used = 0;
  const int id = std::stoi(key, &used);
  if (used != key.size() || id < 0) throw std::invalid_argument("bad coefficient key " + key);
  return id;
}

}  // namespace

nlohmann::json model_to_json(const EnsembleModel& model, const ServiceCatalog& catalog) {
  check_integrity(model);
  auto members = nlohmann::json::array();
  for (const auto& m : model.members) {
    nlohmann::json coefs = nlohmann::json::object();
    for (const auto& [term, v] : m.coefficients) coefs[term_key(term)] = v;
    members.push_back({{"intercept", m.intercept}, {"coefs", coefs}});
  }
  nlohmann::json predictors = nlohmann::json::object();
  for (const auto& [id, p] : model.predictors)
    predictors[std::to_string(id)] = predictor_to_json(p, catalog);
  auto trace = nlohmann::json::array();
  for (const auto& t : model.metadata.trace)
    trace.push_back({{"iteration", t.iteration},
                     {"groups", t.groups},
                     {"features_per_group", t.features_per_group},
                     {"pruned", t.pruned},
                     {"remaining", t.remaining}});
  nlohmann::json metadata = {{"seed", model.metadata.seed},
                             {"alpha", model.metadata.alpha},
                             {"screened_predictors", model.metadata.screened_predictors},
                             {"trace", trace},
                             {"training_auc", model.metadata.training_auc},
                             {"training_ids", model.metadata.training_ids},
                             {"coefficient_count", model.coefficient_count()},
                             {"catalog_size", catalog.size()}};
  return {{"version", kModelSchemaVersion},
          {"members", members},
          {"predictors", predictors},
          {"metadata", metadata}};
}

EnsembleModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version"))
    throw SchemaError("model file has no schema version");
  const int version = j.at("version").is_number_integer() ? j.at("version").get<int>() : -1;
  if (version != kModelSchemaVersion)
    throw SchemaError("model schema version " + j.at("version").dump() + " does not match " +
                      std::to_string(kModelSchemaVersion));
  EnsembleModel model;
  try {
    for (const auto& [key, value] : j.at("predictors").items()) {
      const int id = term_from_key(key);
      model.predictors.emplace(id, predictor_from_json(id, value));
    }
  } catch (const ModelIntegrityError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelIntegrityError(std::string("predictor dictionary: ") + e.what());
  }
  const auto& members = j.at("members");
  for (std::size_t m = 0; m < members.size(); ++m) {
    try {
      glm::LogisticModel member;
      member.intercept = members[m].at("intercept").get<double>();
      for (const auto& [key, value] : members[m].at("coefs").items())
        member.coefficients[term_from_key(key)] = value.get<double>();
      model.members.push_back(std::move(member));
    } catch (const std::exception& e) {
      throw ModelIntegrityError("member " + std::to_string(m) + ": " + e.what());
    }
  }
  try {
    const auto& meta = j.at("metadata");
    model.metadata.seed = meta.value("seed", std::uint64_t{0});
    model.metadata.alpha = meta.value("alpha", 0.05);
    model.metadata.screened_predictors = meta.value("screened_predictors", std::size_t{0});
    model.metadata.training_auc = meta.value("training_auc", 0.0);
    model.metadata.training_ids = meta.value("training_ids", std::vector<std::string>{});
    for (const auto& t : meta.value("trace", nlohmann::json::array()))
      model.metadata.trace.push_back({t.at("iteration").get<int>(), t.at("groups").get<std::size_t>(),
                                      t.at("features_per_group").get<double>(),
                                      t.at("pruned").get<std::size_t>(),
                                      t.at("remaining").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw ModelIntegrityError(std::string("metadata: ") + e.what());
  }
  check_integrity(model);
  return model;
}

void save_model(const EnsembleModel& model, const ServiceCatalog& catalog,
                const std::filesystem::path& path) {
  datagen::write_json_file(path, model_to_json(model, catalog));
}

EnsembleModel load_model(const std::filesystem::path& path) {
  return model_from_json(datagen::read_json_file(path));
}

// ---- compiled scorer ----------------------------------------------------

CompiledScorer::CompiledScorer(const EnsembleModel& model, const PatientRecord& patient,
                               std::size_t catalog_size)
    : services_(catalog_size) {
  check_integrity(model);
  for (const auto& m : model.members) {
    Member c;
    c.base = m.intercept;
    c.single.assign(services_, 0.0);
    c.pair.assign(services_ * services_, 0.0);
    for (const auto& [term, coef] : m.coefficients) {
      if (term == kLosTerm) {
        c.base += coef * patient.los;
        continue;
      }
      const auto& p = model.predictors.at(term);
      if (p.left.index() >= services_)
        throw ModelIntegrityError("predictor references a service outside the catalog");
      if (p.kind == PredictorKind::kServiceService) {
        const auto a = p.left.index(), b = p.right_service().index();
        if (b >= services_)
          throw ModelIntegrityError("predictor references a service outside the catalog");
        c.pair[a * services_ + b] += coef;
        c.pair[b * services_ + a] += coef;
      } else {
        auto it = patient.characteristics.find(p.characteristic());
        if (it == patient.characteristics.end())
          throw SchemaError("patient " + patient.id + " has no characteristic '" +
                            p.characteristic() + "'");
        c.single[p.left.index()] += coef * it->second;
      }
    }
    members_.push_back(std::move(c));
  }
}

double CompiledScorer::risk(std::span<const ServiceId> unordered) const {
  // Sum in index order so a set scores the same whatever its insertion order.
  std::array<ServiceId, 64> buffer;
  std::vector<ServiceId> heap;
  std::span<ServiceId> services;
  if (unordered.size() <= buffer.size()) {
    services = std::span<ServiceId>(buffer.data(), unordered.size());
  } else {
    heap.resize(unordered.size());
    services = heap;
  }
  std::copy(unordered.begin(), unordered.end(), services.begin());
  std::sort(services.begin(), services.end());
  double total = 0.0;
  for (const auto& m : members_) {
    double eta = m.base;
    for (std::size_t a = 0; a < services.size(); ++a) {
      const std::size_t sa = services[a].index();
      eta += m.single[sa];
      const double* row = m.pair.data() + sa * services_;
      for (std::size_t b = a + 1; b < services.size(); ++b) eta += row[services[b].index()];
    }
    total += glm::clamped_sigmoid(eta);
  }
  return total / static_cast<double>(members_.size());
}

}  // namespace svcsel
