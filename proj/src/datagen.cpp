#include "svcsel/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "svcsel/glm.hpp"
#include "svcsel/rng.hpp"

namespace svcsel::datagen {
namespace {

constexpr std::size_t kPilotSize = 4000;

double logistic(double x) { return glm::clamped_sigmoid(x); }

double standardized(const CharacteristicSpec& c, double value) {
  if (c.binary) return (value - c.prevalence) / std::sqrt(c.prevalence * (1.0 - c.prevalence));
  return (value - c.mean) / c.sd;
}

double draw_characteristic(const CharacteristicSpec& c, Rng& rng) {
  if (c.binary) return std::bernoulli_distribution(c.prevalence)(rng) ? 1.0 : 0.0;
  std::normal_distribution<double> normal(c.mean, c.sd);
  for (;;) {
    const double v = normal(rng);
    if (v >= c.lo && v <= c.hi) return std::round(v);
  }
}

std::vector<double> draw_characteristics(const GroundTruth& truth, Rng& rng) {
  std::vector<double> out;
  out.reserve(truth.characteristics.size());
  for (const auto& c : truth.characteristics) out.push_back(draw_characteristic(c, rng));
  return out;
}

double assignment_logit(const GroundTruth& truth, std::size_t service,
                        const std::vector<double>& chars) {
  double dot = 0.0;
  const auto& weights = truth.assignment_weights[service];
  for (std::size_t c = 0; c < chars.size(); ++c)
    dot += weights[c] * standardized(truth.characteristics[c], chars[c]);
  return truth.service_offsets[service] + truth.bias_strength * dot;
}

CarePlan draw_plan(const GroundTruth& truth, const std::vector<double>& chars, Rng& rng) {
  std::vector<ServiceId> services;
  for (std::size_t s = 0; s < truth.catalog.size(); ++s) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < logistic(assignment_logit(truth, s, chars))) services.push_back(ServiceId(s));
  }
  return CarePlan(std::move(services));
}

PatientRecord make_record(const GroundTruth& truth, std::string id,
                          const std::vector<double>& chars) {
  PatientRecord p;
  p.id = std::move(id);
  for (std::size_t c = 0; c < chars.size(); ++c)
    p.characteristics.emplace(truth.characteristics[c].name, chars[c]);
  return p;
}

// Logit contribution of the interaction terms only (no intercept, no LOS).
double interaction_logit(const GroundTruth& truth, const std::vector<Predictor>& universe,
                         const PatientRecord& patient, const CarePlan& plan) {
  double eta = 0.0;
  for (const auto& [id, coef] : truth.coefficients)
    eta += coef * evaluate_predictor(universe[static_cast<std::size_t>(id)], patient, plan);
  return eta;
}

double draw_los(const GroundTruth& truth, double interaction, Rng& rng) {
  const double z = (interaction - truth.interaction_logit_mean) / truth.interaction_logit_sd;
  std::normal_distribution<double> normal(truth.los_log_mean + truth.los_risk_shift * z,
                                          truth.los_log_sd);
  return std::round(std::exp(normal(rng)));
}

template <class F>
double bisect(F&& f, double target, double lo, double hi) {
  // f increasing.
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::string patient_id(std::size_t i) {
  std::ostringstream os;
  os << 'P' << std::setw(6) << std::setfill('0') << i + 1;
  return os.str();
}

}  // namespace

void validate_spec(const CohortSpec& spec) {
  if (spec.n_patients < 1) throw std::invalid_argument("n_patients must be >= 1");
  if (spec.n_services < 2) throw std::invalid_argument("n_services must be >= 2");
  if (spec.n_characteristics < 1) throw std::invalid_argument("n_characteristics must be >= 1");
  if (!(spec.mean_plan_size > 0.0) ||
      spec.mean_plan_size >= static_cast<double>(spec.n_services))
    throw std::invalid_argument("mean plan size must lie in (0, n_services)");
  if (spec.bias_strength < 0.0) throw std::invalid_argument("bias strength must be >= 0");
  if (!(spec.base_rate > 0.0 && spec.base_rate < 1.0))
    throw std::invalid_argument("base rate must lie in (0, 1)");
  for (double d : {spec.service_service_density, spec.service_characteristic_density})
    if (d < 0.0 || d > 1.0) throw std::invalid_argument("densities must lie in [0, 1]");
}

std::vector<std::string> GroundTruth::characteristic_names() const {
  std::vector<std::string> names;
  for (const auto& c : characteristics) names.push_back(c.name);
  return names;
}

std::vector<Predictor> GroundTruth::predictor_universe() const {
  return enumerate_candidates(catalog, characteristic_names());
}

GroundTruth generate_ground_truth(const CohortSpec& spec) {
  validate_spec(spec);
  Rng rng(derive_seed(spec.seed, {0x7275746855ULL}));
  GroundTruth truth;
  truth.seed = spec.seed;
  truth.bias_strength = spec.bias_strength;
  truth.catalog = make_default_catalog(spec.n_services);

  // Characteristic names sort so that "age" precedes the "dx" indicators.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  truth.characteristics.push_back({"age", false, 0.0, 75.0, 10.0, 40.0, 100.0});
  for (std::size_t c = 1; c < spec.n_characteristics; ++c) {
    std::ostringstream name;
    name << "dx" << std::setw(3) << std::setfill('0') << c;
    const double u = unit(rng);
    truth.characteristics.push_back({name.str(), true, 0.1 + 0.4 * u * u, 0, 0, 0, 0});
  }

  const std::size_t n_services = spec.n_services;
  const std::size_t n_chars = truth.characteristics.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  // Sicker patients (more diagnoses, older) tend to receive more services.
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_chars));
  truth.assignment_weights.assign(n_services, std::vector<double>(n_chars, 0.0));
  for (auto& row : truth.assignment_weights)
    for (auto& w : row) w = scale * (0.4 + normal(rng));
  truth.service_offsets.resize(n_services);
  for (auto& o : truth.service_offsets) o = 0.6 * normal(rng);

  // True outcome coefficients.
  const auto universe = truth.predictor_universe();
  const std::size_t n_pairs = n_services * (n_services - 1) / 2;
  std::vector<std::size_t> pair_ids(n_pairs), char_ids(universe.size() - n_pairs);
  std::iota(pair_ids.begin(), pair_ids.end(), 0);
  std::iota(char_ids.begin(), char_ids.end(), n_pairs);
  std::shuffle(pair_ids.begin(), pair_ids.end(), rng);
  std::shuffle(char_ids.begin(), char_ids.end(), rng);
  const auto pick = [](double density, std::size_t n) {
    return static_cast<std::size_t>(std::llround(density * static_cast<double>(n)));
  };
  pair_ids.resize(pick(spec.service_service_density, pair_ids.size()));
  char_ids.resize(pick(spec.service_characteristic_density, char_ids.size()));
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  for (auto id : pair_ids) {
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    truth.coefficients[static_cast<int>(id)] = sign * magnitude(rng) * spec.effect_scale;
  }
  for (auto id : char_ids) {
    const auto& p = universe[id];
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    double value = sign * magnitude(rng) * spec.effect_scale;
    if (p.characteristic() == "age") value /= 75.0;
    truth.coefficients[static_cast<int>(id)] = value;
  }

  truth.los_log_mean = std::log(20.0);
  truth.los_log_sd = 0.6;
  truth.los_risk_shift = 0.3;
  truth.los_coefficient = 0.015 * spec.effect_scale;

  // Calibrate against a pilot sample from an independent stream.
  Rng pilot_rng(derive_seed(spec.seed, {0x70696C6F74ULL}));
  std::vector<std::vector<double>> pilot(kPilotSize);
  for (auto& chars : pilot) chars = draw_characteristics(truth, pilot_rng);

  // Service offsets shift so the expected plan size matches the spec.
  std::vector<std::vector<double>> logits(kPilotSize, std::vector<double>(n_services));
  for (std::size_t i = 0; i < kPilotSize; ++i)
    for (std::size_t s = 0; s < n_services; ++s) logits[i][s] = assignment_logit(truth, s, pilot[i]);
  const double shift = bisect(
      [&](double delta) {
        double total = 0.0;
        for (const auto& row : logits)
          for (double l : row) total += logistic(l + delta);
        return total / kPilotSize;
      },
      spec.mean_plan_size, -30.0, 30.0);
  for (auto& o : truth.service_offsets) o += shift;

  std::vector<PatientRecord> records;
  std::vector<double> interactions;
  for (std::size_t i = 0; i < kPilotSize; ++i) {
    auto record = make_record(truth, "pilot", pilot[i]);
    record.observed_plan = draw_plan(truth, pilot[i], pilot_rng);
    interactions.push_back(interaction_logit(truth, universe, record, record.observed_plan));
    records.push_back(std::move(record));
  }
  const double mean =
      std::accumulate(interactions.begin(), interactions.end(), 0.0) / interactions.size();
  double var = 0.0;
  for (double v : interactions) var += (v - mean) * (v - mean);
  var /= interactions.size();
  truth.interaction_logit_mean = mean;
  truth.interaction_logit_sd = var > 1e-12 ? std::sqrt(var) : 1.0;

  std::vector<double> los_terms;
  for (std::size_t i = 0; i < kPilotSize; ++i)
    los_terms.push_back(truth.los_coefficient * draw_los(truth, interactions[i], pilot_rng));
  truth.intercept = bisect(
      [&](double b) {
        double total = 0.0;
        for (std::size_t i = 0; i < kPilotSize; ++i)
          total += logistic(b + interactions[i] + los_terms[i]);
        return total / kPilotSize;
      },
      spec.base_rate, -30.0, 30.0);
  return truth;
}

double true_risk(const GroundTruth& truth, const PatientRecord& patient, const CarePlan& plan) {
  const auto universe = truth.predictor_universe();
  return logistic(truth.intercept + interaction_logit(truth, universe, patient, plan) +
                  truth.los_coefficient * patient.los);
}

TruthEvaluator::TruthEvaluator(const GroundTruth& truth, const PatientRecord& patient)
    : single_(truth.catalog.size(), 0.0),
      pair_(truth.catalog.size() * truth.catalog.size(), 0.0),
      services_(truth.catalog.size()) {
  base_ = truth.intercept + truth.los_coefficient * patient.los;
  const auto universe = truth.predictor_universe();
  for (const auto& [id, coef] : truth.coefficients) {
    const auto& p = universe[static_cast<std::size_t>(id)];
    if (p.kind == PredictorKind::kServiceService) {
      pair_[p.left.index() * services_ + p.right_service().index()] += coef;
    } else {
      single_[p.left.index()] += coef * patient.characteristics.at(p.characteristic());
    }
  }
}

double TruthEvaluator::risk(const CarePlan& plan) const {
  double eta = base_;
  const auto& s = plan.services();
  for (std::size_t a = 0; a < s.size(); ++a) {
    eta += single_[s[a].index()];
    for (std::size_t b = a + 1; b < s.size(); ++b)
      eta += pair_[s[a].index() * services_ + s[b].index()];
  }
  return logistic(eta);
}

Cohort sample_cohort(const GroundTruth& truth, const CohortSpec& spec) {
  validate_spec(spec);
  if (spec.n_services != truth.catalog.size() ||
      spec.n_characteristics != truth.characteristics.size())
    throw std::invalid_argument("cohort spec does not match ground truth dimensions");
  Rng rng(derive_seed(spec.seed, {0x636F686F7274ULL}));
  const auto universe = truth.predictor_universe();
  Cohort cohort;
  cohort.catalog = truth.catalog;
  cohort.characteristic_names = truth.characteristic_names();
  cohort.patients.reserve(spec.n_patients);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < spec.n_patients; ++i) {
    const auto chars = draw_characteristics(truth, rng);
    auto record = make_record(truth, patient_id(i), chars);
    record.observed_plan = draw_plan(truth, chars, rng);
    const double interaction = interaction_logit(truth, universe, record, record.observed_plan);
    record.los = draw_los(truth, interaction, rng);
    const double risk =
        logistic(truth.intercept + interaction + truth.los_coefficient * record.los);
    record.observed_outcome = unit(rng) < risk ? 1 : 0;
    cohort.patients.push_back(std::move(record));
  }
  return cohort;
}

// ---- serialization -------------------------------------------------------

nlohmann::json spec_to_json(const CohortSpec& s) {
  return {{"n_patients", s.n_patients},
          {"n_services", s.n_services},
          {"n_characteristics", s.n_characteristics},
          {"mean_plan_size", s.mean_plan_size},
          {"bias_strength", s.bias_strength},
          {"base_rate", s.base_rate},
          {"service_service_density", s.service_service_density},
          {"service_characteristic_density", s.service_characteristic_density},
          {"effect_scale", s.effect_scale},
          {"seed", s.seed}};
}

CohortSpec spec_from_json(const nlohmann::json& j) {
  CohortSpec s;
  s.n_patients = j.value("n_patients", s.n_patients);
  s.n_services = j.value("n_services", s.n_services);
  s.n_characteristics = j.value("n_characteristics", s.n_characteristics);
  s.mean_plan_size = j.value("mean_plan_size", s.mean_plan_size);
  s.bias_strength = j.value("bias_strength", s.bias_strength);
  s.base_rate = j.value("base_rate", s.base_rate);
  s.service_service_density = j.value("service_service_density", s.service_service_density);
  s.service_characteristic_density =
      j.value("service_characteristic_density", s.service_characteristic_density);
  s.effect_scale = j.value("effect_scale", s.effect_scale);
  s.seed = j.value("seed", s.seed);
  validate_spec(s);
  return s;
}

namespace {

nlohmann::json catalog_to_json(const ServiceCatalog& catalog) {
  auto services = nlohmann::json::array();
  for (const auto& s : catalog.services())
    services.push_back({{"index", s.id.index()}, {"code", s.code}, {"category", s.category}});
  return {{"services", services}};
}

ServiceCatalog catalog_from_json(const nlohmann::json& j) {
  std::vector<Service> services;
  for (const auto& e : j.at("services")) {
    Service s;
    s.id = ServiceId(e.at("index").get<std::size_t>());
    s.code = e.at("code").get<std::string>();
    s.category = e.at("category").get<std::string>();
    services.push_back(std::move(s));
  }
  std::sort(services.begin(), services.end(),
            [](const Service& a, const Service& b) { return a.id < b.id; });
  return ServiceCatalog(std::move(services));
}

template <class F>
auto schema_guard(F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(e.what());
  }
}

}  // namespace

nlohmann::json cohort_to_json(const Cohort& cohort) {
  auto patients = nlohmann::json::array();
  for (const auto& p : cohort.patients) {
    nlohmann::json chars = nlohmann::json::object();
    for (const auto& [k, v] : p.characteristics) chars[k] = v;
    patients.push_back({{"id", p.id},
                        {"characteristics", chars},
                        {"los", p.los},
                        {"plan", plan_codes(p.observed_plan, cohort.catalog)},
                        {"outcome", p.observed_outcome}});
  }
  return {{"version", 1},
          {"catalog", catalog_to_json(cohort.catalog)},
          {"cohort", {{"patients", patients}}}};
}

Cohort cohort_from_json(const nlohmann::json& j) {
  return schema_guard([&] {
    if (j.contains("version") && j.at("version").get<int>() != 1)
      throw SchemaError("unsupported cohort file version");
    Cohort cohort;
    cohort.catalog = catalog_from_json(j.at("catalog"));
    for (const auto& e : j.at("cohort").at("patients")) {
      PatientRecord p;
      p.id = e.at("id").get<std::string>();
      for (const auto& [k, v] : e.at("characteristics").items())
        p.characteristics.emplace(k, v.get<double>());
      p.los = e.at("los").get<double>();
      const auto codes = e.at("plan").get<std::vector<std::string>>();
      p.observed_plan = plan_from_codes(codes, cohort.catalog);
      p.observed_outcome = e.at("outcome").get<int>();
      cohort.patients.push_back(std::move(p));
    }
    if (!cohort.patients.empty())
      for (const auto& [k, v] : cohort.patients.front().characteristics)
        cohort.characteristic_names.push_back(k);
    validate_cohort(cohort);
    return cohort;
  });
}

nlohmann::json truth_to_json(const GroundTruth& t) {
  auto chars = nlohmann::json::array();
  for (const auto& c : t.characteristics)
    chars.push_back({{"name", c.name},
                     {"binary", c.binary},
                     {"prevalence", c.prevalence},
                     {"mean", c.mean},
                     {"sd", c.sd},
                     {"lo", c.lo},
                     {"hi", c.hi}});
  nlohmann::json coefs = nlohmann::json::object();
  for (const auto& [id, v] : t.coefficients) coefs[std::to_string(id)] = v;
  return {{"version", 1},
          {"catalog", catalog_to_json(t.catalog)},
          {"characteristics", chars},
          {"intercept", t.intercept},
          {"coefficients", coefs},
          {"los_coefficient", t.los_coefficient},
          {"service_offsets", t.service_offsets},
          {"assignment_weights", t.assignment_weights},
          {"bias_strength", t.bias_strength},
          {"los_log_mean", t.los_log_mean},
          {"los_log_sd", t.los_log_sd},
          {"los_risk_shift", t.los_risk_shift},
          {"interaction_logit_mean", t.interaction_logit_mean},
          {"interaction_logit_sd", t.interaction_logit_sd},
          {"seed", t.seed}};
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  return schema_guard([&] {
    if (j.at("version").get<int>() != 1) throw SchemaError("unsupported truth file version");
    GroundTruth t;
    t.catalog = catalog_from_json(j.at("catalog"));
    for (const auto& c : j.at("characteristics"))
      t.characteristics.push_back({c.at("name").get<std::string>(), c.at("binary").get<bool>(),
                                   c.at("prevalence").get<double>(), c.at("mean").get<double>(),
                                   c.at("sd").get<double>(), c.at("lo").get<double>(),
                                   c.at("hi").get<double>()});
    t.intercept = j.at("intercept").get<double>();
    const auto universe_size = t.predictor_universe().size();
    for (const auto& [k, v] : j.at("coefficients").items()) {
      const int id = std::stoi(k);
      if (id < 0 || static_cast<std::size_t>(id) >= universe_size)
        throw SchemaError("truth coefficient id " + k + " outside the predictor universe");
      t.coefficients[id] = v.get<double>();
    }
    t.los_coefficient = j.at("los_coefficient").get<double>();
    t.service_offsets = j.at("service_offsets").get<std::vector<double>>();
    t.assignment_weights = j.at("assignment_weights").get<std::vector<std::vector<double>>>();
    t.bias_strength = j.at("bias_strength").get<double>();
    t.los_log_mean = j.at("los_log_mean").get<double>();
    t.los_log_sd = j.at("los_log_sd").get<double>();
    t.los_risk_shift = j.at("los_risk_shift").get<double>();
    t.interaction_logit_mean = j.at("interaction_logit_mean").get<double>();
    t.interaction_logit_sd = j.at("interaction_logit_sd").get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
  });
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw SchemaError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": malformed JSON (" + e.what() + ")");
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void export_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  write_json_file(path, cohort_to_json(cohort));
}

Cohort import_cohort(const std::filesystem::path& path) {
  return cohort_from_json(read_json_file(path));
}

}  // namespace svcsel::datagen
