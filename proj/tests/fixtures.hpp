#pragma once

#include <random>
#include <vector>

#include "svcsel/catalog.hpp"
#include "svcsel/datagen.hpp"
#include "svcsel/rng.hpp"
#include "svcsel/scoring.hpp"

namespace fixtures {

using namespace svcsel;

inline datagen::CohortSpec small_spec(std::size_t patients, std::size_t services,
                                      std::size_t characteristics, std::uint64_t seed) {
  datagen::CohortSpec s;
  s.n_patients = patients;
  s.n_services = services;
  s.n_characteristics = characteristics;
  s.mean_plan_size = std::min(8.0, services / 3.0);
  s.seed = seed;
  return s;
}

inline Cohort small_cohort(std::size_t patients, std::size_t services, std::size_t characteristics,
                           std::uint64_t seed) {
  const auto spec = small_spec(patients, services, characteristics, seed);
  return datagen::sample_cohort(datagen::generate_ground_truth(spec), spec);
}

/// Ensemble with `members` members over random predictors of the cohort's
/// candidate universe; coefficients uniform in [-scale, scale].
inline EnsembleModel random_model(const Cohort& cohort, std::uint64_t seed, std::size_t members = 3,
                                  std::size_t terms = 12, double scale = 1.5) {
  Rng rng(seed);
  const auto universe = enumerate_candidates(cohort.catalog, cohort.characteristic_names);
  std::uniform_int_distribution<std::size_t> pick(0, universe.size() - 1);
  std::uniform_real_distribution<double> coef(-scale, scale);
  EnsembleModel m;
  for (std::size_t k = 0; k < members; ++k) {
    glm::LogisticModel lm;
    lm.intercept = coef(rng) - 1.0;
    for (std::size_t t = 0; t < terms; ++t) {
      const auto& p = universe[pick(rng)];
      double c = coef(rng);
      // Keep age terms on the scale of the indicator terms.
      if (p.kind == PredictorKind::kServiceCharacteristic && p.characteristic() == "age") c /= 75.0;
      lm.coefficients[p.id] = c;
      m.predictors[p.id] = p;
    }
    lm.coefficients[kLosTerm] = 0.01 * coef(rng);
    m.members.push_back(lm);
  }
  m.metadata.seed = seed;
  return m;
}

/// Every plan of size 0..max_size over `services` services.
inline std::vector<std::vector<ServiceId>> all_plans(std::size_t services, std::size_t max_size) {
  std::vector<std::vector<ServiceId>> out{{}};
  std::vector<std::vector<ServiceId>> level{{}};
  for (std::size_t k = 1; k <= max_size; ++k) {
    std::vector<std::vector<ServiceId>> next;
    for (const auto& p : level) {
      const std::size_t from = p.empty() ? 0 : p.back().index() + 1;
      for (std::size_t s = from; s < services; ++s) {
        auto q = p;
        q.push_back(ServiceId(s));
        next.push_back(q);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    level = std::move(next);
  }
  return out;
}

}  // namespace fixtures
