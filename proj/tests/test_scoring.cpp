#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "svcsel/scoring.hpp"

using namespace svcsel;

namespace {

CarePlan random_plan(Rng& rng, std::size_t services, std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size(0, max_size), svc(0, services - 1);
  CarePlan plan;
  const auto k = size(rng);
  while (plan.size() < k) plan.insert(ServiceId(svc(rng)));
  return plan;
}

}  // namespace

TEST_CASE("risk is the mean of member risks and reward its complement") {
  const auto cohort = fixtures::small_cohort(50, 12, 5, 1);
  const auto model = fixtures::random_model(cohort, 2);
  const auto& p = cohort.patients[0];
  const auto preds = model.predictor_list();
  const auto x = featurize(p, p.observed_plan, preds);
  double sum = 0.0;
  for (const auto& m : model.members) sum += glm::predict_risk(m, x);
  const double risk = score_risk(model, p, p.observed_plan);
  CHECK(risk == doctest::Approx(sum / 3.0).epsilon(1e-15));
  CHECK(reward(model, p, p.observed_plan) == 1.0 - risk);
  // Empty plan: only intercepts and LOS contribute.
  double base = 0.0;
  for (const auto& m : model.members)
    base += glm::clamped_sigmoid(m.intercept + m.coefficients.at(kLosTerm) * p.los);
  CHECK(score_risk(model, p, CarePlan{}) == doctest::Approx(base / 3.0).epsilon(1e-14));
}

TEST_CASE("compiled scorer agrees with the reference scorer") {
  const auto cohort = fixtures::small_cohort(60, 15, 6, 3);
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto model = fixtures::random_model(cohort, seed, 4, 25);
    for (const auto& p : cohort.patients) {
      const CompiledScorer fast(model, p, cohort.catalog.size());
      for (int k = 0; k < 5; ++k) {
        const auto plan = random_plan(rng, cohort.catalog.size(), 8);
        const double r = score_risk(model, p, plan);
        CHECK(std::abs(fast.risk(plan) - r) <= 1e-12);
        CHECK(r > 0.0);
        CHECK(r < 1.0);
      }
    }
  }
}

TEST_CASE("model files round-trip to the last bit") {
  const auto cohort = fixtures::small_cohort(80, 12, 5, 5);
  auto model = fixtures::random_model(cohort, 6);
  model.metadata.trace = {{0, 4, 50.0 / 3.0, 7, 20}};
  model.metadata.training_ids = {cohort.patients[0].id};
  model.metadata.training_auc = 0.1 + 0.2;
  const auto path = std::filesystem::temp_directory_path() / "svcsel_model_test.json";
  save_model(model, cohort.catalog, path);
  const auto back = load_model(path);
  CHECK(back == model);
  Rng rng(1);
  for (const auto& p : cohort.patients) {
    const auto plan = random_plan(rng, cohort.catalog.size(), 6);
    const double a = score_risk(model, p, plan), b = score_risk(back, p, plan);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
}

TEST_CASE("corrupt models are rejected") {
  const auto cohort = fixtures::small_cohort(30, 10, 4, 7);
  const auto model = fixtures::random_model(cohort, 8);
  auto j = model_to_json(model, cohort.catalog);
  auto wrong_version = j;
  wrong_version["version"] = 99;
  CHECK_THROWS_AS(model_from_json(wrong_version), SchemaError);

  auto missing = j;
  // A coefficient that no dictionary entry defines.
  missing["members"][1]["coefs"]["123456"] = 0.5;
  try {
    (void)model_from_json(missing);
    FAIL("expected ModelIntegrityError");
  } catch (const ModelIntegrityError& e) {
    CHECK(std::string(e.what()).find("member 1") != std::string::npos);
  }

  EnsembleModel empty;
  CHECK_THROWS_AS(check_integrity(empty), ModelIntegrityError);
}
