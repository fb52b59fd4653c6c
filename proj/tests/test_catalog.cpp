#include <cstdint>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "svcsel/catalog.hpp"

using namespace svcsel;

TEST_CASE("default catalog has unique codes and contiguous ids") {
  const auto cat = make_default_catalog();
  CHECK(cat.size() == 69);
  std::set<std::string> codes;
  for (std::size_t i = 0; i < cat.size(); ++i) {
    CHECK(cat.services()[i].id.index() == i);
    codes.insert(cat.services()[i].code);
  }
  CHECK(codes.size() == 69);
  REQUIRE(cat.find("CANE"));
  CHECK(cat.code(*cat.find("CANE")) == "CANE");
  CHECK_FALSE(cat.find("NOPE"));
}

TEST_CASE("catalog rejects duplicate codes and tiny catalogs") {
  std::vector<Service> dup{{ServiceId(0), "A", "x"}, {ServiceId(1), "A", "x"}};
  CHECK_THROWS_AS(ServiceCatalog{dup}, SchemaError);
  std::vector<Service> one{{ServiceId(0), "A", "x"}};
  CHECK_THROWS_AS(ServiceCatalog{one}, SchemaError);
  std::vector<Service> gap{{ServiceId(0), "A", "x"}, {ServiceId(2), "B", "x"}};
  CHECK_THROWS_AS(ServiceCatalog{gap}, SchemaError);
}

TEST_CASE("care plans are order-insensitive sets") {
  const CarePlan a({ServiceId(3), ServiceId(1), ServiceId(7)});
  const CarePlan b({ServiceId(7), ServiceId(3), ServiceId(1)});
  CHECK(a == b);
  CHECK(a.services().front() == ServiceId(1));
  CHECK_THROWS_AS(CarePlan({ServiceId(1), ServiceId(1)}), SchemaError);
  CarePlan c = a;
  c.insert(ServiceId(3));
  CHECK(c == a);
  c.erase(ServiceId(3));
  CHECK_FALSE(c.contains(ServiceId(3)));
}

TEST_CASE("plan_from_codes names every unknown code") {
  const auto cat = make_default_catalog();
  const std::vector<std::string> codes{"CANE", "BOGUS", "OXYGEN", "ALSO_BAD"};
  try {
    (void)plan_from_codes(codes, cat);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("BOGUS") != std::string::npos);
    CHECK(msg.find("ALSO_BAD") != std::string::npos);
  }
  const std::vector<std::string> ok{"OXYGEN", "CANE"};
  const auto plan = plan_from_codes(ok, cat);
  CHECK(plan_codes(plan, cat) == std::vector<std::string>{"CANE", "OXYGEN"});
}

TEST_CASE("service-service predictors are canonical") {
  const auto p = make_service_service(4, ServiceId(5), ServiceId(2));
  CHECK(p.left == ServiceId(2));
  CHECK(p.right_service() == ServiceId(5));
  CHECK_THROWS(make_service_service(1, ServiceId(3), ServiceId(3)));
}

TEST_CASE("predictor evaluation") {
  const auto cat = make_default_catalog();
  const auto cane = *cat.find("CANE");
  const auto bars = *cat.find("GRAB_BARS");
  PatientRecord patient{"P1", {{"age", 81.0}, {"dx401", 1.0}}, 12.0, {}, 0};
  const auto pair = make_service_service(0, cane, bars);
  CHECK(evaluate_predictor(pair, patient, CarePlan({cane, bars})) == 1.0);
  CHECK(evaluate_predictor(pair, patient, CarePlan({cane})) == 0.0);
  const auto age = make_service_characteristic(1, cane, "age");
  CHECK(evaluate_predictor(age, patient, CarePlan({cane})) == 81.0);
  CHECK(evaluate_predictor(age, patient, CarePlan({bars})) == 0.0);
  const auto missing = make_service_characteristic(2, cane, "dx999");
  CHECK_THROWS_AS(evaluate_predictor(missing, patient, CarePlan({cane})), SchemaError);

  const std::vector<Predictor> preds{pair, age};
  const auto fv = featurize(patient, CarePlan({cane, bars}), preds);
  CHECK(fv.values == std::vector<double>{1.0, 81.0});
  CHECK(fv.at(kLosTerm) == 12.0);
}

TEST_CASE("adding a service never zeroes a nonzero predictor value") {
  const auto cohort = fixtures::small_cohort(40, 12, 6, 5);
  const auto preds = enumerate_candidates(cohort.catalog, cohort.characteristic_names);
  Rng rng(11);
  std::uniform_int_distribution<std::size_t> svc(0, cohort.catalog.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto& patient = cohort.patients[static_cast<std::size_t>(trial) % cohort.patients.size()];
    CarePlan plan;
    for (int k = 0; k < 4; ++k) plan.insert(ServiceId(svc(rng)));
    CarePlan bigger = plan;
    bigger.insert(ServiceId(svc(rng)));
    for (const auto& p : preds) {
      const double before = evaluate_predictor(p, patient, plan);
      if (before != 0.0) CHECK(evaluate_predictor(p, patient, bigger) == before);
    }
  }
}

TEST_CASE("candidate enumeration is dense and complete") {
  const auto cat = make_default_catalog(10);
  const std::vector<std::string> chars{"age", "dx1", "dx2"};
  const auto c = enumerate_candidates(cat, chars);
  REQUIRE(c.size() == 45 + 30);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i].id == static_cast<int>(i));
  CHECK(c[0].kind == PredictorKind::kServiceService);
  CHECK(c[44].kind == PredictorKind::kServiceService);
  CHECK(c[45].kind == PredictorKind::kServiceCharacteristic);
  for (const auto& p : c)
    if (p.kind == PredictorKind::kServiceService) CHECK(p.left < p.right_service());
}

TEST_CASE("plan space size matches the quoted orders of magnitude") {
  const auto s = plan_space_size(69, 8);
  // Independent oracle: both counts fit in 64 bits at this size.
  std::uint64_t ordered = 1;
  for (std::uint64_t i = 0; i < 8; ++i) ordered *= 69 - i;
  std::uint64_t comb = ordered;
  for (std::uint64_t i = 2; i <= 8; ++i) comb /= i;
  CHECK(s.ordered_leaves == std::to_string(ordered));
  CHECK(s.combinations == std::to_string(comb));
  CHECK(std::stod(s.combinations) > 8e9);
  CHECK(std::stod(s.ordered_leaves) > 3.37e14);
  CHECK(plan_space_size(10, 3).combinations == "120");
}
