#include <cmath>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "svcsel/search.hpp"

using namespace svcsel;
using namespace svcsel::search;

namespace {

struct Instance {
  Cohort cohort;
  EnsembleModel model;
};

const Instance& tiny() {
  static const Instance inst = [] {
    Instance i;
    i.cohort = fixtures::small_cohort(40, 10, 4, 77);
    i.model = fixtures::random_model(i.cohort, 78, 3, 20, 2.0);
    return i;
  }();
  return inst;
}

SearchConfig tiny_config(Mode mode, std::uint64_t sims, std::uint64_t seed) {
  SearchConfig cfg;
  cfg.mode = mode;
  cfg.max_plan_size = 3;
  cfg.budget = SimulationBudget{sims};
  cfg.seed = seed;
  return cfg;
}

// Walks every node and checks structural invariants.
void check_tree(const Mcts& mcts, std::size_t services, std::size_t d) {
  const auto& nodes = mcts.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const auto path = mcts.path_services(static_cast<int>(i));
    CHECK(std::set<ServiceId>(path.begin(), path.end()).size() == path.size());
    CHECK(n.children.size() <= services - n.depth);
    CHECK(n.depth <= d);
    CHECK(n.total_reward <= static_cast<double>(n.visits));
    std::uint64_t child_visits = 0;
    for (int c : n.children) child_visits += nodes[c].visits;
    CHECK(n.visits >= child_visits);
    // Every simulation through a node either continues into a child or ends
    // there; it ends at a non-terminal node only when that node was created.
    if (static_cast<int>(i) != mcts.root() && n.depth < d && n.visits > 0 && !n.children.empty())
      CHECK(n.visits - child_visits <= 1);
  }
}

}  // namespace

TEST_CASE("selection value matches hand-computed values") {
  // n=1, r=1, n_p=e, C=1, W=0: 1 + sqrt(1) = 2.
  CHECK(uct_ph_value(1, 1, std::exp(1.0), std::nullopt, 1.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
  // n=2, r=1, n_p=4, C=0.05, W=0.1, history 0.5.
  const double expected = 0.5 + 0.05 * std::sqrt(std::log(4.0) / 2.0) + 0.5 * 0.1 / ((1 - 0.5) * 2 + 1);
  CHECK(std::abs(uct_ph_value(2, 1, 4, 0.5, 0.05, 0.1) - expected) <= 1e-12);
  CHECK(std::abs(uct_ph_value(2, 1, 4, 0.5, 0.05, 0.1) - 0.56663) <= 1e-5);
  CHECK(std::isinf(uct_ph_value(0, 0, 4, 0.9, 0.05, 0.1)));
}

TEST_CASE("W = 0 reproduces plain UCT bit for bit") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double n = 1 + std::floor(u(rng) * 100), np = n + std::floor(u(rng) * 1000);
    const double r = u(rng) * n, c = u(rng);
    const double uct = r / n + c * std::sqrt(std::log(np) / n);
    CHECK(uct_ph_value(n, r, np, u(rng), c, 0.0) == uct);
    CHECK(uct_ph_value(n, r, np, std::nullopt, c, 0.3) == uct);
  }
}

TEST_CASE("config validation") {
  SearchConfig cfg;
  cfg.max_plan_size = 3;
  CHECK_NOTHROW(validate(cfg, 10));
  cfg.max_plan_size = 11;
  CHECK_THROWS(validate(cfg, 10));
  cfg.max_plan_size = 3;
  cfg.pinned = {ServiceId(1), ServiceId(1)};
  CHECK_THROWS(validate(cfg, 10));
  cfg.pinned = {ServiceId(1), ServiceId(2), ServiceId(3), ServiceId(4)};
  CHECK_THROWS(validate(cfg, 10));
  cfg.pinned = {};
  cfg.epsilon = 1.5;
  CHECK_THROWS(validate(cfg, 10));
  CHECK_THROWS(parse_mode("greedy"));
  for (auto m : {Mode::kVanilla, Mode::kPhMast, Mode::kTimeControlled, Mode::kPhAndTime})
    CHECK(parse_mode(to_string(m)) == m);
}

TEST_CASE("backpropagation accounting and tree integrity") {
  const auto& inst = tiny();
  const auto& p = inst.cohort.patients[0];
  const CompiledScorer scorer(inst.model, p, 10);
  for (auto mode : {Mode::kVanilla, Mode::kPhMast}) {
    auto cfg = tiny_config(mode, 0, 5);
    cfg.max_plan_size = 4;
    Mcts mcts(scorer, cfg);
    for (int k = 1; k <= 3000; ++k) {
      const double r = mcts.simulate_once();
      CHECK(r > 0.0);
      CHECK(r < 1.0);
    }
    const auto& root = mcts.nodes()[mcts.root()];
    CHECK(root.visits == 3000);
    std::uint64_t child_visits = 0;
    for (int c : root.children) child_visits += mcts.nodes()[c].visits;
    CHECK(child_visits == 3000);
    check_tree(mcts, 10, 4);
    for (std::size_t s = 0; s < 10; ++s) {
      const auto& h = mcts.history();
      CHECK(h.rewards(ServiceId(s)) <= h.plays(ServiceId(s)));
      if (auto score = h.score(ServiceId(s))) {
        CHECK(*score >= 0.0);
        CHECK(*score <= 1.0);
      }
    }
  }
}

TEST_CASE("plan size equal to the catalog forces one terminal state") {
  const auto& inst = tiny();
  const CompiledScorer scorer(inst.model, inst.cohort.patients[1], 10);
  auto cfg = tiny_config(Mode::kPhMast, 0, 3);
  cfg.max_plan_size = 10;
  Mcts mcts(scorer, cfg);
  const double first = mcts.simulate_once();
  for (int k = 0; k < 200; ++k) CHECK(mcts.simulate_once() == first);
}

TEST_CASE("epsilon 1 MAST roll-outs consume randomness like vanilla") {
  const auto& inst = tiny();
  const CompiledScorer scorer(inst.model, inst.cohort.patients[2], 10);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto a = tiny_config(Mode::kVanilla, 0, seed);
    auto b = tiny_config(Mode::kPhMast, 0, seed);
    b.epsilon = 1.0;
    Mcts va(scorer, a), ph(scorer, b);
    // From an empty tree both expand the same first action, so the first
    // roll-out must coincide.
    CHECK(va.simulate_once() == ph.simulate_once());
    CHECK(va.best_plan() == ph.best_plan());
  }
}

TEST_CASE("search is deterministic for a fixed seed") {
  const auto& inst = tiny();
  const auto& p = inst.cohort.patients[3];
  for (auto mode : {Mode::kVanilla, Mode::kPhMast, Mode::kTimeControlled, Mode::kPhAndTime}) {
    const auto cfg = tiny_config(mode, 4000, 11);
    const auto a = run_search(inst.model, p, 10, cfg);
    const auto b = run_search(inst.model, p, 10, cfg);
    CHECK(result_to_json(a, inst.cohort.catalog) == result_to_json(b, inst.cohort.catalog));
    CHECK(a.plan.size() <= 3);
    CHECK(a.risk_reduction == doctest::Approx(100.0 * (a.initial_risk - a.risk)).epsilon(1e-12));
    CHECK(a.risk == score_risk(inst.model, p, a.plan));
  }
}

TEST_CASE("pinned services lead the root path and stay in the plan") {
  const auto& inst = tiny();
  const auto& p = inst.cohort.patients[4];
  for (auto mode : {Mode::kVanilla, Mode::kPhAndTime}) {
    auto cfg = tiny_config(mode, 3000, 2);
    cfg.pinned = {ServiceId(5)};
    const auto r = run_search(inst.model, p, 10, cfg);
    CHECK(r.plan.contains(ServiceId(5)));
    REQUIRE_FALSE(r.root_path.empty());
    CHECK(r.root_path.front() == ServiceId(5));
  }
}

TEST_CASE("zero budget returns the pinned plan") {
  const auto& inst = tiny();
  const auto& p = inst.cohort.patients[5];
  auto cfg = tiny_config(Mode::kPhAndTime, 0, 1);
  CHECK(run_search(inst.model, p, 10, cfg).plan.empty());
  cfg.pinned = {ServiceId(2), ServiceId(7)};
  const auto r = run_search(inst.model, p, 10, cfg);
  CHECK(r.plan == CarePlan({ServiceId(2), ServiceId(7)}));
  CHECK(r.simulations == 0);
  CHECK(r.risk == score_risk(inst.model, p, r.plan));
}

TEST_CASE("time-controlled phases split the budget and re-root") {
  const auto cohort = fixtures::small_cohort(20, 20, 4, 90);
  const auto model = fixtures::random_model(cohort, 91, 3, 30);
  const auto& p = cohort.patients[0];
  SearchConfig cfg;
  cfg.mode = Mode::kTimeControlled;
  cfg.max_plan_size = 8;
  cfg.budget = SimulationBudget{8000};
  cfg.early_stop = false;
  const auto r = run_search(model, p, 20, cfg);
  REQUIRE(r.phases.size() == 8);
  for (const auto& ph : r.phases) CHECK(ph.simulations == 1000);
  CHECK(r.root_path.size() == 8);
  CHECK(r.simulations == 8000);

  // Committing twice leaves a depth-2 root whose siblings are never revisited.
  const CompiledScorer scorer(model, p, 20);
  Mcts mcts(scorer, cfg);
  for (int i = 0; i < 1000; ++i) mcts.simulate_once();
  const int first = mcts.most_visited_child(mcts.root());
  const auto sibling_visits = [&] {
    std::uint64_t v = 0;
    for (int c : mcts.nodes()[0].children)
      if (c != first) v += mcts.nodes()[c].visits;
    return v;
  };
  mcts.commit(first);
  const auto frozen = sibling_visits();
  for (int i = 0; i < 1000; ++i) mcts.simulate_once();
  mcts.commit(mcts.most_visited_child(mcts.root()));
  CHECK(mcts.path_services(mcts.root()).size() == 2);
  for (int i = 0; i < 1000; ++i) mcts.simulate_once();
  CHECK(sibling_visits() == frozen);
  CHECK_THROWS(mcts.commit(first));
}

TEST_CASE("early stop ends the phases once a phase brings no improvement") {
  const auto& inst = tiny();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = run_search(inst.model, inst.cohort.patients[seed], 10,
                              tiny_config(Mode::kPhAndTime, 3000, seed));
    for (std::size_t i = 0; i + 1 < r.phases.size(); ++i) CHECK_FALSE(r.phases[i].stopped_early);
    CHECK(r.root_path.size() <= 3);
  }
}

TEST_CASE("MCTS finds the brute-force optimum on tiny instances") {
  const auto& inst = tiny();
  const auto plans = fixtures::all_plans(10, 3);
  int hits = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& p = inst.cohort.patients[i];
    const CompiledScorer scorer(inst.model, p, 10);
    double best = 1.0;
    for (const auto& plan : plans)
      if (!plan.empty()) best = std::min(best, scorer.risk(plan));
    const auto r = run_search(inst.model, p, 10, tiny_config(Mode::kPhAndTime, 50000, i));
    if (r.risk <= best + 0.005) ++hits;
  }
  CHECK(hits >= 19);
}

TEST_CASE("edge distances lie in [0, 2]") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  for (int i = 0; i < 10000; ++i) {
    const double d = edge_distance(u(rng), u(rng));
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
  }
}

TEST_CASE("Dijkstra ties resolve to the lexicographically first plan") {
  const auto& inst = tiny();
  EnsembleModel flat;
  glm::LogisticModel m;
  m.intercept = -1.0;
  flat.members.push_back(m);
  DijkstraConfig cfg;
  cfg.plan_size = 3;
  const auto r = dijkstra_search(flat, inst.cohort.patients[0], 10, cfg);
  CHECK(r.plan == CarePlan({ServiceId(0), ServiceId(1), ServiceId(2)}));
  CHECK(*r.distance == 3.0);
}

TEST_CASE("Dijkstra settles the minimum accumulated distance") {
  const auto& inst = tiny();
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& p = inst.cohort.patients[i];
    const CompiledScorer scorer(inst.model, p, 10);
    // Enumerate every ordered path of three additions.
    double best = std::numeric_limits<double>::infinity();
    const double r0 = scorer.risk(std::vector<ServiceId>{});
    for (std::size_t a = 0; a < 10; ++a)
      for (std::size_t b = 0; b < 10; ++b)
        for (std::size_t c = 0; c < 10; ++c) {
          if (a == b || a == c || b == c) continue;
          const std::vector<ServiceId> s1{ServiceId(a)}, s2{ServiceId(a), ServiceId(b)},
              s3{ServiceId(a), ServiceId(b), ServiceId(c)};
          const double r1 = scorer.risk(s1), r2 = scorer.risk(s2), r3 = scorer.risk(s3);
          best = std::min(best, edge_distance(r0, r1) + edge_distance(r1, r2) + edge_distance(r2, r3));
        }
    DijkstraConfig cfg;
    cfg.plan_size = 3;
    const auto r = dijkstra_search(inst.model, p, 10, cfg);
    REQUIRE(r.distance);
    CHECK(*r.distance == doctest::Approx(best).epsilon(1e-12));
    CHECK(r.plan.size() == 3);
  }
}

TEST_CASE("Dijkstra guards its frontier and honours an evaluation budget") {
  const auto& inst = tiny();
  DijkstraConfig cfg;
  cfg.plan_size = 3;
  cfg.max_frontier = 5;
  CHECK_THROWS_AS(dijkstra_search(inst.model, inst.cohort.patients[0], 10, cfg), FrontierOverflow);
  cfg.max_frontier = 1'000'000;
  cfg.max_evaluations = 30;
  const auto r = dijkstra_search(inst.model, inst.cohort.patients[0], 10, cfg);
  CHECK(r.plan.size() == 3);
  CHECK(r.evaluations <= 30 + 3 * 10);
}
