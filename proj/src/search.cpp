#include "svcsel/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <queue>
#include <unordered_map>

namespace svcsel::search {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kVanilla: return "vanilla";
    case Mode::kPhMast: return "ph_mast";
    case Mode::kTimeControlled: return "time_controlled";
    case Mode::kPhAndTime: return "ph_and_time";
  }
  return "unknown";
}

Mode parse_mode(std::string_view text) {
  if (text == "vanilla") return Mode::kVanilla;
  if (text == "ph_mast") return Mode::kPhMast;
  if (text == "time_controlled") return Mode::kTimeControlled;
  if (text == "ph_and_time") return Mode::kPhAndTime;
  throw std::invalid_argument("unknown search mode '" + std::string(text) + "'");
}

bool uses_history(Mode mode) { return mode == Mode::kPhMast || mode == Mode::kPhAndTime; }
bool uses_phases(Mode mode) { return mode == Mode::kTimeControlled || mode == Mode::kPhAndTime; }

void validate(const SearchConfig& cfg, std::size_t catalog_size) {
  if (!(cfg.exploration >= 0)) throw std::invalid_argument("C must be >= 0");
  if (!(cfg.history_weight >= 0)) throw std::invalid_argument("W must be >= 0");
  if (!(cfg.epsilon >= 0 && cfg.epsilon <= 1)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (cfg.max_plan_size < 1 || cfg.max_plan_size > catalog_size)
    throw std::invalid_argument("plan size must lie in [1, catalog size]");
  if (cfg.pinned.size() > cfg.max_plan_size)
    throw std::invalid_argument("more pinned services than the plan size allows");
  std::vector<ServiceId> pins = cfg.pinned;
  std::sort(pins.begin(), pins.end());
  if (std::adjacent_find(pins.begin(), pins.end()) != pins.end())
    throw std::invalid_argument("pinned services must be distinct");
  for (auto p : pins)
    if (p.index() >= catalog_size) throw std::invalid_argument("pinned service outside catalog");
  if (const auto* t = std::get_if<TimeBudget>(&cfg.budget); t && !(t->seconds >= 0))
    throw std::invalid_argument("time budget must be >= 0");
}

double uct_ph_value(double visits, double total_reward, double parent_visits,
                    std::optional<double> history_score, double exploration,
                    double history_weight) {
  if (visits == 0) return std::numeric_limits<double>::infinity();
  const double mean = total_reward / visits;
  double value = mean + exploration * std::sqrt(std::log(parent_visits) / visits);
  if (history_score) value += *history_score * history_weight / ((1.0 - mean) * visits + 1.0);
  return value;
}

// ---- Mcts ------------------------------------------------------------------

Mcts::Mcts(const CompiledScorer& scorer, const SearchConfig& cfg)
    : scorer_(scorer),
      cfg_(cfg),
      history_enabled_(uses_history(cfg.mode)),
      services_(scorer.catalog_size()),
      history_(scorer.catalog_size()),
      rng_(cfg.seed) {
  validate(cfg_, services_);
  nodes_.emplace_back();
  root_ = 0;
  for (auto pin : cfg_.pinned) {
    Node child;
    child.service = pin;
    child.parent = root_;
    child.depth = nodes_[root_].depth + 1;
    nodes_.push_back(std::move(child));
    const int id = static_cast<int>(nodes_.size()) - 1;
    nodes_[root_].children.push_back(id);
    root_ = id;
  }
}

std::vector<ServiceId> Mcts::path_services(int node) const {
  std::vector<ServiceId> out;
  for (int n = node; n != Node::kNone; n = nodes_[n].parent)
    if (nodes_[n].service) out.push_back(*nodes_[n].service);
  std::reverse(out.begin(), out.end());
  return out;
}

int Mcts::select_untried(int node, const std::vector<char>& in_plan) const {
  std::vector<char> taken = in_plan;
  for (int c : nodes_[node].children) taken[nodes_[c].service->index()] = 1;
  int best = -1;
  std::optional<double> best_score;
  for (std::size_t s = 0; s < services_; ++s) {
    if (taken[s]) continue;
    if (!history_enabled_) return static_cast<int>(s);
    const auto score = history_.score(ServiceId(s));
    // Seen actions outrank unseen ones; ties go to the lower id.
    if (best < 0 || (score && (!best_score || *score > *best_score))) {
      best = static_cast<int>(s);
      best_score = score;
    }
  }
  return best;
}

int Mcts::best_uct_child(int node) const {
  const double parent_visits = static_cast<double>(nodes_[node].visits);
  const double w = history_enabled_ ? cfg_.history_weight : 0.0;
  int best = Node::kNone;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int c : nodes_[node].children) {
    const auto& child = nodes_[c];
    const auto history = history_enabled_ ? history_.score(*child.service) : std::nullopt;
    const double v = uct_ph_value(static_cast<double>(child.visits), child.total_reward,
                                  parent_visits, history, cfg_.exploration, w);
    if (best == Node::kNone || v > best_value ||
        (v == best_value && *child.service < *nodes_[best].service)) {
      best = c;
      best_value = v;
    }
  }
  return best;
}

ServiceId Mcts::rollout_action(const std::vector<char>& in_plan) {
  std::vector<ServiceId> unused;
  for (std::size_t s = 0; s < services_; ++s)
    if (!in_plan[s]) unused.push_back(ServiceId(s));
  bool random = true;
  if (history_enabled_ && cfg_.epsilon < 1.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    random = cfg_.epsilon > 0.0 && unit(rng_) < cfg_.epsilon;
  }
  if (random) {
    std::uniform_int_distribution<std::size_t> pick(0, unused.size() - 1);
    return unused[pick(rng_)];
  }
  ServiceId best = unused.front();
  std::optional<double> best_score = history_.score(best);
  for (auto s : unused) {
    const auto score = history_.score(s);
    if (score && (!best_score || *score > *best_score)) {
      best = s;
      best_score = score;
    }
  }
  return best;
}

double Mcts::simulate_once() {
  const std::size_t d = cfg_.max_plan_size;
  std::vector<char> in_plan(services_, 0);
  std::vector<ServiceId> sequence = path_services(root_);
  for (auto s : sequence) in_plan[s.index()] = 1;
  const std::size_t root_depth = sequence.size();

  std::vector<int> path{root_};
  int node = root_;
  while (nodes_[node].depth < d) {
    const int untried = select_untried(node, in_plan);
    if (untried >= 0) {
      Node child;
      child.service = ServiceId(static_cast<std::size_t>(untried));
      child.parent = node;
      child.depth = nodes_[node].depth + 1;
      nodes_.push_back(std::move(child));
      const int id = static_cast<int>(nodes_.size()) - 1;
      nodes_[node].children.push_back(id);
      node = id;
      path.push_back(node);
      in_plan[static_cast<std::size_t>(untried)] = 1;
      sequence.push_back(ServiceId(static_cast<std::size_t>(untried)));
      break;
    }
    const int next = best_uct_child(node);
    if (next == Node::kNone) break;
    node = next;
    path.push_back(node);
    in_plan[nodes_[node].service->index()] = 1;
    sequence.push_back(*nodes_[node].service);
  }
  while (sequence.size() < d) {
    const ServiceId a = rollout_action(in_plan);
    in_plan[a.index()] = 1;
    sequence.push_back(a);
  }

  double reward;
  auto& leaf = nodes_[node];
  if (leaf.depth == d && leaf.terminal_reward) {
    reward = *leaf.terminal_reward;
  } else {
    reward = 1.0 - scorer_.risk(sequence);
    ++evaluations_;
    if (leaf.depth == d) leaf.terminal_reward = reward;
  }

  for (int n : path) {
    auto& nd = nodes_[n];
    nd.visits += 1;
    nd.total_reward += reward;
    if (reward > nd.best_reward) {
      nd.best_reward = reward;
      nd.best_plan = sequence;
    }
  }
  if (history_enabled_)
    for (std::size_t i = root_depth; i < sequence.size(); ++i) history_.update(sequence[i], reward);
  if (reward > best_reward_) {
    best_reward_ = reward;
    best_plan_ = sequence;
  }
  ++simulations_;
  return reward;
}

void Mcts::commit(int child) {
  if (child < 0 || static_cast<std::size_t>(child) >= nodes_.size() || nodes_[child].parent != root_)
    throw std::invalid_argument("commit target is not a child of the root");
  root_ = child;
}

int Mcts::most_visited_child(int node) const {
  int best = Node::kNone;
  for (int c : nodes_[node].children) {
    const auto& child = nodes_[c];
    if (child.visits == 0) continue;
    if (best == Node::kNone) {
      best = c;
      continue;
    }
    const auto& b = nodes_[best];
    const double mean_c = child.total_reward / static_cast<double>(child.visits);
    const double mean_b = b.total_reward / static_cast<double>(b.visits);
    if (child.visits > b.visits || (child.visits == b.visits && mean_c > mean_b) ||
        (child.visits == b.visits && mean_c == mean_b && *child.service < *b.service))
      best = c;
  }
  return best;
}

std::vector<ServiceId> Mcts::extract_plan() const {
  int node = root_;
  if (nodes_[node].visits == 0) return path_services(node);
  while (nodes_[node].depth < cfg_.max_plan_size) {
    const int next = most_visited_child(node);
    if (next == Node::kNone) break;
    node = next;
  }
  if (nodes_[node].depth < cfg_.max_plan_size && !nodes_[node].best_plan.empty())
    return nodes_[node].best_plan;
  return path_services(node);
}

// ---- drivers ---------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void run_simulations(Mcts& mcts, std::uint64_t count) {
  for (std::uint64_t i = 0; i < count; ++i) mcts.simulate_once();
}

void run_for(Mcts& mcts, double seconds) {
  const auto start = Clock::now();
  while (elapsed_since(start) < seconds)
    for (int i = 0; i < 32; ++i) mcts.simulate_once();
}

CarePlan trim_plan(std::vector<ServiceId> services, std::span<const ServiceId> pinned,
                   const CompiledScorer& scorer, std::uint64_t& evaluations) {
  double current = scorer.risk(services);
  ++evaluations;
  while (services.size() > 1) {
    std::size_t best_index = services.size();
    double best_risk = current;
    for (std::size_t i = 0; i < services.size(); ++i) {
      if (std::find(pinned.begin(), pinned.end(), services[i]) != pinned.end()) continue;
      std::vector<ServiceId> candidate = services;
      candidate.erase(candidate.begin() + static_cast<std::ptrdiff_t>(i));
      const double r = scorer.risk(candidate);
      ++evaluations;
      if (r < best_risk) {
        best_risk = r;
        best_index = i;
      }
    }
    if (best_index == services.size()) break;
    services.erase(services.begin() + static_cast<std::ptrdiff_t>(best_index));
    current = best_risk;
  }
  return CarePlan(std::move(services));
}

// Max-visit extraction, unless a strictly better complete plan was already
// evaluated (the utility is deterministic, so the incumbent is exact).
std::vector<ServiceId> final_plan(const Mcts& mcts, const CompiledScorer& scorer) {
  auto plan = mcts.extract_plan();
  if (!mcts.best_plan().empty() && (plan.empty() || 1.0 - scorer.risk(plan) < mcts.best_reward()))
    return mcts.best_plan();
  return plan;
}

SearchResult package(const Mcts& mcts, std::vector<ServiceId> plan, const SearchConfig& cfg,
                     const CompiledScorer& scorer) {
  SearchResult result;
  result.algorithm = "mcts:" + to_string(cfg.mode);
  result.simulations = mcts.simulations();
  result.evaluations = mcts.evaluations();
  result.root_path = mcts.path_services(mcts.root());
  if (cfg.trim && !plan.empty())
    result.plan = trim_plan(std::move(plan), cfg.pinned, scorer, result.evaluations);
  else
    result.plan = CarePlan(std::move(plan));
  return result;
}

}  // namespace

void finalize(SearchResult& result, const EnsembleModel& model, const PatientRecord& patient) {
  result.risk = score_risk(model, patient, result.plan);
  result.initial_risk = score_risk(model, patient, patient.observed_plan);
  result.risk_reduction = 100.0 * (result.initial_risk - result.risk);
}

SearchResult mcts_search(const EnsembleModel& model, const PatientRecord& patient,
                         std::size_t catalog_size, const SearchConfig& cfg) {
  const auto start = Clock::now();
  const CompiledScorer scorer(model, patient, catalog_size);
  Mcts mcts(scorer, cfg);
  if (const auto* sims = std::get_if<SimulationBudget>(&cfg.budget))
    run_simulations(mcts, sims->simulations);
  else
    run_for(mcts, std::get<TimeBudget>(cfg.budget).seconds);
  auto result = package(mcts, final_plan(mcts, scorer), cfg, scorer);
  finalize(result, model, patient);
  result.seconds = elapsed_since(start);
  return result;
}

SearchResult time_controlled_search(const EnsembleModel& model, const PatientRecord& patient,
                                    std::size_t catalog_size, const SearchConfig& cfg) {
  const auto start = Clock::now();
  const CompiledScorer scorer(model, patient, catalog_size);
  Mcts mcts(scorer, cfg);
  const std::size_t phases = cfg.max_plan_size - cfg.pinned.size();
  const auto* sims = std::get_if<SimulationBudget>(&cfg.budget);
  std::vector<PhaseTrace> trace;
  for (std::size_t phase = 0; phase < phases; ++phase) {
    const std::uint64_t before = mcts.simulations();
    const double best_before = mcts.best_reward();
    if (sims) {
      std::uint64_t count = sims->simulations / phases;
      if (phase < sims->simulations % phases) ++count;
      run_simulations(mcts, count);
    } else {
      run_for(mcts, std::get<TimeBudget>(cfg.budget).seconds / static_cast<double>(phases));
    }
    PhaseTrace t;
    t.phase = static_cast<int>(phase);
    t.simulations = mcts.simulations() - before;
    t.best_risk = 1.0 - mcts.best_reward();
    const int candidate = mcts.most_visited_child(mcts.root());
    if (candidate == Node::kNone) {
      trace.push_back(t);
      break;
    }
    // No child of this root found anything better than what was known
    // when the phase began.
    if (cfg.early_stop && phase > 0 && !(mcts.best_reward() > best_before)) {
      t.stopped_early = true;
      trace.push_back(t);
      break;
    }
    t.committed = mcts.nodes()[candidate].service;
    mcts.commit(candidate);
    trace.push_back(t);
  }
  auto plan = final_plan(mcts, scorer);
  auto result = package(mcts, std::move(plan), cfg, scorer);
  result.phases = std::move(trace);
  finalize(result, model, patient);
  result.seconds = elapsed_since(start);
  return result;
}

SearchResult run_search(const EnsembleModel& model, const PatientRecord& patient,
                        std::size_t catalog_size, const SearchConfig& cfg) {
  return uses_phases(cfg.mode) ? time_controlled_search(model, patient, catalog_size, cfg)
                               : mcts_search(model, patient, catalog_size, cfg);
}

// ---- Dijkstra --------------------------------------------------------------

namespace {

using Key = std::vector<ServiceId>;

struct KeyHash {
  std::size_t operator()(const Key& k) const {
    std::uint64_t h = 0x84222325CBF29CE4ULL;
    for (auto s : k) h = mix64(h ^ s.value);
    return static_cast<std::size_t>(h);
  }
};

struct Entry {
  double distance;
  Key key;
  // Min-heap on (distance, lexicographic key).
  bool operator>(const Entry& o) const {
    if (distance != o.distance) return distance > o.distance;
    return key > o.key;
  }
};

}  // namespace

SearchResult dijkstra_search(const EnsembleModel& model, const PatientRecord& patient,
                             std::size_t catalog_size, const DijkstraConfig& cfg) {
  if (cfg.plan_size < 1 || cfg.plan_size > catalog_size)
    throw std::invalid_argument("plan size must lie in [1, catalog size]");
  const auto start = Clock::now();
  const CompiledScorer scorer(model, patient, catalog_size);
  SearchResult result;
  result.algorithm = "dijkstra";

  std::unordered_map<Key, double, KeyHash> risk_cache, best_distance;
  std::unordered_map<Key, char, KeyHash> settled;
  auto risk_of = [&](const Key& k) {
    auto it = risk_cache.find(k);
    if (it != risk_cache.end()) return it->second;
    const double r = scorer.risk(k);
    ++result.evaluations;
    risk_cache.emplace(k, r);
    return r;
  };

  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  frontier.push({0.0, {}});
  best_distance[{}] = 0.0;
  std::optional<Entry> deepest;  // best settled vertex at the deepest level
  auto budget_left = [&] { return !cfg.max_evaluations || result.evaluations < *cfg.max_evaluations; };

  while (!frontier.empty()) {
    Entry e = frontier.top();
    frontier.pop();
    if (settled.contains(e.key)) continue;
    settled.emplace(e.key, 1);
    if (!deepest || e.key.size() > deepest->key.size() ||
        (e.key.size() == deepest->key.size() && e.distance < deepest->distance))
      deepest = e;
    if (e.key.size() == cfg.plan_size) {
      result.plan = CarePlan(e.key);
      result.distance = e.distance;
      finalize(result, model, patient);
      result.seconds = elapsed_since(start);
      return result;
    }
    if (!budget_left()) break;
    const double from = risk_of(e.key);
    for (std::size_t s = 0; s < catalog_size; ++s) {
      const ServiceId id(s);
      if (std::binary_search(e.key.begin(), e.key.end(), id)) continue;
      Key next = e.key;
      next.insert(std::upper_bound(next.begin(), next.end(), id), id);
      if (settled.contains(next)) continue;
      const double d = e.distance + edge_distance(from, risk_of(next));
      auto it = best_distance.find(next);
      if (it == best_distance.end() || d < it->second) {
        best_distance[next] = d;
        frontier.push({d, std::move(next)});
      }
    }
    if (frontier.size() > cfg.max_frontier)
      throw FrontierOverflow("Dijkstra frontier exceeded " + std::to_string(cfg.max_frontier) +
                             " vertices; reduce the catalog size or the plan size");
  }

  // Evaluation budget exhausted: complete the best deepest settled plan by
  // repeatedly adding the service that lowers risk the most.
  Key plan = deepest ? deepest->key : Key{};
  double distance = deepest ? deepest->distance : 0.0;
  while (plan.size() < cfg.plan_size) {
    const double from = risk_of(plan);
    Key best;
    double best_risk = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < catalog_size; ++s) {
      const ServiceId id(s);
      if (std::binary_search(plan.begin(), plan.end(), id)) continue;
      Key next = plan;
      next.insert(std::upper_bound(next.begin(), next.end(), id), id);
      const double r = risk_of(next);
      if (r < best_risk) {
        best_risk = r;
        best = std::move(next);
      }
    }
    distance += edge_distance(from, best_risk);
    plan = std::move(best);
  }
  result.plan = CarePlan(plan);
  result.distance = distance;
  finalize(result, model, patient);
  result.seconds = elapsed_since(start);
  return result;
}

nlohmann::json result_to_json(const SearchResult& r, const ServiceCatalog& catalog) {
  auto phases = nlohmann::json::array();
  for (const auto& p : r.phases) {
    nlohmann::json j = {{"phase", p.phase},
                        {"simulations", p.simulations},
                        {"best_risk", p.best_risk},
                        {"stopped_early", p.stopped_early}};
    j["committed"] = p.committed ? nlohmann::json(catalog.code(*p.committed)) : nlohmann::json();
    phases.push_back(std::move(j));
  }
  std::vector<std::string> root_path;
  for (auto s : r.root_path) root_path.push_back(catalog.code(s));
  nlohmann::json j = {{"algorithm", r.algorithm},
                      {"plan", plan_codes(r.plan, catalog)},
                      {"risk", r.risk},
                      {"initial_risk", r.initial_risk},
                      {"risk_reduction", r.risk_reduction},
                      {"simulations", r.simulations},
                      {"evaluations", r.evaluations},
                      {"root_path", root_path},
                      {"phases", phases}};
  if (r.distance) j["distance"] = *r.distance;
  return j;
}

}  // namespace svcsel::search
