#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "svcsel/catalog.hpp"
#include "svcsel/rng.hpp"
#include "svcsel/scoring.hpp"

namespace svcsel::search {

enum class Mode { kVanilla, kPhMast, kTimeControlled, kPhAndTime };

std::string to_string(Mode mode);
/// Accepts "vanilla", "ph_mast", "time_controlled", "ph_and_time".
Mode parse_mode(std::string_view text);
bool uses_history(Mode mode);
bool uses_phases(Mode mode);

struct SimulationBudget {
  std::uint64_t simulations = 0;
};
struct TimeBudget {
  double seconds = 0.0;
};
using Budget = std::variant<SimulationBudget, TimeBudget>;

struct SearchConfig {
  /// UCT exploration constant C.
  double exploration = 0.05;
  /// Progressive History weight W.
  double history_weight = 0.1;
  /// MAST probability of a uniformly random roll-out action.
  double epsilon = 0.1;
  std::size_t max_plan_size = 8;
  Budget budget = SimulationBudget{10000};
  Mode mode = Mode::kPhAndTime;
  std::uint64_t seed = 1;
  /// Forced root path; these services always appear in the plan.
  std::vector<ServiceId> pinned;
  /// Time-controlled modes: stop when committing the next service would
  /// abandon the best plan found so far.
  bool early_stop = true;
  /// Drop services from the extracted plan while that strictly lowers risk.
  bool trim = true;
};

/// Throws std::invalid_argument when the config violates its invariants.
void validate(const SearchConfig& cfg, std::size_t catalog_size);

/// Selection value of a child. `history_score` is hr_m / hn_m, or nullopt
/// when the action has never been played (no history bonus). Unvisited
/// children (visits == 0) score +infinity.
double uct_ph_value(double visits, double total_reward, double parent_visits,
                    std::optional<double> history_score, double exploration,
                    double history_weight);

/// Global per-action play counts and rewards.
class HistoryTable {
 public:
  explicit HistoryTable(std::size_t services) : plays_(services, 0.0), rewards_(services, 0.0) {}

  void update(ServiceId action, double reward) {
    plays_[action.index()] += 1.0;
    rewards_[action.index()] += reward;
  }
  double plays(ServiceId a) const { return plays_[a.index()]; }
  double rewards(ServiceId a) const { return rewards_[a.index()]; }
  /// hr / hn, or nullopt if never played.
  std::optional<double> score(ServiceId a) const {
    if (plays_[a.index()] == 0.0) return std::nullopt;
    return rewards_[a.index()] / plays_[a.index()];
  }
  std::size_t size() const { return plays_.size(); }

 private:
  std::vector<double> plays_;
  std::vector<double> rewards_;
};

struct Node {
  static constexpr int kNone = -1;

  std::optional<ServiceId> service;  // empty at the tree root
  int parent = kNone;
  std::size_t depth = 0;
  std::uint64_t visits = 0;
  double total_reward = 0.0;
  std::vector<int> children;
  /// Best complete plan of any simulation through this node.
  double best_reward = -std::numeric_limits<double>::infinity();
  std::vector<ServiceId> best_plan;
  /// Reward of a terminal node, once evaluated.
  std::optional<double> terminal_reward;
};

struct PhaseTrace {
  int phase = 0;
  std::uint64_t simulations = 0;
  std::optional<ServiceId> committed;
  double best_risk = 0.0;
  bool stopped_early = false;
};

struct SearchResult {
  CarePlan plan;
  double risk = 0.0;
  double initial_risk = 0.0;
  /// Percentage points: 100 * (initial_risk - risk).
  double risk_reduction = 0.0;
  std::uint64_t simulations = 0;
  std::uint64_t evaluations = 0;
  double seconds = 0.0;
  std::string algorithm;
  std::vector<PhaseTrace> phases;
  /// Services on the path from the tree root to the final search root.
  std::vector<ServiceId> root_path;
  /// Accumulated edge distance (Dijkstra only).
  std::optional<double> distance;
};

/// Single-player MCTS over service sequences. One instance is one search and
/// must not be shared between threads.
class Mcts {
 public:
  Mcts(const CompiledScorer& scorer, const SearchConfig& cfg);

  /// One selection / expansion / roll-out / backpropagation pass from the
  /// current root; returns the simulation reward.
  double simulate_once();

  /// Makes `child` (a child of the current root) the new root, keeping its
  /// subtree.
  void commit(int child);

  /// Child of the current root with the most visits (ties: higher mean
  /// reward, then lower service id), or Node::kNone.
  int most_visited_child(int node) const;

  /// Max-visit descent from the root, completed with the best roll-out seen
  /// below the deepest node reached.
  std::vector<ServiceId> extract_plan() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  int root() const { return root_; }
  const HistoryTable& history() const { return history_; }
  std::uint64_t simulations() const { return simulations_; }
  std::uint64_t evaluations() const { return evaluations_; }
  /// Best complete plan of any simulation so far (anytime result).
  double best_reward() const { return best_reward_; }
  const std::vector<ServiceId>& best_plan() const { return best_plan_; }
  /// Services from the tree root down to `node`.
  std::vector<ServiceId> path_services(int node) const;

 private:
  int select_untried(int node, const std::vector<char>& in_plan) const;
  int best_uct_child(int node) const;
  ServiceId rollout_action(const std::vector<char>& in_plan);

  const CompiledScorer& scorer_;
  SearchConfig cfg_;
  bool history_enabled_;
  std::size_t services_;
  std::vector<Node> nodes_;
  int root_ = 0;
  HistoryTable history_;
  Rng rng_;
  std::uint64_t simulations_ = 0;
  std::uint64_t evaluations_ = 0;
  double best_reward_ = -std::numeric_limits<double>::infinity();
  std::vector<ServiceId> best_plan_;
};

/// Plain MCTS under the config's budget (vanilla or PH/MAST).
SearchResult mcts_search(const EnsembleModel& model, const PatientRecord& patient,
                         std::size_t catalog_size, const SearchConfig& cfg);

/// Budget split over the remaining plan slots; after each phase the most
/// visited child becomes the new root.
SearchResult time_controlled_search(const EnsembleModel& model, const PatientRecord& patient,
                                    std::size_t catalog_size, const SearchConfig& cfg);

/// Dispatches on cfg.mode.
SearchResult run_search(const EnsembleModel& model, const PatientRecord& patient,
                        std::size_t catalog_size, const SearchConfig& cfg);

class FrontierOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DijkstraConfig {
  std::size_t plan_size = 8;
  std::size_t max_frontier = 4'000'000;
  /// Stop after this many risk evaluations and complete the best deepest
  /// settled plan greedily.
  std::optional<std::uint64_t> max_evaluations;
};

/// Edge weight between plans i -> j: 1 - (risk_i - risk_j).
inline double edge_distance(double risk_from, double risk_to) { return 1.0 - (risk_from - risk_to); }

/// Shortest path from the empty plan over the DAG of canonical partial plans;
/// returns the first size-d plan settled.
SearchResult dijkstra_search(const EnsembleModel& model, const PatientRecord& patient,
                             std::size_t catalog_size, const DijkstraConfig& cfg);

/// Fills risk, initial risk and reduction from the reference scorer.
void finalize(SearchResult& result, const EnsembleModel& model, const PatientRecord& patient);

nlohmann::json result_to_json(const SearchResult& result, const ServiceCatalog& catalog);

}  // namespace svcsel::search
