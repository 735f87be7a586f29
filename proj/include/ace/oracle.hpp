#pragma once

// Exact solvers over the enumerable Spiders-and-Fly state space: value
// iteration on the joint MMDP and on its sequential expansion, plus the
// optimal ("oracle") policy and its step statistics.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ace/spiders_fly.hpp"

namespace ace::oracle {

using spiders::EnvState;
using spiders::GridConfig;

inline constexpr int kJointActions = spiders::kActions * spiders::kActions;
/// SE slots per base state: empty prefix, 5 one-action prefixes, 25 full prefixes.
inline constexpr int kSeSlots = 1 + spiders::kActions + kJointActions;

enum class Exec { serial, parallel };

/// joint index = a_spider0 * 5 + a_spider1
inline int joint_index(int a0, int a1) { return a0 * spiders::kActions + a1; }
inline std::array<int, 2> joint_actions(int joint) { return {joint / spiders::kActions, joint % spiders::kActions}; }

struct ValueTable {
    int side = 0;
    double discount = 0.0;
    double residual = 0.0;
    int sweeps = 0;
    std::vector<double> values;
    /// sup-norm Bellman residual after each sweep
    std::vector<double> residual_history;
};

struct MmdpSolution {
    ValueTable table;
    /// greedy joint index per state; -1 on terminal states
    std::vector<int> policy;
};

/// One-step lookahead for a single state: Q(s, joint) for all 25 joints.
/// Terminal (caught) states return all zeros.
std::array<double, kJointActions> joint_q(const GridConfig& cfg, const std::vector<double>& values, double discount,
                                          const EnvState& s);

/// Indices whose value is within `tol` of the maximum, ascending.
std::vector<int> greedy_set(std::span<const double> q, double tol);

MmdpSolution value_iteration_mmdp(const GridConfig& cfg, double discount, double tol, Exec exec = Exec::parallel);

/// Values over SE-states, layout values[state * kSeSlots + slot] with
/// slot 0 = empty prefix, 1 + a0 = one-action prefix, 6 + joint = full prefix.
/// Agents decide in index order (spider 0 first).
ValueTable value_iteration_semdp(const GridConfig& cfg, double discount, double tol, Exec exec = Exec::parallel);

inline std::int64_t se_slot(int depth, int a0 = 0, int a1 = 0) {
    switch (depth) {
        case 0: return 0;
        case 1: return 1 + a0;
        default: return 1 + spiders::kActions + joint_index(a0, a1);
    }
}

/// Greedy through the SE table: argmax a0 at depth 1, then argmax a1 given a0.
/// Ties toward the lowest id.
std::array<int, 2> sequential_greedy(const ValueTable& se, std::int64_t state);

/// One synchronous evaluation sweep of a fixed policy.
std::vector<double> policy_backup(const GridConfig& cfg, const std::vector<double>& values, double discount,
                                  const std::vector<int>& policy);

struct StepStatistics {
    double mean_steps = 0.0;        // capped at max_steps
    double success_rate = 0.0;      // P(catch within success_steps)
    int worst_case_steps = -1;      // max over starts and fly moves; -1 if unbounded within cap
    std::int64_t legal_starts = 0;
};

/// Exact expectations over a uniform legal start and the fly's random moves.
StepStatistics exact_step_statistics(const GridConfig& cfg, const std::vector<int>& policy, int success_steps = 10);

/// Best achievable P(catch within `steps`) averaged over uniform legal
/// starts, maximised over all (non-stationary) policies.
double max_success_probability(const GridConfig& cfg, int steps);

/// Smallest k such that from every legal start some policy catches the fly
/// within k steps whatever the fly does; -1 if none up to `limit`.
int minimax_capture_steps(const GridConfig& cfg, int limit);

struct Reference {
    MmdpSolution solution;
    StepStatistics stats;
};

/// Joint value iteration at discount^2 (one SE step per agent) and the exact
/// step statistics of its greedy policy.
Reference reference(const GridConfig& cfg, double discount, int success_steps = 10);

using Policy = std::function<std::array<int, 2>(const EnvState&)>;

struct MonteCarloResult {
    double mean_steps = 0.0;
    double std_error = 0.0;
    double success_rate = 0.0;
    int episodes = 0;
};

/// Episode e uses random stream derive_seed(seed, evaluation, e), so results
/// do not depend on the thread count.
MonteCarloResult oracle_average_steps(const GridConfig& cfg, const Policy& policy, int episodes, std::uint64_t seed,
                                      int success_steps = 10, Exec exec = Exec::parallel);

Policy table_policy(const GridConfig& cfg, const std::vector<int>& policy);

/// Flat table file: "ACEVTBL1", u32 side, f64 discount, u64 count, then
/// count little-endian f64 values.
void save_table(const std::string& path, int side, double discount, const std::vector<double>& values);
ValueTable load_table(const std::string& path);

}  // namespace ace::oracle
