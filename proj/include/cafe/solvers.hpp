#pragma once

/// @file solvers.hpp
/// @brief Per-slot selection solvers (exhaustive, deterministic and randomized
/// double greedy, budget-constrained greedy) and the offline DP oracle.

#include "cafe/fleet.hpp"
#include "cafe/lyapunov.hpp"
#include "cafe/utility.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cafe {

/// Set function g over selections of a fixed fleet size. Evaluation must be
/// deterministic and side-effect free.
class ObjectiveOracle {
public:
    using Fn = std::function<double(const SelectionVector&)>;

    ObjectiveOracle(std::size_t n, Fn fn) : n_(n), fn_(std::move(fn)) {}

    [[nodiscard]] std::size_t size() const { return n_; }
    double operator()(const SelectionVector& a) const { return fn_(a); }

private:
    std::size_t n_;
    Fn fn_;
};

/// g(a) = V * U(a) - q * c^t(a). The referenced objects must outlive the oracle.
ObjectiveOracle make_p2_oracle(const GradientSnapshot& snapshot, double q, std::size_t t,
                               const ControlParams& params, const EnergyModel& energy, const CarbonTrace& trace,
                               const UtilityConfig& cfg);
/// g(a) = U(a).
ObjectiveOracle make_utility_oracle(const GradientSnapshot& snapshot, const UtilityConfig& cfg);
/// g(a) = |a|.
ObjectiveOracle make_count_oracle(std::size_t n);

enum class SolverId { exhaustive, det_double_greedy, rand_double_greedy, budget_greedy };

SolverId parse_solver_id(const std::string& name);
std::string to_string(SolverId id);
/// gamma of the per-slot guarantee: 1 exhaustive, 3 deterministic DG,
/// 2 randomized DG (in expectation); none for the budget greedy.
std::optional<double> approximation_gamma(SolverId id);

struct SolveResult {
    SelectionVector selection;
    double value = 0.0;
    std::size_t evaluations = 0;
    SolverId solver = SolverId::exhaustive;
    /// Smallest u_j + v_j seen during a double-greedy sweep. Nonnegative
    /// whenever the objective is submodular.
    std::optional<double> min_step_sum;
    /// False when the budget greedy was given a budget below the static floor.
    bool feasible = true;
};

/// Largest fleet the exhaustive solver accepts.
inline constexpr std::size_t kMaxExhaustiveCenters = 24;

/// Evaluates all 2^N selections including the empty one; ties keep the
/// selection with the smallest bitmask.
SolveResult solve_exhaustive(const ObjectiveOracle& oracle);

/// Two-vector sweep in ascending center index.
SolveResult solve_det_double_greedy(const ObjectiveOracle& oracle);

/// Randomized sweep; accepts with probability u+/(u+ + v+), and with
/// probability 1 when both are zero.
SolveResult solve_rand_double_greedy(const ObjectiveOracle& oracle, std::uint64_t seed);

enum class BudgetObjective { utility, count };

/// Cost-benefit greedy under a per-slot carbon budget. @p static_floor is
/// charged up front; @p per_center_cost is each center's incremental carbon.
SolveResult solve_budget_greedy(const ObjectiveOracle& oracle, std::span<const double> per_center_cost,
                                double budget, BudgetObjective objective, double static_floor = 0.0);

/// Dispatches on @p id for the unconstrained per-slot problem.
SolveResult solve(const ObjectiveOracle& oracle, SolverId id, std::uint64_t seed);

struct SlotCandidate {
    SelectionVector selection;
    double utility = 0.0;
    double carbon = 0.0;
};

struct OfflinePlan {
    std::vector<SelectionVector> selections;
    double total_utility = 0.0;
    double total_carbon = 0.0;
    double grid = 0.0;
    /// Carbon the plan left unspent because of rounding each slot up to the grid.
    double grid_slack = 0.0;
};

class InfeasibleBudget : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Largest fleet for which per-slot candidates are enumerated exhaustively.
inline constexpr std::size_t kMaxOracleCenters = 12;

/// Knapsack-style DP over slots and grid-discretized budget. Candidate carbon
/// is rounded up to the grid so the plan never exceeds @p budget.
OfflinePlan solve_offline_oracle(std::span<const std::vector<SlotCandidate>> per_slot, double budget,
                                 double grid);

/// All 2^N selections of one slot with their utility and carbon.
std::vector<SlotCandidate> enumerate_candidates(const GradientSnapshot& snapshot, const UtilityConfig& cfg,
                                                const EnergyModel& energy, const CarbonTrace& trace, std::size_t t);

} // namespace cafe
