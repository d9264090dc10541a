#pragma once

/// @file controller.hpp
/// @brief Slot-by-slot orchestration of the carbon-aware controller and of
/// the comparator policies over a T-slot horizon.

#include "cafe/fedsim.hpp"
#include "cafe/fleet.hpp"
#include "cafe/lyapunov.hpp"
#include "cafe/solvers.hpp"
#include "cafe/utility.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cafe {

enum class PolicyKind { cafe, smu, smn, amu, amn, fixed_k_utility, carbon_only_k, offline_oracle };

PolicyKind parse_policy_kind(const std::string& name);
std::string to_string(PolicyKind kind);

struct PolicySpec {
    PolicyKind kind = PolicyKind::cafe;
    SolverId solver = SolverId::det_double_greedy; ///< used by cafe only
    std::optional<std::size_t> k;                  ///< extreme-case policies only

    /// Short stable name used in metrics files, e.g. "cafe-ddg", "amu", "util-k4".
    [[nodiscard]] std::string label() const;
    void validate(std::size_t n_centers) const;
};

struct SlotRecord {
    std::size_t t = 0;
    SelectionVector selection;
    double utility = 0.0;
    double carbon_kg = 0.0;
    double queue_after = 0.0;
    double objective_value = 0.0;
    double cumulative_carbon_kg = 0.0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
};

/// Everything one policy run reads. References must outlive the run.
struct RunContext {
    const TaskData& task;
    const EnergyModel& energy;
    const CarbonTrace& trace;
    ControlParams params;
    TrainConfig train;
    UtilityConfig utility;
    ModelState init;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PolicyRun {
    PolicySpec policy;
    std::uint64_t seed = 0;
    std::vector<SlotRecord> slots;
    /// Probed snapshot each slot's decision was made from.
    std::vector<GradientSnapshot> snapshots;
    std::vector<std::string> warnings;
    std::vector<std::size_t> floor_violations;
    /// Smallest u_j + v_j over all double-greedy steps of the run.
    std::optional<double> min_step_sum;
    /// Offline benchmark value (average utility) for offline_oracle runs.
    std::optional<double> opt_value;
    /// Whether fixed_k_utility searched k-subsets exhaustively.
    bool exhaustive_subsets = false;
    /// Slots where a myopic policy's budget was below the static floor.
    std::size_t infeasible_slots = 0;
};

PolicyRun run_cafe(const RunContext& ctx, SolverId solver);
PolicyRun run_static_myopic(const RunContext& ctx, BudgetObjective objective);
PolicyRun run_adaptive_myopic(const RunContext& ctx, BudgetObjective objective);
PolicyRun run_extreme(const RunContext& ctx, PolicyKind kind, std::size_t k);
PolicyRun run_offline_oracle(const RunContext& ctx);
PolicyRun run_policy(const RunContext& ctx, const PolicySpec& spec);

/// Full-participation reference: models at the start of every slot and the
/// probed snapshots taken from them with the same probe streams as live runs.
struct FullReference {
    std::vector<ModelState> start_models;
    std::vector<GradientSnapshot> snapshots;
};

FullReference full_reference(const RunContext& ctx);

struct OfflineBenchmark {
    OfflinePlan plan;
    double opt_value = 0.0; ///< plan.total_utility / T
};

/// Solves the offline problem over the full-participation trajectory with
/// known intensities. Requires N <= kMaxOracleCenters.
OfflineBenchmark offline_benchmark(const RunContext& ctx, const FullReference& reference,
                                   std::optional<double> grid = std::nullopt);

/// k-subset of maximum utility; exhaustive over subsets when N <= 12,
/// marginal-gain greedy otherwise.
SelectionVector best_k_subset(const GradientSnapshot& snapshot, const UtilityConfig& cfg, std::size_t k,
                              bool& exhaustive);

/// The k centers with the smallest incremental carbon; ties to the lower index.
SelectionVector cheapest_k(std::span<const double> incremental, std::size_t k);

} // namespace cafe
