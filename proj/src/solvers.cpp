#include "cafe/solvers.hpp"

#include "cafe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cafe {

ObjectiveOracle make_p2_oracle(const GradientSnapshot& snapshot, double q, std::size_t t,
                               const ControlParams& params, const EnergyModel& energy, const CarbonTrace& trace,
                               const UtilityConfig& cfg) {
    return ObjectiveOracle(snapshot.size(), [&snapshot, q, t, &params, &energy, &trace, &cfg](const SelectionVector& a) {
        return per_slot_objective(snapshot, a, q, t, params, energy, trace, cfg);
    });
}

ObjectiveOracle make_utility_oracle(const GradientSnapshot& snapshot, const UtilityConfig& cfg) {
    return ObjectiveOracle(snapshot.size(),
                           [&snapshot, &cfg](const SelectionVector& a) { return utility(snapshot, a, cfg); });
}

ObjectiveOracle make_count_oracle(std::size_t n) {
    return ObjectiveOracle(n, [](const SelectionVector& a) { return static_cast<double>(a.count()); });
}

SolverId parse_solver_id(const std::string& name) {
    if (name == "exhaustive") return SolverId::exhaustive;
    if (name == "det_double_greedy") return SolverId::det_double_greedy;
    if (name == "rand_double_greedy") return SolverId::rand_double_greedy;
    if (name == "budget_greedy") return SolverId::budget_greedy;
    throw std::invalid_argument(fmt::format("unknown solver '{}'", name));
}

std::string to_string(SolverId id) {
    switch (id) {
    case SolverId::exhaustive: return "exhaustive";
    case SolverId::det_double_greedy: return "det_double_greedy";
    case SolverId::rand_double_greedy: return "rand_double_greedy";
    case SolverId::budget_greedy: return "budget_greedy";
    }
    return "unknown";
}

std::optional<double> approximation_gamma(SolverId id) {
    switch (id) {
    case SolverId::exhaustive: return 1.0;
    case SolverId::det_double_greedy: return 3.0;
    case SolverId::rand_double_greedy: return 2.0;
    case SolverId::budget_greedy: return std::nullopt;
    }
    return std::nullopt;
}

SolveResult solve_exhaustive(const ObjectiveOracle& oracle) {
    const std::size_t n = oracle.size();
    if (n > kMaxExhaustiveCenters) {
        throw std::invalid_argument(
            fmt::format("exhaustive search over {} centers exceeds the limit of {}", n, kMaxExhaustiveCenters));
    }
    const std::uint64_t total = std::uint64_t{1} << n;
    SolveResult best;
    best.solver = SolverId::exhaustive;
    best.value = -std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        auto a = SelectionVector::from_mask(n, mask);
        const double v = oracle(a);
        ++best.evaluations;
        if (v > best.value) {
            best.value = v;
            best.selection = std::move(a);
        }
    }
    return best;
}

namespace {

/// Shared sweep for both double-greedy variants. @p accept decides, from
/// (u_j, v_j), whether to add j to the lower vector (true) or drop it from
/// the upper vector (false).
template <typename Accept>
SolveResult double_greedy(const ObjectiveOracle& oracle, SolverId id, Accept&& accept) {
    const std::size_t n = oracle.size();
    auto lower = SelectionVector::none(n);
    auto upper = SelectionVector::all(n);
    SolveResult r;
    r.solver = id;
    double g_lower = oracle(lower);
    double g_upper = oracle(upper);
    r.evaluations = 2;
    double min_sum = std::numeric_limits<double>::infinity();

    for (std::size_t j = 0; j < n; ++j) {
        auto lower_plus = lower;
        lower_plus.set(j, true);
        auto upper_minus = upper;
        upper_minus.set(j, false);
        const double g_lower_plus = oracle(lower_plus);
        const double g_upper_minus = oracle(upper_minus);
        r.evaluations += 2;
        const double u = g_lower_plus - g_lower;
        const double v = g_upper_minus - g_upper;
        min_sum = std::min(min_sum, u + v);
        if (accept(u, v)) {
            lower = std::move(lower_plus);
            g_lower = g_lower_plus;
        } else {
            upper = std::move(upper_minus);
            g_upper = g_upper_minus;
        }
    }
    if (lower != upper) {
        throw std::logic_error("double greedy finished with diverging vectors");
    }
    r.selection = std::move(lower);
    r.value = g_lower;
    if (n > 0) {
        r.min_step_sum = min_sum;
    }
    return r;
}

} // namespace

SolveResult solve_det_double_greedy(const ObjectiveOracle& oracle) {
    return double_greedy(oracle, SolverId::det_double_greedy, [](double u, double v) { return u >= v; });
}

SolveResult solve_rand_double_greedy(const ObjectiveOracle& oracle, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    return double_greedy(oracle, SolverId::rand_double_greedy, [&](double u, double v) {
        const double up = std::max(u, 0.0);
        const double vp = std::max(v, 0.0);
        // One draw per step keeps the random stream aligned across instances.
        const double draw = coin(rng);
        if (up + vp == 0.0) {
            return true;
        }
        return draw < up / (up + vp);
    });
}

SolveResult solve_budget_greedy(const ObjectiveOracle& oracle, std::span<const double> per_center_cost,
                                double budget, BudgetObjective objective, double static_floor) {
    const std::size_t n = oracle.size();
    if (per_center_cost.size() != n) {
        throw std::invalid_argument("per-center cost list must have one entry per center");
    }
    for (double c : per_center_cost) {
        if (!(c >= 0.0)) {
            throw std::invalid_argument("per-center costs must be >= 0");
        }
    }
    SolveResult r;
    r.solver = SolverId::budget_greedy;
    auto a = SelectionVector::none(n);
    double remaining = budget - static_floor;
    if (remaining < 0.0) {
        r.selection = a;
        r.value = oracle(a);
        r.evaluations = 1;
        r.feasible = false;
        return r;
    }

    if (objective == BudgetObjective::count) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return per_center_cost[x] < per_center_cost[y]; });
        for (auto i : order) {
            if (per_center_cost[i] > remaining) {
                break;
            }
            a.set(i, true);
            remaining -= per_center_cost[i];
        }
        r.selection = a;
        r.value = oracle(a);
        r.evaluations = 1;
        return r;
    }

    double current = oracle(a);
    r.evaluations = 1;
    while (true) {
        std::optional<std::size_t> pick;
        double best_ratio = -std::numeric_limits<double>::infinity();
        double best_value = current;
        for (std::size_t i = 0; i < n; ++i) {
            if (a[i] || per_center_cost[i] > remaining) {
                continue;
            }
            auto trial = a;
            trial.set(i, true);
            const double v = oracle(trial);
            ++r.evaluations;
            const double gain = v - current;
            if (!(gain > 0.0)) {
                continue;
            }
            const double ratio = per_center_cost[i] > 0.0 ? gain / per_center_cost[i]
                                                           : std::numeric_limits<double>::infinity();
            if (ratio > best_ratio) {
                best_ratio = ratio;
                best_value = v;
                pick = i;
            }
        }
        if (!pick) {
            break;
        }
        a.set(*pick, true);
        remaining -= per_center_cost[*pick];
        current = best_value;
    }
    r.selection = a;
    r.value = current;
    return r;
}

SolveResult solve(const ObjectiveOracle& oracle, SolverId id, std::uint64_t seed) {
    switch (id) {
    case SolverId::exhaustive: return solve_exhaustive(oracle);
    case SolverId::det_double_greedy: return solve_det_double_greedy(oracle);
    case SolverId::rand_double_greedy: return solve_rand_double_greedy(oracle, seed);
    case SolverId::budget_greedy:
        throw std::invalid_argument("budget_greedy needs a budget; call solve_budget_greedy directly");
    }
    throw std::invalid_argument("unknown solver");
}

std::vector<SlotCandidate> enumerate_candidates(const GradientSnapshot& snapshot, const UtilityConfig& cfg,
                                                const EnergyModel& energy, const CarbonTrace& trace, std::size_t t) {
    const std::size_t n = snapshot.size();
    if (n > kMaxOracleCenters) {
        throw std::invalid_argument(
            fmt::format("offline oracle enumerates at most {} centers, got {}", kMaxOracleCenters, n));
    }
    std::vector<SlotCandidate> out;
    out.reserve(std::size_t{1} << n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        auto a = SelectionVector::from_mask(n, mask);
        const double u = utility(snapshot, a, cfg);
        const double c = carbon_total(energy, trace, t, a);
        out.push_back({std::move(a), u, c});
    }
    return out;
}

OfflinePlan solve_offline_oracle(std::span<const std::vector<SlotCandidate>> per_slot, double budget,
                                 double grid) {
    if (!(grid > 0.0)) {
        throw std::invalid_argument("offline oracle grid must be positive");
    }
    if (!(budget >= 0.0)) {
        throw std::invalid_argument("offline oracle budget must be >= 0");
    }
    if (per_slot.empty()) {
        throw std::invalid_argument("offline oracle needs at least one slot");
    }
    const auto capacity = static_cast<std::size_t>(std::floor(budget / grid));

    // Per slot: Pareto frontier of (grid units, utility), ascending units.
    struct Option {
        std::size_t units;
        double utility;
        std::size_t index;
    };
    std::vector<std::vector<Option>> frontier(per_slot.size());
    std::size_t min_units_total = 0;
    for (std::size_t t = 0; t < per_slot.size(); ++t) {
        const auto& cands = per_slot[t];
        if (cands.empty()) {
            throw std::invalid_argument(fmt::format("slot {} has no candidates", t));
        }
        std::vector<Option> opts;
        for (std::size_t k = 0; k < cands.size(); ++k) {
            if (!std::isfinite(cands[k].utility) || !(cands[k].carbon >= 0.0)) {
                throw std::invalid_argument(fmt::format("slot {} candidate {} has invalid utility/carbon", t, k));
            }
            opts.push_back({static_cast<std::size_t>(std::ceil(cands[k].carbon / grid)), cands[k].utility, k});
        }
        std::stable_sort(opts.begin(), opts.end(), [](const Option& x, const Option& y) {
            if (x.units != y.units) return x.units < y.units;
            return x.utility > y.utility;
        });
        std::vector<Option> kept;
        for (const auto& o : opts) {
            if (kept.empty() || o.utility > kept.back().utility) {
                kept.push_back(o);
            }
        }
        min_units_total += kept.front().units;
        frontier[t] = std::move(kept);
    }
    if (min_units_total > capacity) {
        throw InfeasibleBudget(fmt::format("offline oracle infeasible: cheapest plan needs {} grid units, budget "
                                           "allows {}",
                                           min_units_total, capacity));
    }

    // best[u]: max utility of slots 0..t using at most u grid units.
    const std::size_t slots = per_slot.size();
    constexpr double kNeg = -std::numeric_limits<double>::infinity();
    std::vector<double> best(capacity + 1, 0.0);
    std::vector<std::vector<std::uint32_t>> choice(slots, std::vector<std::uint32_t>(capacity + 1, 0));
    for (std::size_t t = 0; t < slots; ++t) {
        std::vector<double> next(capacity + 1, kNeg);
        const auto& opts = frontier[t];
        for (std::size_t u = 0; u <= capacity; ++u) {
            for (std::size_t k = 0; k < opts.size(); ++k) {
                if (opts[k].units > u) {
                    break;
                }
                const double prev = best[u - opts[k].units];
                if (prev == kNeg) {
                    continue;
                }
                const double v = prev + opts[k].utility;
                if (v > next[u]) {
                    next[u] = v;
                    choice[t][u] = static_cast<std::uint32_t>(k);
                }
            }
        }
        best = std::move(next);
    }

    OfflinePlan plan;
    plan.grid = grid;
    plan.selections.resize(slots);
    std::size_t u = capacity;
    std::size_t used_units = 0;
    for (std::size_t t = slots; t-- > 0;) {
        const auto& opt = frontier[t][choice[t][u]];
        const auto& cand = per_slot[t][opt.index];
        plan.selections[t] = cand.selection;
        plan.total_utility += cand.utility;
        plan.total_carbon += cand.carbon;
        used_units += opt.units;
        u -= opt.units;
    }
    plan.grid_slack = static_cast<double>(used_units) * grid - plan.total_carbon;
    return plan;
}

} // namespace cafe
