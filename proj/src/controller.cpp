#include "cafe/controller.hpp"

#include "cafe/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cafe {

PolicyKind parse_policy_kind(const std::string& name) {
    if (name == "cafe") return PolicyKind::cafe;
    if (name == "smu") return PolicyKind::smu;
    if (name == "smn") return PolicyKind::smn;
    if (name == "amu") return PolicyKind::amu;
    if (name == "amn") return PolicyKind::amn;
    if (name == "fixed_k_utility") return PolicyKind::fixed_k_utility;
    if (name == "carbon_only_k") return PolicyKind::carbon_only_k;
    if (name == "offline_oracle") return PolicyKind::offline_oracle;
    throw std::invalid_argument(fmt::format("unknown policy kind '{}'", name));
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::cafe: return "cafe";
    case PolicyKind::smu: return "smu";
    case PolicyKind::smn: return "smn";
    case PolicyKind::amu: return "amu";
    case PolicyKind::amn: return "amn";
    case PolicyKind::fixed_k_utility: return "fixed_k_utility";
    case PolicyKind::carbon_only_k: return "carbon_only_k";
    case PolicyKind::offline_oracle: return "offline_oracle";
    }
    return "unknown";
}

std::string PolicySpec::label() const {
    switch (kind) {
    case PolicyKind::cafe:
        switch (solver) {
        case SolverId::exhaustive: return "cafe-exh";
        case SolverId::det_double_greedy: return "cafe-ddg";
        case SolverId::rand_double_greedy: return "cafe-rdg";
        case SolverId::budget_greedy: return "cafe-bg";
        }
        break;
    case PolicyKind::fixed_k_utility: return fmt::format("util-k{}", k.value_or(0));
    case PolicyKind::carbon_only_k: return fmt::format("carbon-k{}", k.value_or(0));
    case PolicyKind::offline_oracle: return "opt";
    default: return to_string(kind);
    }
    return to_string(kind);
}

void PolicySpec::validate(std::size_t n_centers) const {
    const bool needs_k = kind == PolicyKind::fixed_k_utility || kind == PolicyKind::carbon_only_k;
    if (needs_k != k.has_value()) {
        throw std::invalid_argument(fmt::format("policy {}: k must be given exactly for the extreme-case kinds",
                                                to_string(kind)));
    }
    if (k && (*k < 1 || *k > n_centers)) {
        throw std::invalid_argument(fmt::format("policy {}: k={} outside 1..{}", to_string(kind), *k, n_centers));
    }
    if (kind == PolicyKind::cafe && solver == SolverId::budget_greedy) {
        throw std::invalid_argument("cafe needs an unconstrained per-slot solver");
    }
    if (kind == PolicyKind::offline_oracle && n_centers > kMaxOracleCenters) {
        throw std::invalid_argument(
            fmt::format("offline oracle limited to {} centers, fleet has {}", kMaxOracleCenters, n_centers));
    }
}

void RunContext::validate() const {
    params.validate();
    const std::size_t n = task.centers.size();
    if (n < 1) {
        throw std::invalid_argument("task has no centers");
    }
    if (energy.size() != n || trace.n_centers() != n) {
        throw std::invalid_argument(fmt::format("shape mismatch: task has {} centers, energy model {}, trace {}", n,
                                                energy.size(), trace.n_centers()));
    }
    if (trace.horizon() < params.T) {
        throw std::invalid_argument(
            fmt::format("trace covers {} slots but the horizon is {}", trace.horizon(), params.T));
    }
    utility.validate(n);
    train.validate(task.centers.front().size());
    if (init.dim != task.test.dim || init.n_classes != task.n_classes) {
        throw std::invalid_argument("initial model does not match the task shape");
    }
}

namespace {

struct Decision {
    SelectionVector selection;
    double objective = 0.0;
};

struct SlotView {
    std::size_t t;
    const GradientSnapshot& snapshot;
    double q;
    double cumulative_carbon;
};

using DecideFn = std::function<Decision(const SlotView&)>;

/// Common slot loop: probe, decide, train, account carbon and queue.
PolicyRun simulate(const RunContext& ctx, const PolicySpec& spec, const DecideFn& decide) {
    ctx.validate();
    spec.validate(ctx.task.centers.size());
    PolicyRun run;
    run.policy = spec;
    run.seed = ctx.seed;
    run.floor_violations = static_floor_violations(ctx.energy, ctx.trace, ctx.params);
    if (!run.floor_violations.empty()) {
        run.warnings.push_back(fmt::format("static floor exceeds H/T in {} of {} slots (first: slot {})",
                                           run.floor_violations.size(), ctx.params.T,
                                           run.floor_violations.front()));
    }

    ModelState model = ctx.init;
    VirtualQueue queue(ctx.params.q0);
    double cumulative = 0.0;
    for (std::size_t t = 0; t < ctx.params.T; ++t) {
        auto snapshot = probe_all(model, ctx.task.centers, ctx.train.probe_fraction, ctx.seed, t);
        auto decision = decide(SlotView{t, snapshot, queue.q(), cumulative});

        model = run_local_round(model, decision.selection, ctx.task.centers, ctx.train, ctx.seed, t);
        const double carbon = carbon_total(ctx.energy, ctx.trace, t, decision.selection);
        queue = queue_update(queue, carbon, ctx.params);
        cumulative += carbon;

        SlotRecord rec;
        rec.t = t;
        rec.utility = utility(snapshot, decision.selection, ctx.utility);
        rec.selection = std::move(decision.selection);
        rec.carbon_kg = carbon;
        rec.queue_after = queue.q();
        rec.objective_value = decision.objective;
        rec.cumulative_carbon_kg = cumulative;
        rec.train_loss = global_loss(model, ctx.task.centers);
        rec.test_accuracy = accuracy(model, ctx.task.test);
        run.slots.push_back(std::move(rec));
        run.snapshots.push_back(std::move(snapshot));
    }
    return run;
}

PolicyRun run_myopic(const RunContext& ctx, BudgetObjective objective, bool adaptive) {
    PolicySpec spec;
    if (adaptive) {
        spec.kind = objective == BudgetObjective::utility ? PolicyKind::amu : PolicyKind::amn;
    } else {
        spec.kind = objective == BudgetObjective::utility ? PolicyKind::smu : PolicyKind::smn;
    }
    std::size_t infeasible = 0;
    auto run = simulate(ctx, spec, [&](const SlotView& s) {
        const double remaining_slots = static_cast<double>(ctx.params.T - s.t);
        const double budget = adaptive ? (ctx.params.H - s.cumulative_carbon) / remaining_slots
                                       : ctx.params.per_slot_budget();
        const auto costs = incremental_carbon(ctx.energy, ctx.trace, s.t);
        const double floor = static_floor(ctx.energy, ctx.trace, s.t);
        const auto oracle = objective == BudgetObjective::utility ? make_utility_oracle(s.snapshot, ctx.utility)
                                                                  : make_count_oracle(s.snapshot.size());
        auto r = solve_budget_greedy(oracle, costs, budget, objective, floor);
        if (!r.feasible) {
            ++infeasible;
        }
        return Decision{std::move(r.selection), r.value};
    });
    run.infeasible_slots = infeasible;
    return run;
}

} // namespace

PolicyRun run_cafe(const RunContext& ctx, SolverId solver) {
    PolicySpec spec;
    spec.kind = PolicyKind::cafe;
    spec.solver = solver;
    std::optional<double> min_sum;
    auto run = simulate(ctx, spec, [&](const SlotView& s) {
        const auto oracle = make_p2_oracle(s.snapshot, s.q, s.t, ctx.params, ctx.energy, ctx.trace, ctx.utility);
        auto r = solve(oracle, solver, derive_seed(ctx.seed, Stream::solver, {s.t}));
        if (r.min_step_sum) {
            min_sum = min_sum ? std::min(*min_sum, *r.min_step_sum) : *r.min_step_sum;
        }
        return Decision{std::move(r.selection), r.value};
    });
    run.min_step_sum = min_sum;
    return run;
}

PolicyRun run_static_myopic(const RunContext& ctx, BudgetObjective objective) {
    return run_myopic(ctx, objective, false);
}

PolicyRun run_adaptive_myopic(const RunContext& ctx, BudgetObjective objective) {
    return run_myopic(ctx, objective, true);
}

SelectionVector best_k_subset(const GradientSnapshot& snapshot, const UtilityConfig& cfg, std::size_t k,
                              bool& exhaustive) {
    const std::size_t n = snapshot.size();
    if (k < 1 || k > n) {
        throw std::invalid_argument(fmt::format("k={} outside 1..{}", k, n));
    }
    exhaustive = n <= kMaxOracleCenters;
    if (exhaustive) {
        SelectionVector best;
        double best_value = -std::numeric_limits<double>::infinity();
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
            if (static_cast<std::size_t>(std::popcount(mask)) != k) {
                continue;
            }
            auto a = SelectionVector::from_mask(n, mask);
            const double v = utility(snapshot, a, cfg);
            if (v > best_value) {
                best_value = v;
                best = std::move(a);
            }
        }
        return best;
    }
    auto a = SelectionVector::none(n);
    for (std::size_t step = 0; step < k; ++step) {
        std::size_t pick = n;
        double best_value = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (a[i]) continue;
            auto trial = a;
            trial.set(i, true);
            const double v = utility(snapshot, trial, cfg);
            if (v > best_value) {
                best_value = v;
                pick = i;
            }
        }
        a.set(pick, true);
    }
    return a;
}

SelectionVector cheapest_k(std::span<const double> incremental, std::size_t k) {
    const std::size_t n = incremental.size();
    if (k < 1 || k > n) {
        throw std::invalid_argument(fmt::format("k={} outside 1..{}", k, n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return incremental[x] < incremental[y]; });
    auto a = SelectionVector::none(n);
    for (std::size_t r = 0; r < k; ++r) {
        a.set(order[r], true);
    }
    return a;
}

PolicyRun run_extreme(const RunContext& ctx, PolicyKind kind, std::size_t k) {
    if (kind != PolicyKind::fixed_k_utility && kind != PolicyKind::carbon_only_k) {
        throw std::invalid_argument("run_extreme handles fixed_k_utility and carbon_only_k only");
    }
    PolicySpec spec;
    spec.kind = kind;
    spec.k = k;
    bool exhaustive = false;
    auto run = simulate(ctx, spec, [&](const SlotView& s) {
        SelectionVector a;
        if (kind == PolicyKind::fixed_k_utility) {
            a = best_k_subset(s.snapshot, ctx.utility, k, exhaustive);
        } else {
            a = cheapest_k(incremental_carbon(ctx.energy, ctx.trace, s.t), k);
        }
        const double value = utility(s.snapshot, a, ctx.utility);
        return Decision{std::move(a), value};
    });
    run.exhaustive_subsets = kind == PolicyKind::fixed_k_utility && exhaustive;
    return run;
}

FullReference full_reference(const RunContext& ctx) {
    ctx.validate();
    FullReference ref;
    const auto after = full_participation_trajectory(ctx.task, ctx.train, ctx.init, ctx.params.T, ctx.seed);
    ref.start_models.reserve(ctx.params.T);
    ref.start_models.push_back(ctx.init);
    for (std::size_t t = 1; t < ctx.params.T; ++t) {
        ref.start_models.push_back(after[t - 1]);
    }
    for (std::size_t t = 0; t < ctx.params.T; ++t) {
        ref.snapshots.push_back(probe_all(ref.start_models[t], ctx.task.centers, ctx.train.probe_fraction, ctx.seed, t));
    }
    return ref;
}

OfflineBenchmark offline_benchmark(const RunContext& ctx, const FullReference& reference, std::optional<double> grid) {
    std::vector<std::vector<SlotCandidate>> per_slot;
    per_slot.reserve(ctx.params.T);
    for (std::size_t t = 0; t < ctx.params.T; ++t) {
        per_slot.push_back(enumerate_candidates(reference.snapshots.at(t), ctx.utility, ctx.energy, ctx.trace, t));
    }
    OfflineBenchmark bench;
    bench.plan = solve_offline_oracle(per_slot, ctx.params.H, grid.value_or(ctx.params.H / 10000.0));
    bench.opt_value = bench.plan.total_utility / static_cast<double>(ctx.params.T);
    return bench;
}

PolicyRun run_offline_oracle(const RunContext& ctx) {
    PolicySpec spec;
    spec.kind = PolicyKind::offline_oracle;
    spec.validate(ctx.task.centers.size());
    const auto reference = full_reference(ctx);
    const auto bench = offline_benchmark(ctx, reference);
    auto run = simulate(ctx, spec, [&](const SlotView& s) {
        const auto& a = bench.plan.selections.at(s.t);
        return Decision{a, utility(reference.snapshots.at(s.t), a, ctx.utility)};
    });
    run.opt_value = bench.opt_value;
    return run;
}

PolicyRun run_policy(const RunContext& ctx, const PolicySpec& spec) {
    spec.validate(ctx.task.centers.size());
    switch (spec.kind) {
    case PolicyKind::cafe: return run_cafe(ctx, spec.solver);
    case PolicyKind::smu: return run_static_myopic(ctx, BudgetObjective::utility);
    case PolicyKind::smn: return run_static_myopic(ctx, BudgetObjective::count);
    case PolicyKind::amu: return run_adaptive_myopic(ctx, BudgetObjective::utility);
    case PolicyKind::amn: return run_adaptive_myopic(ctx, BudgetObjective::count);
    case PolicyKind::fixed_k_utility:
    case PolicyKind::carbon_only_k: return run_extreme(ctx, spec.kind, *spec.k);
    case PolicyKind::offline_oracle: return run_offline_oracle(ctx);
    }
    throw std::invalid_argument("unknown policy kind");
}

} // namespace cafe
