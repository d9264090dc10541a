#include "cafe/solvers.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <random>

using namespace cafe;
using testing_helpers::random_p2_instance;

namespace {

ObjectiveOracle table_oracle(std::size_t n, std::vector<double> values) {
    return ObjectiveOracle(n, [values = std::move(values)](const SelectionVector& a) { return values.at(a.mask()); });
}

/// Sum of per-center weights: a modular objective.
ObjectiveOracle modular_oracle(std::vector<double> w, double offset = 0.0) {
    const std::size_t n = w.size();
    return ObjectiveOracle(n, [w = std::move(w), offset](const SelectionVector& a) {
        double s = offset;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (a[i]) s += w[i];
        return s;
    });
}

/// Counts evaluations independently of the solver's own counter.
struct CountingOracle {
    std::shared_ptr<std::size_t> calls = std::make_shared<std::size_t>(0);
    ObjectiveOracle wrap(const ObjectiveOracle& inner) const {
        auto c = calls;
        return ObjectiveOracle(inner.size(), [inner, c](const SelectionVector& a) {
            ++*c;
            return inner(a);
        });
    }
};

double brute_force_max(const ObjectiveOracle& o) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << o.size()); ++m) {
        best = std::max(best, o(SelectionVector::from_mask(o.size(), m)));
    }
    return best;
}

} // namespace

TEST_SUITE("solvers") {

TEST_CASE("exhaustive on a single center") {
    const auto o = table_oracle(1, {0.0, 5.0});
    const auto r = solve_exhaustive(o);
    CHECK(r.selection == SelectionVector::from_bits("1"));
    CHECK(r.value == 5.0);
    CHECK(r.evaluations == 2);
}

TEST_CASE("exhaustive matches a second enumeration and counts 2^N") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = random_p2_instance(3 + seed % 6, seed);
        const auto o = inst.oracle();
        CountingOracle counter;
        const auto r = solve_exhaustive(counter.wrap(o));
        CHECK(r.value == brute_force_max(o));
        CHECK(r.value == o(r.selection));
        CHECK(r.evaluations == (std::size_t{1} << o.size()));
        CHECK(*counter.calls == r.evaluations);
    }
    CHECK_THROWS(solve_exhaustive(modular_oracle(std::vector<double>(25, 1.0))));
}

TEST_CASE("huge queue selects nothing") {
    auto inst = random_p2_instance(6, 3);
    inst.q = 1e9;
    const auto o = inst.oracle();
    CHECK(solve_exhaustive(o).selection.empty_set());
    CHECK(solve_det_double_greedy(o).selection.empty_set());
}

TEST_CASE("exhaustive ties keep the smallest mask") {
    const auto o = table_oracle(2, {1.0, 3.0, 3.0, 2.0});
    CHECK(solve_exhaustive(o).selection.mask() == 1);
}

TEST_CASE("double greedy on one center picks the better option") {
    CHECK(solve_det_double_greedy(table_oracle(1, {2.0, 5.0})).selection.mask() == 1);
    CHECK(solve_det_double_greedy(table_oracle(1, {5.0, 2.0})).selection.mask() == 0);
    // Tie: u = v = 0 accepts.
    CHECK(solve_det_double_greedy(table_oracle(1, {3.0, 3.0})).selection.mask() == 1);
}

TEST_CASE("double greedy is exact on modular objectives") {
    const std::vector<double> w{3.0, -1.0, 0.5, -2.0, 0.0, 4.0};
    const auto o = modular_oracle(w, 1.0);
    const auto r = solve_det_double_greedy(o);
    CHECK(r.selection == SelectionVector::from_bits("101011"));
    CHECK(r.value == doctest::Approx(brute_force_max(o)));
    // u_j = -v_j on modular objectives, so u_j + v_j is zero at every step.
    CHECK(*r.min_step_sum == doctest::Approx(0.0));
}

TEST_CASE("deterministic double greedy reaches a third of the optimum") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto inst = random_p2_instance(10, 1000 + seed);
        const auto o = inst.oracle();
        const double opt = solve_exhaustive(o).value;
        CountingOracle counter;
        const auto r = solve_det_double_greedy(counter.wrap(o));
        CHECK(opt >= 0.0);
        CHECK(r.value >= opt / 3.0);
        CHECK(r.value == o(r.selection));
        CHECK(r.evaluations <= 2 * 10 + 2);
        CHECK(*counter.calls == r.evaluations);
        CHECK(*r.min_step_sum >= -1e-9);
    }
}

TEST_CASE("randomized double greedy") {
    const auto inst = random_p2_instance(8, 42);
    const auto o = inst.oracle();
    const auto a = solve_rand_double_greedy(o, 7);
    const auto b = solve_rand_double_greedy(o, 7);
    CHECK(a.selection == b.selection);
    CHECK(a.value == b.value);
    CHECK(a.value == o(a.selection));
    CHECK(a.evaluations <= 2 * 8 + 2);
    CHECK(*a.min_step_sum >= -1e-9);

    // u > 0 and v <= 0 at every step: each center is accepted with probability 1.
    const auto increasing = modular_oracle({1.0, 2.0, 3.0});
    for (std::uint64_t s = 0; s < 20; ++s) {
        CHECK(solve_rand_double_greedy(increasing, s).selection == SelectionVector::all(3));
    }
    // u+ = v+ = 0 accepts.
    for (std::uint64_t s = 0; s < 20; ++s) {
        CHECK(solve_rand_double_greedy(modular_oracle({0.0, 0.0}), s).selection == SelectionVector::all(2));
    }
}

TEST_CASE("randomized double greedy averages above half the optimum") {
    const auto inst = random_p2_instance(8, 5);
    const auto o = inst.oracle();
    const double opt = solve_exhaustive(o).value;
    double sum = 0.0, sq = 0.0;
    const int runs = 2000;
    for (int s = 0; s < runs; ++s) {
        const double v = solve_rand_double_greedy(o, static_cast<std::uint64_t>(s)).value;
        sum += v;
        sq += v * v;
    }
    const double mean = sum / runs;
    const double se = std::sqrt(std::max(0.0, sq / runs - mean * mean) / (runs - 1));
    CHECK(mean >= 0.5 * opt - 3.0 * se);
}

TEST_CASE("budget greedy") {
    const auto count = make_count_oracle(4);
    const std::vector<double> cost{2.0, 1.0, 1.0, 3.0};

    SUBCASE("budget below the cheapest incremental cost") {
        const auto r = solve_budget_greedy(count, cost, 0.5, BudgetObjective::count);
        CHECK(r.selection.empty_set());
        CHECK(r.feasible);
    }
    SUBCASE("budget below the static floor") {
        const auto r = solve_budget_greedy(count, cost, 5.0, BudgetObjective::count, 6.0);
        CHECK(r.selection.empty_set());
        CHECK_FALSE(r.feasible);
    }
    SUBCASE("count mode takes the cheapest first") {
        const auto r = solve_budget_greedy(count, cost, 4.0, BudgetObjective::count);
        CHECK(r.selection == SelectionVector::from_bits("1110"));
    }
    SUBCASE("uniform costs pick the lowest indices") {
        const std::vector<double> flat(4, 1.0);
        const auto r = solve_budget_greedy(count, flat, 2.5, BudgetObjective::count);
        CHECK(r.selection == SelectionVector::from_bits("1100"));
    }
    SUBCASE("utility mode stays within budget and below the optimum") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto inst = random_p2_instance(6, 300 + seed);
            const auto u = make_utility_oracle(inst.snapshot, inst.cfg);
            const auto inc = incremental_carbon(inst.energy, inst.trace, 0);
            const double budget = 0.5 * std::accumulate(inc.begin(), inc.end(), 0.0);
            const auto r = solve_budget_greedy(u, inc, budget, BudgetObjective::utility);
            double spent = 0.0;
            for (auto i : r.selection.selected()) spent += inc[i];
            CHECK(spent <= budget + 1e-12);
            CHECK(r.value == u(r.selection));
            double best = -1.0;
            for (std::uint64_t m = 0; m < 64; ++m) {
                const auto a = SelectionVector::from_mask(6, m);
                double c = 0.0;
                for (auto i : a.selected()) c += inc[i];
                if (c <= budget) best = std::max(best, u(a));
            }
            CHECK(r.value <= best + 1e-12);
            CHECK_FALSE(r.selection.empty_set());
        }
    }
    CHECK_THROWS(solve_budget_greedy(count, std::vector<double>{1.0}, 1.0, BudgetObjective::count));
    CHECK_THROWS(solve_budget_greedy(count, std::vector<double>{1.0, -1.0, 1.0, 1.0}, 1.0, BudgetObjective::count));
}

TEST_CASE("solver ids") {
    for (auto id : {SolverId::exhaustive, SolverId::det_double_greedy, SolverId::rand_double_greedy,
                    SolverId::budget_greedy}) {
        CHECK(parse_solver_id(to_string(id)) == id);
    }
    CHECK(approximation_gamma(SolverId::exhaustive) == 1.0);
    CHECK(approximation_gamma(SolverId::det_double_greedy) == 3.0);
    CHECK(approximation_gamma(SolverId::rand_double_greedy) == 2.0);
    CHECK_FALSE(approximation_gamma(SolverId::budget_greedy).has_value());
    CHECK_THROWS(parse_solver_id("simplex"));
    CHECK_THROWS(solve(make_count_oracle(2), SolverId::budget_greedy, 0));
}

TEST_CASE("offline oracle with one slot picks the best affordable candidate") {
    const std::vector<std::vector<SlotCandidate>> c{{{SelectionVector::from_bits("00"), 1.0, 1.0},
                                                     {SelectionVector::from_bits("10"), 5.0, 4.0},
                                                     {SelectionVector::from_bits("01"), 4.0, 2.0},
                                                     {SelectionVector::from_bits("11"), 9.0, 6.0}}};
    const auto plan = solve_offline_oracle(c, 4.0, 1.0);
    CHECK(plan.selections.front() == SelectionVector::from_bits("10"));
    CHECK(plan.total_utility == 5.0);
    CHECK(plan.total_carbon == 4.0);
    CHECK_THROWS_AS(solve_offline_oracle(c, 0.5, 0.1), InfeasibleBudget);
    CHECK_THROWS(solve_offline_oracle(c, 4.0, 0.0));
}

TEST_CASE("offline oracle with the all-select budget") {
    const auto snap = testing_helpers::random_snapshot(4, 3, 1);
    const auto cfg = UtilityConfig::for_fleet(4, snap.max_norm());
    const auto tr = testing_helpers::random_trace(3, 4, 2);
    const auto e = EnergyModel::gpu_default(4);
    std::vector<std::vector<SlotCandidate>> per_slot;
    double all = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
        per_slot.push_back(enumerate_candidates(snap, cfg, e, tr, t));
        all += carbon_total(e, tr, t, SelectionVector::all(4));
    }
    // Grid fine enough that rounding up every slot still fits.
    const auto plan = solve_offline_oracle(per_slot, all + 3.0, 1.0);
    CHECK(plan.total_utility == doctest::Approx(3.0 * cfg.b));
    CHECK(plan.total_carbon <= all + 3.0);
}

TEST_CASE("offline oracle matches brute force over 8^3 sequences") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t n = 3, T = 3;
        std::vector<std::vector<SlotCandidate>> per_slot;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> carbon(0, 20);
        std::uniform_real_distribution<double> util(0.0, 10.0);
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<SlotCandidate> cands;
            for (std::uint64_t m = 0; m < 8; ++m) {
                cands.push_back({SelectionVector::from_mask(n, m), util(rng), static_cast<double>(carbon(rng))});
            }
            per_slot.push_back(std::move(cands));
        }
        for (double budget : {15.0, 30.0, 45.0}) {
            double best = -1.0;
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b)
                    for (int c = 0; c < 8; ++c) {
                        const double carbon_sum = per_slot[0][a].carbon + per_slot[1][b].carbon + per_slot[2][c].carbon;
                        if (carbon_sum <= budget) {
                            best = std::max(best,
                                            per_slot[0][a].utility + per_slot[1][b].utility + per_slot[2][c].utility);
                        }
                    }
            if (best < 0.0) {
                CHECK_THROWS_AS(solve_offline_oracle(per_slot, budget, 1.0), InfeasibleBudget);
                continue;
            }
            // Integer carbon on a unit grid: no rounding loss.
            const auto plan = solve_offline_oracle(per_slot, budget, 1.0);
            CHECK(plan.total_utility == doctest::Approx(best).epsilon(1e-12));
            CHECK(plan.total_carbon <= budget);
            double re_u = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                for (const auto& cand : per_slot[t]) {
                    if (cand.selection == plan.selections[t]) re_u += cand.utility;
                }
            }
            CHECK(re_u == doctest::Approx(plan.total_utility));
            // A coarse grid may lose value, or every plan, but never overspends.
            try {
                const auto coarse = solve_offline_oracle(per_slot, budget, 7.0);
                CHECK(coarse.total_utility <= best + 1e-12);
                CHECK(coarse.total_carbon <= budget);
            } catch (const InfeasibleBudget&) {
            }
        }
    }
}

}
