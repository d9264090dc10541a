#pragma once

#include "cafe/fleet.hpp"
#include "cafe/rng.hpp"
#include "cafe/utility.hpp"

#include <random>
#include <vector>

namespace testing_helpers {

/// n random gradients of dimension d with entries in [-scale, scale].
inline cafe::GradientSnapshot random_snapshot(std::size_t n, std::size_t d, std::uint64_t seed,
                                              double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<cafe::Vector> g(n, cafe::Vector(d));
    for (auto& v : g)
        for (auto& x : v) x = u(rng);
    return cafe::GradientSnapshot(std::move(g));
}

inline cafe::CarbonTrace random_trace(std::size_t T, std::size_t n, std::uint64_t seed, double lo = 0.05,
                                      double hi = 0.6) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(T * n);
    for (auto& x : v) x = u(rng);
    return cafe::CarbonTrace(T, n, std::move(v));
}

} // namespace testing_helpers

#include "cafe/lyapunov.hpp"
#include "cafe/solvers.hpp"

#include <limits>

namespace testing_helpers {

/// A per-slot problem whose objective V*U - q*c is nonnegative on every
/// selection: q is a random fraction (at least half) of the largest such queue value.
struct P2Instance {
    cafe::GradientSnapshot snapshot;
    cafe::UtilityConfig cfg;
    cafe::CarbonTrace trace;
    cafe::EnergyModel energy;
    cafe::ControlParams params;
    double q = 0.0;

    [[nodiscard]] cafe::ObjectiveOracle oracle() const {
        return cafe::make_p2_oracle(snapshot, q, 0, params, energy, trace, cfg);
    }
};

inline P2Instance random_p2_instance(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    auto snap = random_snapshot(n, 4, seed * 7919 + 1);
    auto cfg = cafe::UtilityConfig::for_fleet(n, snap.max_norm());
    auto trace = random_trace(1, n, seed * 104729 + 3);
    std::vector<double> stat(n), act(n);
    for (std::size_t i = 0; i < n; ++i) {
        // No idle energy: U(empty) = 0, so any floor would force q = 0 and a
        // monotone objective. The argmax does not depend on the floor anyway.
        stat[i] = 0.0;
        act[i] = 1.0 + 9.0 * frac(rng);
    }
    cafe::EnergyModel energy(stat, act);
    cafe::ControlParams params;
    params.V = 1.0;
    double q_max = std::numeric_limits<double>::infinity();
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
        const auto a = cafe::SelectionVector::from_mask(n, m);
        const double c = cafe::carbon_total(energy, trace, 0, a);
        if (c > 0.0) q_max = std::min(q_max, cafe::utility(snap, a, cfg) / c);
    }
    const double q = (0.5 + 0.5 * frac(rng)) * q_max;
    return P2Instance{std::move(snap), cfg, std::move(trace), std::move(energy), params, q};
}

} // namespace testing_helpers
