#include "cafe/utility.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <stdexcept>

namespace cafe {

double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) {
        sum += x * x;
    }
    return std::sqrt(sum);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(fmt::format("dimension mismatch: {} vs {}", a.size(), b.size()));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        sum += d * d;
    }
    return std::sqrt(sum);
}

GradientSnapshot::GradientSnapshot(std::vector<Vector> gradients, std::string model_tag)
    : gradients_(std::move(gradients)), model_tag_(std::move(model_tag)) {
    if (gradients_.empty()) {
        throw std::invalid_argument("gradient snapshot needs at least one center");
    }
    dim_ = gradients_.front().size();
    const std::size_t n = gradients_.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (gradients_[i].size() != dim_) {
            throw std::invalid_argument(fmt::format("gradient {} has dimension {}, expected {}", i,
                                                    gradients_[i].size(), dim_));
        }
        for (double x : gradients_[i]) {
            if (!std::isfinite(x)) {
                throw std::invalid_argument(fmt::format("gradient {} has a non-finite entry", i));
            }
        }
    }
    norms_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms_[i] = l2_norm(gradients_[i]);
    }
    max_norm_ = *std::max_element(norms_.begin(), norms_.end());
    distances_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = l2_distance(gradients_[i], gradients_[j]);
            distances_[i * n + j] = d;
            distances_[j * n + i] = d;
        }
    }
}

UtilityConfig UtilityConfig::for_fleet(std::size_t n, double gradient_norm_cap) {
    UtilityConfig cfg;
    cfg.gradient_norm_cap = gradient_norm_cap;
    cfg.b = 2.0 * static_cast<double>(n) * gradient_norm_cap;
    cfg.validate(n);
    return cfg;
}

void UtilityConfig::validate(std::size_t n) const {
    if (!(gradient_norm_cap > 0.0) || !std::isfinite(gradient_norm_cap)) {
        throw std::invalid_argument("gradient norm cap must be positive and finite");
    }
    if (!(b > 0.0) || !std::isfinite(b)) {
        throw std::invalid_argument("utility offset b must be positive and finite");
    }
    const double needed = 2.0 * static_cast<double>(n) * gradient_norm_cap;
    if (b < needed) {
        throw std::invalid_argument(
            fmt::format("utility offset b={} is below 2*N*cap={} required for nonnegativity", b, needed));
    }
}

double coreset_cost(const GradientSnapshot& snapshot, const SelectionVector& a) {
    const std::size_t n = snapshot.size();
    const auto chosen = a.selected();
    if (chosen.empty()) {
        throw std::invalid_argument("coreset cost is undefined for the empty selection");
    }
    double cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (auto i : chosen) {
            best = std::min(best, snapshot.distance(j, i));
        }
        cost += best;
    }
    return cost;
}

double utility(const GradientSnapshot& snapshot, const SelectionVector& a, const UtilityConfig& cfg) {
    const std::size_t n = snapshot.size();
    if (a.size() != n) {
        throw std::invalid_argument(fmt::format("selection has {} bits, snapshot has {} centers", a.size(), n));
    }
    if (snapshot.max_norm() > cfg.gradient_norm_cap) {
        throw GradientCapExceeded(fmt::format("gradient norm {} exceeds configured cap {}", snapshot.max_norm(),
                                              cfg.gradient_norm_cap));
    }
    if (a.empty_set()) {
        return cfg.b - 2.0 * static_cast<double>(n) * snapshot.max_norm();
    }
    return cfg.b - coreset_cost(snapshot, a);
}

double empirical_gradient_bound(std::span<const GradientSnapshot> snapshots) {
    if (snapshots.empty()) {
        throw std::invalid_argument("empirical gradient bound needs at least one snapshot");
    }
    double bound = 0.0;
    for (const auto& s : snapshots) {
        bound = std::max(bound, s.max_norm());
    }
    return bound;
}

double empirical_divergence(const GradientSnapshot& snapshot) {
    const std::size_t n = snapshot.size();
    Vector mean(snapshot.dim(), 0.0);
    for (const auto& g : snapshot.gradients()) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            mean[k] += g[k];
        }
    }
    for (auto& m : mean) {
        m /= static_cast<double>(n);
    }
    double worst = 0.0;
    for (const auto& g : snapshot.gradients()) {
        worst = std::max(worst, l2_distance(g, mean));
    }
    return worst;
}

} // namespace cafe
