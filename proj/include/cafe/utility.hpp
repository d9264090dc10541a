#pragma once

/// @file utility.hpp
/// @brief Coreset (facility-location) learning-performance metric over probed
/// gradients, plus the empirical gradient-bound and divergence constants.

#include "cafe/fleet.hpp"

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cafe {

using Vector = std::vector<double>;

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);

/// Gradients reported by every center for one model. The pairwise distance
/// matrix and the norms are computed once at construction and reused by every
/// utility evaluation in the slot.
class GradientSnapshot {
public:
    GradientSnapshot(std::vector<Vector> gradients, std::string model_tag = {});

    [[nodiscard]] std::size_t size() const { return gradients_.size(); }
    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] const std::vector<Vector>& gradients() const { return gradients_; }
    [[nodiscard]] const Vector& gradient(std::size_t i) const { return gradients_.at(i); }
    [[nodiscard]] const std::string& model_tag() const { return model_tag_; }

    [[nodiscard]] double distance(std::size_t i, std::size_t j) const { return distances_[i * size() + j]; }
    [[nodiscard]] double norm(std::size_t i) const { return norms_.at(i); }
    [[nodiscard]] double max_norm() const { return max_norm_; }

private:
    std::vector<Vector> gradients_;
    std::string model_tag_;
    std::size_t dim_ = 0;
    std::vector<double> distances_;
    std::vector<double> norms_;
    double max_norm_ = 0.0;
};

/// Offset b and the gradient-norm cap it was sized for. The cap is enforced at
/// evaluation time so the metric can never go negative unnoticed.
struct UtilityConfig {
    double b = 0.0;
    double gradient_norm_cap = 0.0;

    /// b = 2 * n * cap, the smallest offset that keeps every value >= 0.
    static UtilityConfig for_fleet(std::size_t n, double gradient_norm_cap);
    /// Throws std::invalid_argument unless b > 0, cap > 0 and b >= 2 n cap.
    void validate(std::size_t n) const;
};

/// Thrown when a probed gradient exceeds the configured norm cap.
class GradientCapExceeded : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// U(a) = b - sum_j min_{i in K} ||g_j - g_i||, or b - 2 N max_i ||g_i|| when K is empty.
double utility(const GradientSnapshot& snapshot, const SelectionVector& a, const UtilityConfig& cfg);

/// The selection-dependent coreset cost sum_j min_{i in K} ||g_j - g_i|| (K nonempty).
double coreset_cost(const GradientSnapshot& snapshot, const SelectionVector& a);

/// Largest gradient norm over all snapshots and centers.
double empirical_gradient_bound(std::span<const GradientSnapshot> snapshots);

/// max_i ||g_i - mean_g||.
double empirical_divergence(const GradientSnapshot& snapshot);

} // namespace cafe
