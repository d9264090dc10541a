#pragma once

/// @file lyapunov.hpp
/// @brief Virtual carbon-deficit queue, the drift-plus-penalty per-slot
/// objective, and closed-form expressions of the constraint-violation and
/// utility bounds used to validate completed runs.

#include "cafe/fleet.hpp"
#include "cafe/utility.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cafe {

struct ControlParams {
    double V = 0.5;
    /// Total carbon budget over the horizon, kg.
    double H = 400.0 * kKgPerTonne;
    std::size_t T = 200;
    double q0 = 10.0;

    [[nodiscard]] double per_slot_budget() const { return H / static_cast<double>(T); }
    void validate() const;
};

/// Slots whose static floor sum_i beta_i^t E_c_i exceeds H/T. An empty result
/// means the idle-energy feasibility assumption holds over the horizon.
std::vector<std::size_t> static_floor_violations(const EnergyModel& energy, const CarbonTrace& trace,
                                                 const ControlParams& params);

class VirtualQueue {
public:
    explicit VirtualQueue(double q0);

    [[nodiscard]] double q() const { return q_; }
    [[nodiscard]] double q0() const { return history_.front(); }
    /// history()[0] == q0; one entry appended per slot.
    [[nodiscard]] const std::vector<double>& history() const { return history_; }

    friend VirtualQueue queue_update(const VirtualQueue& queue, double slot_carbon, const ControlParams& params);

private:
    double q_;
    std::vector<double> history_;
};

/// q' = max(0, c - H/T + q).
VirtualQueue queue_update(const VirtualQueue& queue, double slot_carbon, const ControlParams& params);

/// V * U(a) - q * c^t(a).
double per_slot_objective(const GradientSnapshot& snapshot, const SelectionVector& a, double q, std::size_t t,
                          const ControlParams& params, const EnergyModel& energy, const CarbonTrace& trace,
                          const UtilityConfig& cfg);

/// Constants that appear in the bound expressions.
struct BoundConstants {
    std::size_t N = 0;
    double G = 0.0;         ///< gradient-norm bound
    double delta_max = 0.0; ///< gradient-divergence bound
    double B1 = 0.0;        ///< drift constant
    double c_max = 0.0;     ///< per-slot carbon upper bound
    double gamma = 1.0;     ///< solver approximation factor
    double b = 0.0;
    double q0 = 0.0;
    double V = 0.0;
    std::size_t T = 1;
    double H = 0.0;
};

enum class Theorem1Variant {
    main_text, ///< uses (b + N G)
    appendix,  ///< uses ((gamma - 1) b + 2 N G)
};

/// sqrt(q0^2/T^2 + (2V/gamma * K + 2 B1)/T) - q0/T, K chosen by @p variant.
double theorem1_rhs(const BoundConstants& c, Theorem1Variant variant);

/// OPT/gamma - (4/gamma) N delta - (1/V)(q0 c_max/gamma + q0^2/(2T))
///  - (1/V)((T c_max - H) c_max/gamma + B1).  @p opt_value is an average utility.
double theorem2_rhs(const BoundConstants& c, double opt_value);

/// Tightest drift constant for a realized run: 0.5 * max_t (c^t - H/T)^2.
double drift_constant(std::span<const double> slot_carbon, const ControlParams& params);

struct BoundReport {
    BoundConstants constants;
    std::string solver;
    double avg_carbon = 0.0;
    double avg_violation = 0.0; ///< (1/T) sum c^t - H/T
    double thm1_rhs_main = 0.0;
    double thm1_rhs_appendix = 0.0;
    bool thm1_pass = false; ///< against the looser of the two variants
    bool thm1_pass_appendix = false;
    double avg_utility = 0.0;
    std::optional<double> opt_value;
    std::optional<double> thm2_rhs;
    std::optional<bool> thm2_pass;
    std::string thm2_note;
    double min_objective = 0.0; ///< smallest per-slot objective of the chosen selections
    std::size_t floor_violations = 0;
};

/// Realized quantities of a completed run needed to evaluate both bounds.
struct RunTrace {
    std::vector<double> slot_carbon;
    std::vector<double> slot_utility;
    std::vector<double> slot_objective;
    std::vector<double> all_select_carbon;
    std::size_t floor_violations = 0;
};

/// Tolerance used when comparing realized quantities against bound values.
inline constexpr double kBoundTolerance = 1e-9;

BoundReport build_bound_report(const RunTrace& run, BoundConstants constants, const std::string& solver,
                               std::optional<double> opt_value, const std::string& thm2_note);

} // namespace cafe
