#include "cafe/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <stdexcept>

namespace cafe {

void ControlParams::validate() const {
    // V = 0 is accepted: it is the degenerate "carbon only" limit of the objective.
    if (!(V >= 0.0) || !std::isfinite(V)) {
        throw std::invalid_argument("V must be finite and >= 0");
    }
    if (!(H > 0.0) || !std::isfinite(H)) {
        throw std::invalid_argument("carbon budget H must be positive and finite");
    }
    if (T < 1) {
        throw std::invalid_argument("horizon T must be at least 1");
    }
    if (!(q0 >= 0.0) || !std::isfinite(q0)) {
        throw std::invalid_argument("initial queue q0 must be finite and >= 0");
    }
}

std::vector<std::size_t> static_floor_violations(const EnergyModel& energy, const CarbonTrace& trace,
                                                 const ControlParams& params) {
    std::vector<std::size_t> slots;
    const std::size_t horizon = std::min(params.T, trace.horizon());
    for (std::size_t t = 0; t < horizon; ++t) {
        if (static_floor(energy, trace, t) > params.per_slot_budget()) {
            slots.push_back(t);
        }
    }
    return slots;
}

VirtualQueue::VirtualQueue(double q0) : q_(q0), history_{q0} {
    if (!(q0 >= 0.0)) {
        throw std::invalid_argument("virtual queue must start at a nonnegative value");
    }
}

VirtualQueue queue_update(const VirtualQueue& queue, double slot_carbon, const ControlParams& params) {
    if (!(slot_carbon >= 0.0)) {
        throw std::invalid_argument("slot carbon must be >= 0");
    }
    VirtualQueue next = queue;
    next.q_ = std::max(0.0, slot_carbon - params.per_slot_budget() + queue.q_);
    next.history_.push_back(next.q_);
    return next;
}

double per_slot_objective(const GradientSnapshot& snapshot, const SelectionVector& a, double q, std::size_t t,
                          const ControlParams& params, const EnergyModel& energy, const CarbonTrace& trace,
                          const UtilityConfig& cfg) {
    return params.V * utility(snapshot, a, cfg) - q * carbon_total(energy, trace, t, a);
}

double theorem1_rhs(const BoundConstants& c, Theorem1Variant variant) {
    if (c.gamma < 1.0 || c.T < 1 || c.q0 < 0.0 || c.B1 < 0.0) {
        throw std::invalid_argument("theorem1_rhs requires gamma >= 1, T >= 1, q0 >= 0, B1 >= 0");
    }
    const double n = static_cast<double>(c.N);
    const double T = static_cast<double>(c.T);
    const double k = variant == Theorem1Variant::main_text ? c.b + n * c.G
                                                            : (c.gamma - 1.0) * c.b + 2.0 * n * c.G;
    const double arg = c.q0 * c.q0 / (T * T) + (2.0 * c.V / c.gamma * k + 2.0 * c.B1) / T;
    if (arg < 0.0) {
        throw std::domain_error(fmt::format("theorem1_rhs: negative square-root argument {}", arg));
    }
    return std::sqrt(arg) - c.q0 / T;
}

double theorem2_rhs(const BoundConstants& c, double opt_value) {
    if (!(c.V > 0.0) || c.gamma < 1.0 || c.T < 1) {
        throw std::invalid_argument("theorem2_rhs requires V > 0, gamma >= 1, T >= 1");
    }
    const double n = static_cast<double>(c.N);
    const double T = static_cast<double>(c.T);
    const double gap1 = 4.0 / c.gamma * n * c.delta_max;
    const double gap2 = (c.q0 * c.c_max / c.gamma + c.q0 * c.q0 / (2.0 * T)) / c.V;
    const double gap3 = ((T * c.c_max - c.H) * c.c_max / c.gamma + c.B1) / c.V;
    return opt_value / c.gamma - gap1 - gap2 - gap3;
}

double drift_constant(std::span<const double> slot_carbon, const ControlParams& params) {
    double worst = 0.0;
    for (double c : slot_carbon) {
        const double d = c - params.per_slot_budget();
        worst = std::max(worst, d * d);
    }
    return 0.5 * worst;
}

BoundReport build_bound_report(const RunTrace& run, BoundConstants constants, const std::string& solver,
                               std::optional<double> opt_value, const std::string& thm2_note) {
    if (run.slot_carbon.empty() || run.slot_carbon.size() != run.slot_utility.size()) {
        throw std::invalid_argument("bound report needs matching, nonempty carbon and utility series");
    }
    ControlParams params;
    params.V = constants.V;
    params.H = constants.H;
    params.T = constants.T;
    params.q0 = constants.q0;

    constants.B1 = drift_constant(run.slot_carbon, params);
    if (!run.all_select_carbon.empty()) {
        constants.c_max = *std::max_element(run.all_select_carbon.begin(), run.all_select_carbon.end());
    }

    BoundReport r;
    r.constants = constants;
    r.solver = solver;
    const double T = static_cast<double>(run.slot_carbon.size());
    r.avg_carbon = std::accumulate(run.slot_carbon.begin(), run.slot_carbon.end(), 0.0) / T;
    r.avg_violation = r.avg_carbon - params.per_slot_budget();
    r.thm1_rhs_main = theorem1_rhs(constants, Theorem1Variant::main_text);
    r.thm1_rhs_appendix = theorem1_rhs(constants, Theorem1Variant::appendix);
    const double looser = std::max(r.thm1_rhs_main, r.thm1_rhs_appendix);
    r.thm1_pass = r.avg_violation <= looser + kBoundTolerance;
    r.thm1_pass_appendix = r.avg_violation <= r.thm1_rhs_appendix + kBoundTolerance;
    r.avg_utility = std::accumulate(run.slot_utility.begin(), run.slot_utility.end(), 0.0) / T;
    r.min_objective = run.slot_objective.empty()
                          ? 0.0
                          : *std::min_element(run.slot_objective.begin(), run.slot_objective.end());
    r.floor_violations = run.floor_violations;
    r.thm2_note = thm2_note;
    if (opt_value && constants.V > 0.0) {
        r.opt_value = opt_value;
        r.thm2_rhs = theorem2_rhs(constants, *opt_value);
        r.thm2_pass = r.avg_utility >= *r.thm2_rhs - kBoundTolerance;
    }
    return r;
}

} // namespace cafe
