#pragma once

/// @file fleet.hpp
/// @brief Physical model of the data-center fleet: energy per slot, carbon
/// intensity traces, and the per-slot carbon footprint of a selection.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cafe {

/// Kilograms of CO2 per tonne. Carbon is carried in kg everywhere except the
/// reporting boundary.
inline constexpr double kKgPerTonne = 1000.0;

/// Binary participation decision for one slot, one bit per center.
class SelectionVector {
public:
    SelectionVector() = default;
    explicit SelectionVector(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}

    static SelectionVector none(std::size_t n) { return SelectionVector(n, false); }
    static SelectionVector all(std::size_t n) { return SelectionVector(n, true); }
    /// Bit i of @p mask selects center i. Requires n <= 64.
    static SelectionVector from_mask(std::size_t n, std::uint64_t mask);
    static SelectionVector from_indices(std::size_t n, std::span<const std::size_t> indices);
    /// Parses a string of '0'/'1' characters, center 0 first.
    static SelectionVector from_bits(const std::string& bits);

    [[nodiscard]] std::size_t size() const { return bits_.size(); }
    [[nodiscard]] bool operator[](std::size_t i) const { return bits_.at(i) != 0; }
    void set(std::size_t i, bool value) { bits_.at(i) = value ? 1 : 0; }

    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] bool empty_set() const { return count() == 0; }
    /// Selected-set view, ascending center index.
    [[nodiscard]] std::vector<std::size_t> selected() const;
    [[nodiscard]] std::uint64_t mask() const;
    [[nodiscard]] std::string bits() const;

    friend bool operator==(const SelectionVector&, const SelectionVector&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

struct FleetConfig {
    std::size_t n_centers = 0;
    double slot_hours = 1.0;
    std::vector<std::string> center_labels;

    /// Builds labels "dc0".."dc{n-1}" when none are given.
    static FleetConfig with_default_labels(std::size_t n);
    void validate() const;
};

/// Static (idle) and incremental (selected) energy of every center, kWh per slot.
class EnergyModel {
public:
    EnergyModel(std::vector<double> static_kwh, std::vector<double> active_kwh);

    /// Every center gets the same static/active energy.
    static EnergyModel homogeneous(std::size_t n, double static_kwh, double active_kwh);
    /// 2000 GPUs at 20 W idle / 400 W full load for a one-hour slot:
    /// 40 kWh static, 760 kWh incremental.
    static EnergyModel gpu_default(std::size_t n);

    [[nodiscard]] std::size_t size() const { return static_kwh_.size(); }
    [[nodiscard]] double static_kwh(std::size_t i) const { return static_kwh_.at(i); }
    [[nodiscard]] double active_kwh(std::size_t i) const { return active_kwh_.at(i); }
    [[nodiscard]] const std::vector<double>& static_kwh() const { return static_kwh_; }
    [[nodiscard]] const std::vector<double>& active_kwh() const { return active_kwh_; }

private:
    std::vector<double> static_kwh_;
    std::vector<double> active_kwh_;
};

/// T x N matrix of carbon intensities, kg CO2 per kWh.
class CarbonTrace {
public:
    CarbonTrace(std::size_t horizon, std::size_t n_centers, std::vector<double> row_major);

    [[nodiscard]] std::size_t horizon() const { return horizon_; }
    [[nodiscard]] std::size_t n_centers() const { return n_centers_; }
    [[nodiscard]] double at(std::size_t t, std::size_t center) const;
    [[nodiscard]] std::span<const double> slot(std::size_t t) const;
    /// Mean intensity of one center over the whole horizon.
    [[nodiscard]] double center_mean(std::size_t center) const;
    /// Keeps the first @p horizon slots.
    [[nodiscard]] CarbonTrace truncated(std::size_t horizon) const;

    friend bool operator==(const CarbonTrace&, const CarbonTrace&) = default;

private:
    std::size_t horizon_;
    std::size_t n_centers_;
    std::vector<double> values_;
};

/// e_i = E_c + a * E_s.
double energy_per_slot(const EnergyModel& model, std::size_t center, bool selected);

/// c_i^t = beta_i^t * e_i.
double carbon_per_center(const EnergyModel& model, const CarbonTrace& trace, std::size_t t,
                         std::size_t center, bool selected);

/// c^t(a) summed over all centers.
double carbon_total(const EnergyModel& model, const CarbonTrace& trace, std::size_t t,
                    const SelectionVector& a);

/// Carbon of the all-zero selection: sum_i beta_i^t E_c_i.
double static_floor(const EnergyModel& model, const CarbonTrace& trace, std::size_t t);

/// Per-center carbon added by selecting the center: beta_i^t E_s_i.
std::vector<double> incremental_carbon(const EnergyModel& model, const CarbonTrace& trace,
                                       std::size_t t);

} // namespace cafe
