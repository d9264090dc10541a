#include "cafe/fleet.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <stdexcept>

namespace cafe {

SelectionVector SelectionVector::from_mask(std::size_t n, std::uint64_t mask) {
    if (n > 64) {
        throw std::invalid_argument("SelectionVector::from_mask supports at most 64 centers");
    }
    SelectionVector a(n);
    for (std::size_t i = 0; i < n; ++i) {
        a.bits_[i] = static_cast<std::uint8_t>((mask >> i) & 1U);
    }
    return a;
}

SelectionVector SelectionVector::from_indices(std::size_t n, std::span<const std::size_t> indices) {
    SelectionVector a(n);
    for (auto i : indices) {
        if (i >= n) {
            throw std::out_of_range(fmt::format("center index {} out of range (N={})", i, n));
        }
        a.bits_[i] = 1;
    }
    return a;
}

SelectionVector SelectionVector::from_bits(const std::string& bits) {
    SelectionVector a(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != '0' && bits[i] != '1') {
            throw std::invalid_argument(fmt::format("invalid selection bit '{}'", bits[i]));
        }
        a.bits_[i] = bits[i] == '1' ? 1 : 0;
    }
    return a;
}

std::size_t SelectionVector::count() const {
    return static_cast<std::size_t>(std::accumulate(bits_.begin(), bits_.end(), std::size_t{0}));
}

std::vector<std::size_t> SelectionVector::selected() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] != 0) {
            out.push_back(i);
        }
    }
    return out;
}

std::uint64_t SelectionVector::mask() const {
    if (bits_.size() > 64) {
        throw std::logic_error("SelectionVector::mask supports at most 64 centers");
    }
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] != 0) {
            m |= std::uint64_t{1} << i;
        }
    }
    return m;
}

std::string SelectionVector::bits() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] != 0) {
            s[i] = '1';
        }
    }
    return s;
}

FleetConfig FleetConfig::with_default_labels(std::size_t n) {
    FleetConfig cfg;
    cfg.n_centers = n;
    for (std::size_t i = 0; i < n; ++i) {
        cfg.center_labels.push_back(fmt::format("dc{}", i));
    }
    return cfg;
}

void FleetConfig::validate() const {
    if (n_centers < 1) {
        throw std::invalid_argument("fleet must contain at least one center");
    }
    if (center_labels.size() != n_centers) {
        throw std::invalid_argument(fmt::format("expected {} center labels, got {}", n_centers,
                                                center_labels.size()));
    }
    if (!(slot_hours > 0.0)) {
        throw std::invalid_argument("slot duration must be positive");
    }
}

EnergyModel::EnergyModel(std::vector<double> static_kwh, std::vector<double> active_kwh)
    : static_kwh_(std::move(static_kwh)), active_kwh_(std::move(active_kwh)) {
    if (static_kwh_.size() != active_kwh_.size()) {
        throw std::invalid_argument("static and active energy lists differ in length");
    }
    if (static_kwh_.empty()) {
        throw std::invalid_argument("energy model needs at least one center");
    }
    for (std::size_t i = 0; i < static_kwh_.size(); ++i) {
        if (!(static_kwh_[i] >= 0.0) || !(active_kwh_[i] >= 0.0) || !std::isfinite(static_kwh_[i]) ||
            !std::isfinite(active_kwh_[i])) {
            throw std::invalid_argument(fmt::format("energy of center {} must be finite and >= 0", i));
        }
    }
}

EnergyModel EnergyModel::homogeneous(std::size_t n, double static_kwh, double active_kwh) {
    return EnergyModel(std::vector<double>(n, static_kwh), std::vector<double>(n, active_kwh));
}

EnergyModel EnergyModel::gpu_default(std::size_t n) {
    constexpr double gpus = 2000.0;
    constexpr double idle_kw = 0.020;
    constexpr double full_kw = 0.400;
    constexpr double hours = 1.0;
    const double idle = gpus * idle_kw * hours;
    const double full = gpus * full_kw * hours;
    return homogeneous(n, idle, full - idle);
}

CarbonTrace::CarbonTrace(std::size_t horizon, std::size_t n_centers, std::vector<double> row_major)
    : horizon_(horizon), n_centers_(n_centers), values_(std::move(row_major)) {
    if (horizon_ < 1 || n_centers_ < 1) {
        throw std::invalid_argument("carbon trace needs T >= 1 and N >= 1");
    }
    if (values_.size() != horizon_ * n_centers_) {
        throw std::invalid_argument(fmt::format("carbon trace expects {}x{} values, got {}", horizon_,
                                                n_centers_, values_.size()));
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (!std::isfinite(values_[k]) || values_[k] < 0.0) {
            throw std::invalid_argument(fmt::format("carbon intensity at slot {}, center {} must be finite "
                                                    "and >= 0",
                                                    k / n_centers_, k % n_centers_));
        }
    }
}

double CarbonTrace::at(std::size_t t, std::size_t center) const {
    if (t >= horizon_ || center >= n_centers_) {
        throw std::out_of_range(fmt::format("trace index ({}, {}) out of range ({}x{})", t, center,
                                            horizon_, n_centers_));
    }
    return values_[t * n_centers_ + center];
}

std::span<const double> CarbonTrace::slot(std::size_t t) const {
    if (t >= horizon_) {
        throw std::out_of_range(fmt::format("slot {} out of range (T={})", t, horizon_));
    }
    return {values_.data() + t * n_centers_, n_centers_};
}

double CarbonTrace::center_mean(std::size_t center) const {
    double sum = 0.0;
    for (std::size_t t = 0; t < horizon_; ++t) {
        sum += at(t, center);
    }
    return sum / static_cast<double>(horizon_);
}

CarbonTrace CarbonTrace::truncated(std::size_t horizon) const {
    if (horizon > horizon_) {
        throw std::out_of_range(fmt::format("trace has {} slots, {} requested", horizon_, horizon));
    }
    return CarbonTrace(horizon, n_centers_,
                       std::vector<double>(values_.begin(),
                                           values_.begin() + static_cast<std::ptrdiff_t>(horizon * n_centers_)));
}

double energy_per_slot(const EnergyModel& model, std::size_t center, bool selected) {
    if (center >= model.size()) {
        throw std::out_of_range(fmt::format("center {} out of range (N={})", center, model.size()));
    }
    return model.static_kwh(center) + (selected ? model.active_kwh(center) : 0.0);
}

double carbon_per_center(const EnergyModel& model, const CarbonTrace& trace, std::size_t t,
                         std::size_t center, bool selected) {
    return trace.at(t, center) * energy_per_slot(model, center, selected);
}

double carbon_total(const EnergyModel& model, const CarbonTrace& trace, std::size_t t,
                    const SelectionVector& a) {
    if (a.size() != model.size() || a.size() != trace.n_centers()) {
        throw std::invalid_argument(fmt::format("selection has {} bits but fleet has {} centers", a.size(),
                                                model.size()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        total += carbon_per_center(model, trace, t, i, a[i]);
    }
    return total;
}

double static_floor(const EnergyModel& model, const CarbonTrace& trace, std::size_t t) {
    return carbon_total(model, trace, t, SelectionVector::none(model.size()));
}

std::vector<double> incremental_carbon(const EnergyModel& model, const CarbonTrace& trace, std::size_t t) {
    std::vector<double> out(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        out[i] = trace.at(t, i) * model.active_kwh(i);
    }
    return out;
}

} // namespace cafe
