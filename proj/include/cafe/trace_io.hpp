#pragma once

/// @file trace_io.hpp
/// @brief Carbon-intensity trace CSV loading/writing and synthetic profiles.
///
/// The CSV is long format with header `slot,center,intensity_kg_per_kwh`.
/// Every (slot, center) pair in 0..T-1 x 0..N-1 appears exactly once; T and N
/// are inferred from the largest indices present.

#include "cafe/fleet.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace cafe {

class TraceError : public std::runtime_error {
public:
    enum class Kind { io, malformed_row, negative_intensity, duplicate_pair, missing_pair };

    TraceError(Kind kind, std::size_t row, const std::string& what)
        : std::runtime_error(what), kind_(kind), row_(row) {}

    [[nodiscard]] Kind kind() const { return kind_; }
    /// 1-based line number in the file (header is line 1); 0 when not tied to a row.
    [[nodiscard]] std::size_t row() const { return row_; }

private:
    Kind kind_;
    std::size_t row_;
};

enum class TraceProfile { constant, diurnal, random_walk };

TraceProfile parse_trace_profile(const std::string& name);
std::string to_string(TraceProfile profile);

CarbonTrace load_trace(const std::filesystem::path& path);
CarbonTrace parse_trace(std::istream& in);

void write_trace(std::ostream& out, const CarbonTrace& trace);
void write_trace(const std::filesystem::path& path, const CarbonTrace& trace);

/// Deterministic synthetic trace. Diurnal profiles have an exact 24-slot period.
CarbonTrace synth_trace(std::size_t n_centers, std::size_t horizon, TraceProfile profile,
                        std::uint64_t seed);

} // namespace cafe
