#include "cafe/trace_io.hpp"

#include "cafe/io_util.hpp"
#include "cafe/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>
#include <vector>

namespace cafe {

TraceProfile parse_trace_profile(const std::string& name) {
    if (name == "constant") return TraceProfile::constant;
    if (name == "diurnal") return TraceProfile::diurnal;
    if (name == "random_walk") return TraceProfile::random_walk;
    throw std::invalid_argument(fmt::format("unknown trace profile '{}'", name));
}

std::string to_string(TraceProfile profile) {
    switch (profile) {
    case TraceProfile::constant: return "constant";
    case TraceProfile::diurnal: return "diurnal";
    case TraceProfile::random_walk: return "random_walk";
    }
    return "unknown";
}

namespace {

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool parse_index(const std::string& field, std::size_t& out) {
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && !field.empty();
}

bool parse_real(const std::string& field, double& out) {
    if (field.empty()) return false;
    std::size_t used = 0;
    try {
        out = std::stod(field, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == field.size() && std::isfinite(out);
}

} // namespace

CarbonTrace parse_trace(std::istream& in) {
    using Kind = TraceError::Kind;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw TraceError(Kind::malformed_row, 1, "trace file is empty");
    }
    ++line_no;
    if (trim(line) != "slot,center,intensity_kg_per_kwh") {
        throw TraceError(Kind::malformed_row, 1,
                         fmt::format("line 1: expected header 'slot,center,intensity_kg_per_kwh', got '{}'",
                                     trim(line)));
    }

    std::map<std::pair<std::size_t, std::size_t>, double> cells;
    std::size_t max_slot = 0;
    std::size_t max_center = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(stripped);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(trim(field));
        }
        std::size_t slot = 0;
        std::size_t center = 0;
        double value = 0.0;
        if (fields.size() != 3 || !parse_index(fields[0], slot) || !parse_index(fields[1], center) ||
            !parse_real(fields[2], value)) {
            throw TraceError(Kind::malformed_row, line_no,
                             fmt::format("line {}: malformed row '{}'", line_no, stripped));
        }
        if (value < 0.0) {
            throw TraceError(Kind::negative_intensity, line_no,
                             fmt::format("line {}: negative intensity {} at slot {}, center {}", line_no,
                                         fields[2], slot, center));
        }
        if (!cells.emplace(std::make_pair(slot, center), value).second) {
            throw TraceError(Kind::duplicate_pair, line_no,
                             fmt::format("line {}: duplicate pair (slot {}, center {})", line_no, slot,
                                         center));
        }
        max_slot = std::max(max_slot, slot);
        max_center = std::max(max_center, center);
    }
    if (cells.empty()) {
        throw TraceError(Kind::missing_pair, 0, "trace contains no rows");
    }

    const std::size_t horizon = max_slot + 1;
    const std::size_t n = max_center + 1;
    std::vector<double> values(horizon * n);
    for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            auto it = cells.find({t, i});
            if (it == cells.end()) {
                throw TraceError(Kind::missing_pair, 0,
                                 fmt::format("missing pair (slot {}, center {}) in {}x{} trace", t, i,
                                             horizon, n));
            }
            values[t * n + i] = it->second;
        }
    }
    return CarbonTrace(horizon, n, std::move(values));
}

CarbonTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw TraceError(TraceError::Kind::io, 0, fmt::format("cannot open trace file '{}'", path.string()));
    }
    return parse_trace(in);
}

void write_trace(std::ostream& out, const CarbonTrace& trace) {
    out << "slot,center,intensity_kg_per_kwh\n";
    for (std::size_t t = 0; t < trace.horizon(); ++t) {
        for (std::size_t i = 0; i < trace.n_centers(); ++i) {
            out << t << ',' << i << ',' << format_real(trace.at(t, i)) << '\n';
        }
    }
}

void write_trace(const std::filesystem::path& path, const CarbonTrace& trace) {
    std::ostringstream buffer;
    write_trace(buffer, trace);
    write_file_atomic(path, buffer.str());
}

CarbonTrace synth_trace(std::size_t n_centers, std::size_t horizon, TraceProfile profile, std::uint64_t seed) {
    if (n_centers < 1 || horizon < 1) {
        throw std::invalid_argument("synthetic trace needs positive centers and horizon");
    }
    constexpr std::size_t period = 24;
    auto rng = make_rng(seed, Stream::trace);
    std::uniform_real_distribution<double> level_dist(0.10, 0.60);
    std::uniform_real_distribution<double> amp_frac_dist(0.20, 0.60);
    std::uniform_real_distribution<double> phase_dist(0.0, static_cast<double>(period));
    std::normal_distribution<double> step_dist(0.0, 0.03);

    std::vector<double> levels(n_centers);
    std::vector<double> amplitudes(n_centers);
    std::vector<double> phases(n_centers);
    for (std::size_t i = 0; i < n_centers; ++i) {
        levels[i] = level_dist(rng);
        amplitudes[i] = amp_frac_dist(rng) * levels[i];
        phases[i] = phase_dist(rng);
    }

    std::vector<double> values(horizon * n_centers);
    switch (profile) {
    case TraceProfile::constant:
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t i = 0; i < n_centers; ++i) {
                values[t * n_centers + i] = levels[i];
            }
        }
        break;
    case TraceProfile::diurnal:
        for (std::size_t t = 0; t < horizon; ++t) {
            // Reducing t modulo the period first makes the columns exactly periodic.
            const double hour = static_cast<double>(t % period);
            for (std::size_t i = 0; i < n_centers; ++i) {
                const double angle = 2.0 * std::numbers::pi * (hour + phases[i]) / static_cast<double>(period);
                values[t * n_centers + i] = std::max(0.0, levels[i] + amplitudes[i] * std::sin(angle));
            }
        }
        break;
    case TraceProfile::random_walk: {
        std::vector<double> current = levels;
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t i = 0; i < n_centers; ++i) {
                if (t > 0) {
                    current[i] = std::max(0.0, current[i] + step_dist(rng));
                }
                values[t * n_centers + i] = current[i];
            }
        }
        break;
    }
    }
    return CarbonTrace(horizon, n_centers, std::move(values));
}

} // namespace cafe
