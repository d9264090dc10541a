#include "cafe/io_util.hpp"
#include "cafe/trace_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace cafe;

namespace {

CarbonTrace parse(const std::string& text) {
    std::istringstream in(text);
    return parse_trace(in);
}

TraceError parse_error(const std::string& text) {
    try {
        parse(text);
    } catch (const TraceError& e) {
        return e;
    }
    FAIL("expected a TraceError");
    return TraceError(TraceError::Kind::io, 0, "");
}

const std::string kHeader = "slot,center,intensity_kg_per_kwh\n";

} // namespace

TEST_SUITE("trace_io") {

TEST_CASE("2 slots x 2 centers") {
    const auto tr = parse(kHeader + "0,0,0.1\n0,1,0.2\n1,0,0.3\n1,1,0.4\n");
    CHECK(tr.horizon() == 2);
    CHECK(tr.n_centers() == 2);
    CHECK(tr.at(1, 0) == 0.3);
    // Row order does not matter.
    CHECK(parse(kHeader + "1,1,0.4\n0,1,0.2\n1,0,0.3\n0,0,0.1\n") == tr);
}

TEST_CASE("loader errors carry kind and row") {
    auto dup = parse_error(kHeader + "0,0,0.1\n0,0,0.2\n");
    CHECK(dup.kind() == TraceError::Kind::duplicate_pair);
    CHECK(dup.row() == 3);

    auto neg = parse_error(kHeader + "0,0,-1\n");
    CHECK(neg.kind() == TraceError::Kind::negative_intensity);
    CHECK(neg.row() == 2);

    auto bad = parse_error(kHeader + "0,0,0.1\n0,x,0.2\n");
    CHECK(bad.kind() == TraceError::Kind::malformed_row);
    CHECK(bad.row() == 3);

    CHECK(parse_error(kHeader + "0,0\n").kind() == TraceError::Kind::malformed_row);
    CHECK(parse_error(kHeader + "0,0,nan\n").kind() == TraceError::Kind::malformed_row);
    CHECK(parse_error(kHeader + "0,0,0.1\n1,1,0.2\n").kind() == TraceError::Kind::missing_pair);
    CHECK(parse_error("t,c,v\n0,0,0.1\n").kind() == TraceError::Kind::malformed_row);
    CHECK(parse_error(kHeader).kind() == TraceError::Kind::missing_pair);
    CHECK_THROWS_AS(load_trace("/nonexistent/trace.csv"), TraceError);
}

TEST_CASE("write and reload round-trips exactly") {
    const auto tr = synth_trace(4, 30, TraceProfile::random_walk, 5);
    std::ostringstream out;
    write_trace(out, tr);
    CHECK(parse(out.str()) == tr);

    const auto dir = std::filesystem::temp_directory_path() / "cafe_trace_io_test";
    std::filesystem::remove_all(dir);
    write_trace(dir / "t.csv", tr);
    CHECK(load_trace(dir / "t.csv") == tr);
    CHECK_FALSE(std::filesystem::exists(dir / "t.csv.tmp"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic profiles") {
    const auto c = synth_trace(5, 40, TraceProfile::constant, 1);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t t = 0; t < 40; ++t) CHECK(c.at(t, i) == c.at(0, i));

    const auto d = synth_trace(6, 72, TraceProfile::diurnal, 2);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t t = 0; t + 24 < 72; ++t) CHECK(d.at(t, i) == d.at(t + 24, i));
    // Not flat: the sinusoid has a positive amplitude.
    CHECK(d.at(0, 0) != d.at(6, 0));

    CHECK(synth_trace(3, 50, TraceProfile::random_walk, 9) == synth_trace(3, 50, TraceProfile::random_walk, 9));
    CHECK_FALSE(synth_trace(3, 50, TraceProfile::random_walk, 9) ==
                synth_trace(3, 50, TraceProfile::random_walk, 10));
    const auto w = synth_trace(3, 500, TraceProfile::random_walk, 4);
    for (std::size_t t = 0; t < 500; ++t)
        for (std::size_t i = 0; i < 3; ++i) CHECK(w.at(t, i) >= 0.0);

    CHECK(parse_trace_profile("diurnal") == TraceProfile::diurnal);
    CHECK_THROWS(parse_trace_profile("weekly"));
    CHECK_THROWS(synth_trace(0, 5, TraceProfile::constant, 0));
}

TEST_CASE("real formatting is shortest round-trip") {
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(0.0) == "0");
    CHECK(format_real(-0.0) == "0");
    CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
}

}
