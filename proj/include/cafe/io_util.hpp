#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cafe {

/// Shortest decimal text that round-trips to the same double.
std::string format_real(double value);

/// Writes to a sibling temporary file, then renames it over @p path.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

} // namespace cafe
