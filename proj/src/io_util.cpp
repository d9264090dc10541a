#include "cafe/io_util.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <stdexcept>

namespace cafe {

std::string format_real(double value) {
    if (std::isnan(value)) return "nan";
    if (value == 0.0) return "0";
    return fmt::format("{}", value);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error(fmt::format("cannot write '{}'", tmp.string()));
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw std::runtime_error(fmt::format("short write to '{}'", tmp.string()));
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace cafe
