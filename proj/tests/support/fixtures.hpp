#pragma once

#include <filesystem>
#include <string>

#include "policylens/detail/binary_io.hpp"

namespace policylens::testing {

inline std::filesystem::path fixture_path(std::string const& name)
{
    return std::filesystem::path(POLICYLENS_FIXTURE_DIR) / name;
}

inline std::string read_fixture(std::string const& name) { return detail::read_file(fixture_path(name).string()); }

}  // namespace policylens::testing
