#pragma once

#include <filesystem>

namespace oddkit::testing {

inline std::filesystem::path data_dir() {
    return std::filesystem::path(ODDKIT_DATA_DIR);
}

inline std::filesystem::path reference_taxonomy_path() {
    return data_dir() / "taxonomy_reference.json";
}

}  // namespace oddkit::testing
