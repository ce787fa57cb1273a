#pragma once

#include "rtlsh/projections.hpp"

#include <cstdint>
#include <filesystem>

namespace rtlsh {

/// Index manifest persisted as key=value text lines:
/// n, d, m, w, c, delta, beta, l, page_size, seed.
struct Manifest {
    LshParams params;
    std::size_t dim = 0;
    std::size_t page_size = 4096;
    std::uint64_t seed = 0;
};

void save_manifest(const Manifest& man, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

} // namespace rtlsh
