#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "diffmac/image.hpp"

namespace testing {

inline diffmac::Image random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    diffmac::Image img(h, w);
    for (auto& v : img.pixels()) v = u(rng);
    return img;
}

inline double max_abs_diff(const diffmac::Image& a, const diffmac::Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.pixels()[i]) - b.pixels()[i]));
    return m;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("diffmac_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
