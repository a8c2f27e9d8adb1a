#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "enslens/core/ensemble.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("enslens_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" +
                 std::to_string(stamp));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// ActivePoints with rows 0..n-1 at flat indices 0..n-1.
inline enslens::ActivePoints make_points(std::string member, std::size_t dims,
                                         const std::vector<std::vector<float>>& rows) {
    enslens::ActivePoints pts;
    pts.member_id = std::move(member);
    pts.dims = dims;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        pts.indices.push_back(static_cast<std::uint32_t>(i));
        pts.coords.insert(pts.coords.end(), rows[i].begin(), rows[i].end());
    }
    return pts;
}

inline enslens::ActivePoints random_points(std::string member, std::size_t n, std::size_t dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    enslens::ActivePoints pts;
    pts.member_id = std::move(member);
    pts.dims = dims;
    pts.indices.resize(n);
    pts.coords.resize(n * dims);
    for (std::size_t i = 0; i < n; ++i) pts.indices[i] = static_cast<std::uint32_t>(i);
    for (auto& c : pts.coords) c = u(rng);
    return pts;
}

}  // namespace testing
