#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "lmcp/grid.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path = std::filesystem::temp_directory_path()
               / ("lmcp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }

    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline lmcp::GridGeometry geometry(std::vector<lmcp::Index> shape, double spacing = 1.0, double origin = 0.0)
{
    const auto d = static_cast<lmcp::Index>(shape.size());
    return {std::move(shape), lmcp::Vec::Constant(d, origin), lmcp::Vec::Constant(d, spacing)};
}

inline lmcp::GridDistribution uniform_grid(std::vector<lmcp::Index> shape, double spacing = 1.0)
{
    auto g = geometry(std::move(shape), spacing);
    const auto n = g.cell_count();
    return {g, lmcp::Vec::Constant(n, 1.0 / static_cast<double>(n))};
}

inline lmcp::GridDistribution random_grid(std::vector<lmcp::Index> shape, std::mt19937_64& rng)
{
    auto g = geometry(std::move(shape));
    std::uniform_real_distribution<double> u(0.01, 1.0);
    lmcp::Vec v(g.cell_count());
    for (auto& x : v) {
        x = u(rng);
    }
    return lmcp::normalize({g, v});
}

inline lmcp::GridDistribution delta_grid(std::vector<lmcp::Index> shape, lmcp::Index flat)
{
    auto g = geometry(std::move(shape));
    lmcp::Vec v = lmcp::Vec::Zero(g.cell_count());
    v[flat] = 1.0;
    return {g, v};
}

inline lmcp::Vec vec(std::initializer_list<double> xs)
{
    lmcp::Vec v(static_cast<lmcp::Index>(xs.size()));
    lmcp::Index i = 0;
    for (double x : xs) {
        v[i++] = x;
    }
    return v;
}

} // namespace testing
