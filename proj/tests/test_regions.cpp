#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "lmcp/regions.hpp"

using namespace lmcp;
using testing::vec;

namespace {

PredictionRegion random_region(std::mt19937_64& rng, int d, int kind)
{
    std::uniform_real_distribution<double> u(-3.0, 3.0), pos(0.5, 3.0);
    Vec c(d);
    for (auto& x : c) {
        x = u(rng);
    }
    if (kind == 0) {
        Vec h(d);
        for (auto& x : h) {
            x = pos(rng);
        }
        return HyperRect{c, h, false};
    }
    if (kind == 1) {
        Mat a = Mat::Random(d, d);
        Mat s = a * a.transpose() + 0.5 * Mat::Identity(d, d);
        return Ellipsoid{c, s, pos(rng), false};
    }
    std::vector<Index> shape(d, 6);
    GridMask m{{shape, Vec::Constant(d, -2.5), Vec::Constant(d, 1.0)}, {}};
    m.included.resize(static_cast<std::size_t>(m.geometry.cell_count()));
    for (auto& f : m.included) {
        f = rng() % 2;
    }
    return m;
}

} // namespace

TEST_SUITE("regions")
{
    TEST_CASE("membership examples")
    {
        CHECK(contains(HyperRect{vec({0, 0}), vec({1, 1}), false}, vec({0.5, -0.5})));
        CHECK(contains(HyperRect{vec({0, 0}), vec({1, 1}), false}, vec({1.0, -1.0}))); // boundary inside
        CHECK_FALSE(contains(HyperRect{vec({0, 0}), vec({1, 1}), true}, vec({0.0, 0.0})));

        Ellipsoid disc{vec({0, 0}), Mat::Identity(2, 2), 1.0, false};
        CHECK_FALSE(contains(disc, vec({0.0, 1.0001})));
        CHECK(contains(disc, vec({0.0, 1.0})));

        GridMask m{testing::geometry({3, 3}), std::vector<std::uint8_t>(9, 0)};
        m.included[0] = 1;
        CHECK(contains(m, vec({0.4, 0.4})));
        CHECK_FALSE(contains(m, vec({0.6, 0.4})));
        CHECK_FALSE(contains(m, vec({-0.6, 0.0})));

        CHECK_THROWS_AS(contains(disc, vec({0.0, 0.0, 0.0})), Error);
    }

    TEST_CASE("measure examples")
    {
        CHECK(measure(Ellipsoid{vec({0, 0}), Mat::Identity(2, 2), 1.0, false}) == doctest::Approx(std::numbers::pi));
        CHECK(measure(HyperRect{vec({0, 0}), vec({2, 3}), false}) == 24.0);
        GridMask m{{{2, 2, 2}, Vec::Zero(3), Vec::Constant(3, 0.5)}, std::vector<std::uint8_t>(8, 1)};
        m.included[3] = 0;
        CHECK(measure(m) == doctest::Approx(0.875));
        CHECK(measure(HyperRect{vec({0, 0}), vec({2, 3}), true}) == 0.0);

        const double inf = std::numeric_limits<double>::infinity();
        CHECK(measure(HyperRect{vec({0, 0}), vec({inf, inf}), false}) == inf);
        CHECK(measure(Ellipsoid{vec({0, 0}), Mat::Identity(2, 2), inf, false}) == inf);
        CHECK(contains(Ellipsoid{vec({0, 0}), Mat::Identity(2, 2), inf, false}, vec({1e9, -1e9})));

        Mat bad(2, 2);
        bad << 1.0, 2.0, 2.0, 1.0;
        try {
            measure(Ellipsoid{vec({0, 0}), bad, 1.0, false});
            FAIL("expected NonSPDMatrix");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonSPDMatrix);
        }

        // ellipsoid volume uses sqrt(det shape)
        Mat s(3, 3);
        s << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
        CHECK(measure(Ellipsoid{Vec::Zero(3), s, 2.0, false})
              == doctest::Approx(4.0 / 3.0 * std::numbers::pi * 8.0 * std::sqrt(s.determinant())));
    }

    TEST_CASE("transform examples")
    {
        HyperRect r{vec({1, 1}), vec({1, 1}), false};
        const auto same = std::get<HyperRect>(transform(r, AffineMap::identity(2)));
        CHECK(same.center == r.center);
        CHECK(same.half_widths == r.half_widths);

        const auto scaled = transform(r, AffineMap{vec({2, 2}), vec({0, 0})});
        CHECK(std::get<HyperRect>(scaled).half_widths == vec({2, 2}));
        CHECK(measure(scaled) == 4.0 * measure(r));
    }

    TEST_CASE("transform commutes with membership and scales measure")
    {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(-4.0, 4.0), s(0.2, 3.0);
        for (int trial = 0; trial < 1000; ++trial) {
            const int d = 2 + trial % 2;
            const auto region = random_region(rng, d, trial % 3);
            AffineMap map{Vec(d), Vec(d)};
            for (int j = 0; j < d; ++j) {
                map.scale[j] = s(rng);
                map.offset[j] = u(rng);
            }
            Vec y(d);
            for (auto& x : y) {
                x = u(rng);
            }
            const auto moved = transform(region, map);
            CHECK(contains(moved, map.apply(y)) == contains(region, y));
            const double expected = measure(region) * map.scale.prod();
            CHECK(std::abs(measure(moved) - expected) <= 1e-9 * std::max(1.0, expected));
        }
    }

    TEST_CASE("bins_to_region")
    {
        CHECK(measure(bins_to_region(testing::geometry({4, 4}), {})) == 0.0);
        CHECK(is_empty(bins_to_region(testing::geometry({4, 4}), {})));

        std::vector<CellIndex> all;
        for (Index i = 0; i < 4; ++i) {
            for (Index j = 0; j < 4; ++j) {
                all.push_back({i, j, 0});
            }
        }
        CHECK(measure(bins_to_region(testing::geometry({4, 4}), all)) == 16.0);
        CHECK(measure(bins_to_region(testing::geometry({4, 4}, 2.0), {{0, 0, 0}, {0, 1, 0}})) == 8.0);
        try {
            bins_to_region(testing::geometry({4, 4}), {{4, 0, 0}});
            FAIL("expected IndexOutOfRange");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IndexOutOfRange);
        }
    }

    TEST_CASE("grid mask measure equals brute-force count")
    {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            auto m = std::get<GridMask>(random_region(rng, 3, 2));
            std::size_t count = 0;
            for (auto f : m.included) {
                count += f;
            }
            CHECK(measure(m) == static_cast<double>(count) * m.geometry.cell_volume());
        }
    }
}
