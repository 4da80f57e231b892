#include <doctest.h>

#include "helpers.hpp"
#include "lmcp/density.hpp"
#include "lmcp/synthetic.hpp"
#include "oracles.hpp"

using namespace lmcp;
using testing::vec;

namespace {

GridDistribution one_d(std::vector<double> p, double origin = 0.0, double spacing = 1.0)
{
    GridGeometry g{{static_cast<Index>(p.size())}, Vec::Constant(1, origin), Vec::Constant(1, spacing)};
    return {g, Eigen::Map<Vec>(p.data(), static_cast<Index>(p.size()))};
}

Example grid_example(GridDistribution grid, Vec truth)
{
    Example ex;
    ex.id = "e";
    ex.truth = std::move(truth);
    ex.grid = std::move(grid);
    return ex;
}

} // namespace

TEST_SUITE("density")
{
    TEST_CASE("interp_density examples")
    {
        CHECK(interp_density(one_d({0.2, 0.8}), vec({0.5})) == doctest::Approx(0.5));

        // midpoints reproduce stored values exactly, even on awkward geometry
        std::mt19937_64 rng(1);
        for (int trial = 0; trial < 20; ++trial) {
            auto grid = testing::random_grid({7, 5, 3}, rng);
            grid.geometry.origin = vec({0.3, -12.7, 1e3 / 7.0});
            grid.geometry.spacing = vec({0.7, 0.1, 1.3});
            for (Index k = 0; k < grid.geometry.cell_count(); ++k) {
                CHECK(interp_density(grid, grid.geometry.midpoint(k)) == grid.values[k]);
            }
        }

        std::uniform_real_distribution<double> u(0.0, 4.0);
        const auto grid = testing::random_grid({5, 5}, rng);
        for (int i = 0; i < 100; ++i) {
            const Vec y = vec({u(rng), u(rng)});
            CHECK(std::abs(interp_density(grid, y) - oracle::lerp_density(grid, y)) <= 1e-15);
            CHECK(score_density(grid, y) == -interp_density(grid, y));
        }
    }

    TEST_CASE("score_density of delta and uniform grids")
    {
        const auto delta = testing::delta_grid({4, 4}, 5);
        CHECK(score_density(delta, delta.geometry.midpoint(5)) == -1.0);
        const auto uni = testing::uniform_grid({4, 5});
        CHECK(score_density(uni, vec({1.3, 2.7})) == doctest::Approx(-1.0 / 20.0).epsilon(1e-14));
    }

    TEST_CASE("border clamping and out-of-domain")
    {
        const auto g = one_d({0.1, 0.2, 0.7});
        CHECK(interp_density(g, vec({-0.4})) == 0.1);
        CHECK(interp_density(g, vec({2.5})) == 0.7);
        try {
            interp_density(g, vec({2.6}));
            FAIL("expected OutOfDomain");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::OutOfDomain);
        }
    }

    TEST_CASE("decode")
    {
        const auto delta = testing::delta_grid({3, 4}, 7);
        CHECK(decode(delta, DecodeMode::Argmax) == delta.geometry.midpoint(7));
        CHECK(decode(delta, DecodeMode::WeightedMean) == delta.geometry.midpoint(7));
        CHECK(decode(one_d({1.0 / 3, 1.0 / 3, 1.0 / 3}), DecodeMode::WeightedMean)[0] == doctest::Approx(1.0));
        CHECK(decode(one_d({0.1, 0.45, 0.45}), DecodeMode::Argmax)[0] == 1.0);
        try {
            decode(one_d({0.0, 0.0}), DecodeMode::Argmax);
            FAIL("expected DegenerateGrid");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegenerateGrid);
        }
    }

    TEST_CASE("fit_gaussian")
    {
        CHECK(fit_gaussian(testing::delta_grid({3, 3}, 4)).covariance.isZero());
        CHECK(fit_gaussian(one_d({1.0 / 3, 1.0 / 3, 1.0 / 3}, -1.0)).covariance(0, 0)
              == doctest::Approx(2.0 / 3.0));

        ScenarioConfig c;
        c.dims = 2;
        c.grid_shape = {101, 101};
        c.spacing = vec({0.5, 0.5});
        c.n_examples = 3;
        c.truth_noise.sigma = 2.5; // 5 cells
        for (const auto& ex : generate(c)) {
            const auto fit = fit_gaussian(*ex.grid);
            CHECK(fit.covariance(0, 0) == doctest::Approx(6.25).epsilon(0.02));
            CHECK(fit.covariance(1, 1) == doctest::Approx(6.25).epsilon(0.02));
            Eigen::SelfAdjointEigenSolver<Mat> eig(fit.covariance);
            CHECK(eig.eigenvalues().minCoeff() >= -1e-9);
        }
    }

    TEST_CASE("interpolated density integrates to about one")
    {
        ScenarioConfig c;
        c.dims = 2;
        c.grid_shape = {32, 32};
        c.spacing = vec({1.0, 1.0});
        c.n_examples = 1;
        c.truth_noise.sigma = 3.0;
        const auto grid = *generate(c).front().grid;
        double total = 0.0;
        const int r = 4;
        for (int i = 0; i < 32 * r; ++i) {
            for (int j = 0; j < 32 * r; ++j) {
                const Vec y = vec({-0.5 + (i + 0.5) / r, -0.5 + (j + 0.5) / r});
                total += interp_density(grid, y) / (r * r);
            }
        }
        CHECK(total == doctest::Approx(1.0).epsilon(0.02));
    }

    TEST_CASE("average_grids")
    {
        std::mt19937_64 rng(2);
        const auto g = testing::random_grid({4, 4}, rng);
        const std::vector<GridDistribution> same{g, g, g};
        const auto avg = average_grids(same);
        for (Index k = 0; k < g.values.size(); ++k) {
            CHECK(avg.values[k] == doctest::Approx(g.values[k]).epsilon(1e-14));
        }
        const std::vector<GridDistribution> deltas{testing::delta_grid({2, 2}, 0), testing::delta_grid({2, 2}, 3)};
        const auto half = average_grids(deltas);
        CHECK(half.values[0] == 0.5);
        CHECK(half.values[3] == 0.5);
        const std::vector<GridDistribution> mismatched{testing::uniform_grid({2, 2}), testing::uniform_grid({2, 3})};
        try {
            average_grids(mismatched);
            FAIL("expected GeometryMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::GeometryMismatch);
        }
    }

    TEST_CASE("apply_temperature")
    {
        const auto uni = testing::uniform_grid({3, 3});
        for (double tau : {0.1, 1.0, 7.0}) {
            const auto t = apply_temperature(uni, {tau});
            for (Index k = 0; k < 9; ++k) {
                CHECK(t.values[k] == doctest::Approx(1.0 / 9).epsilon(1e-12));
            }
        }
        std::mt19937_64 rng(4);
        const auto g = testing::random_grid({5, 6}, rng);
        const auto same = apply_temperature(g, {1.0});
        CHECK((same.values - g.values).cwiseAbs().maxCoeff() <= 1e-12);

        const auto two = apply_temperature(one_d({0.9, 0.1}), {1000.0});
        CHECK(std::abs(two.values[0] - 0.5) < 1e-3);
        CHECK(std::abs(two.values[1] - 0.5) < 1e-3);

        Index a = 0, b = 0;
        g.values.maxCoeff(&a);
        for (double tau : {0.01, 0.5, 3.0, 100.0}) {
            apply_temperature(g, {tau}).values.maxCoeff(&b);
            CHECK(a == b);
        }
    }

    TEST_CASE("fit_temperature")
    {
        // one-hot grids already matching the truth: NLL is flat near zero
        std::vector<Example> hot;
        for (Index k : {0, 5, 9}) {
            const auto g = testing::delta_grid({4, 4}, k);
            hot.push_back(grid_example(g, g.geometry.midpoint(k)));
        }
        const auto t = fit_temperature(hot);
        double best = std::numeric_limits<double>::infinity();
        for (double lt = std::log(0.01); lt <= std::log(100.0); lt += 0.01) {
            best = std::min(best, temperature_nll(hot, {std::exp(lt)}));
        }
        CHECK(temperature_nll(hot, t) <= best + 1e-6);

        // over-sharp heatmaps need tau > 1
        ScenarioConfig c;
        c.dims = 2;
        c.grid_shape = {32, 32};
        c.spacing = vec({1.0, 1.0});
        c.n_examples = 200;
        c.truth_noise.sigma = 2.0;
        c.heatmap.kind = HeatmapMode::Kind::Sharpened;
        c.heatmap.beta = 3.0;
        const auto sharp = generate(c);
        const auto ts = fit_temperature(sharp);
        CHECK(ts.tau > 1.0);
        CHECK(temperature_nll(sharp, ts) <= temperature_nll(sharp, {1.0}));

        const std::vector<Example> single{sharp.front()};
        CHECK(fit_temperature(single).tau > 0.0);

        try {
            fit_temperature(std::span<const Example>{});
            FAIL("expected EmptyCalibrationSet");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyCalibrationSet);
        }
    }
}
