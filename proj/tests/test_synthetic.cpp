#include <doctest.h>

#include <numbers>

#include "helpers.hpp"
#include "lmcp/calibrators.hpp"
#include "lmcp/density.hpp"
#include "lmcp/rng.hpp"
#include "lmcp/synthetic.hpp"

using namespace lmcp;
using testing::vec;

namespace {

ScenarioConfig base(int dims = 2)
{
    ScenarioConfig c;
    c.dims = dims;
    c.grid_shape = std::vector<Index>(static_cast<std::size_t>(dims), 24);
    c.spacing = Vec::Constant(dims, 1.0);
    c.n_examples = 20;
    c.truth_noise.sigma = 2.0;
    c.sample_count = 5;
    c.seed = 3;
    return c;
}

std::string field_error(const std::string& json)
{
    try {
        scenario_from_json(json);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidConfig);
        return e.what();
    }
    FAIL("expected InvalidConfig");
    return "";
}

} // namespace

TEST_SUITE("synthetic")
{
    TEST_CASE("rng sequence is fixed")
    {
        Rng a(42), b(42);
        for (int i = 0; i < 100; ++i) {
            CHECK(a.uniform() == b.uniform());
        }
        // mt19937_64 with the default seed: the standard fixes its 10000th output
        std::mt19937_64 ref;
        ref.discard(9999);
        CHECK(ref() == 9981545732273789042ull);
        CHECK(derive_seed(1, 2) != derive_seed(2, 1));
        CHECK(hash_id("a") == 0xAF63DC4C8601EC8Cull);
    }

    TEST_CASE("vanishing noise puts the truth on the center")
    {
        auto c = base();
        c.truth_noise.sigma = 1e-6;
        for (const auto& ex : generate(c)) {
            // the oracle heatmap collapses onto the cell of the center
            const Vec center = decode(*ex.grid, DecodeMode::Argmax);
            CHECK((ex.truth - ex.samples[0]).norm() < 1e-3 * 2);
            CHECK((ex.truth - center).cwiseAbs().maxCoeff() <= 0.5 + 1e-3);
        }
    }

    TEST_CASE("oracle grids are normalized and recover the covariance")
    {
        auto c = base();
        c.grid_shape = {64, 64};
        c.truth_noise.kind = NoiseModel::Kind::Anisotropic;
        c.truth_noise.covariance = Mat(2, 2);
        c.truth_noise.covariance << 9.0, 3.0, 3.0, 16.0;
        for (const auto& ex : generate(c)) {
            CHECK(ex.grid->values.sum() == doctest::Approx(1.0).epsilon(1e-12));
            const auto fit = fit_gaussian(*ex.grid);
            CHECK(fit.covariance(0, 0) == doctest::Approx(9.0).epsilon(0.05));
            CHECK(fit.covariance(1, 1) == doctest::Approx(16.0).epsilon(0.05));
            CHECK(fit.covariance(0, 1) == doctest::Approx(3.0).epsilon(0.05));
            CHECK(ex.covariance->isApprox(c.truth_noise.covariance));
            CHECK(ex.samples.size() == 5);
        }
    }

    TEST_CASE("generation is deterministic and seed dependent")
    {
        const auto a = generate(base());
        const auto b = generate(base());
        auto other = base();
        other.seed = 4;
        const auto c = generate(other);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].truth == b[i].truth);
            CHECK(a[i].grid->values == b[i].grid->values);
            CHECK(a[i].samples == b[i].samples);
        }
        CHECK(a[0].truth != c[0].truth);
    }

    TEST_CASE("heatmap modes and covariance modes")
    {
        auto c = base();
        c.grid_shape = {48, 48};
        c.n_examples = 1;
        const auto oracle = generate(c).front();
        c.heatmap.kind = HeatmapMode::Kind::Sharpened;
        c.heatmap.beta = 2.0;
        const auto sharp = generate(c).front();
        CHECK(sharp.truth == oracle.truth);
        CHECK(fit_gaussian(*sharp.grid).covariance(0, 0)
              == doctest::Approx(0.5 * fit_gaussian(*oracle.grid).covariance(0, 0)).epsilon(0.02));

        c.heatmap.kind = HeatmapMode::Kind::Shifted;
        c.heatmap.offset = vec({2.0, -1.0});
        const auto shifted = generate(c).front();
        const Vec moved = decode(*shifted.grid, DecodeMode::WeightedMean) - decode(*oracle.grid, DecodeMode::WeightedMean);
        CHECK(moved[0] == doctest::Approx(2.0).epsilon(1e-3));
        CHECK(moved[1] == doctest::Approx(-1.0).epsilon(1e-3));

        c.heatmap.kind = HeatmapMode::Kind::Oracle;
        c.covariance_mode = CovarianceMode::None;
        CHECK_FALSE(generate(c).front().covariance.has_value());
        c.covariance_mode = CovarianceMode::Sample;
        CHECK(generate(c).front().covariance.has_value());
    }

    TEST_CASE("mixture noise")
    {
        auto c = base();
        c.truth_noise.kind = NoiseModel::Kind::Mixture;
        c.truth_noise.components = {{0.3, vec({-3, 0}), Mat::Identity(2, 2)}, {0.7, vec({2, 0}), 2 * Mat::Identity(2, 2)}};
        c.n_examples = 5;
        CHECK(generate(c).size() == 5);
        CHECK(c.truth_noise.mean(2)[0] == doctest::Approx(0.5));
        try {
            true_region_volume(c, 0.1);
            FAIL("expected UnsupportedNoise");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::UnsupportedNoise);
        }
    }

    TEST_CASE("true region volume")
    {
        auto c = base();
        c.truth_noise.sigma = 1.0;
        const double alpha = std::exp(-0.5); // chi2 quantile with 2 dof equals 1
        CHECK(true_region_volume(c, alpha) == doctest::Approx(std::numbers::pi));
        c.truth_noise.sigma = 2.0;
        CHECK(true_region_volume(c, alpha) == doctest::Approx(4.0 * std::numbers::pi));

        // d = 3 cross-checked by Monte Carlo
        auto c3 = base(3);
        c3.truth_noise.sigma = 1.0;
        const double q = chi2_quantile(0.9, 3);
        Rng rng(99);
        int inside = 0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            double r2 = 0.0;
            for (int j = 0; j < 3; ++j) {
                const double z = rng.normal();
                r2 += z * z;
            }
            inside += r2 <= q ? 1 : 0;
        }
        CHECK(static_cast<double>(inside) / n == doctest::Approx(0.9).epsilon(0.002));
        CHECK(true_region_volume(c3, 0.1) == doctest::Approx(4.0 / 3.0 * std::numbers::pi * std::pow(q, 1.5)));
    }

    TEST_CASE("config parsing names the offending field")
    {
        const std::string ok = R"({"dims":2,"grid_shape":[16,16],"spacing":[1,1],"n_examples":3,
            "truth_noise":{"type":"isotropic","sigma":2},"heatmap_mode":{"type":"sharpened","beta":2},"seed":1})";
        const auto c = scenario_from_json(ok);
        CHECK(c.heatmap.beta == 2.0);
        CHECK(scenario_from_json(scenario_to_json(c)).heatmap.beta == 2.0);

        CHECK(field_error(R"({"dims":2,"grid_shape":[16,16],"spacing":[1,1],"n_examples":3,
            "truth_noise":{"type":"isotropic","sigma":2},"heatmap_mode":{"type":"sharpened","beta":0}})")
                  .find("heatmap_mode.beta")
              != std::string::npos);
        CHECK(field_error(R"({"dims":2,"grid_shape":[16,16],"spacing":[1,1],"n_examples":3,
            "truth_noise":{"type":"isotropic","sigma":-1}})")
                  .find("truth_noise.sigma")
              != std::string::npos);
        CHECK(field_error(R"({"dims":4,"grid_shape":[16,16],"spacing":[1,1],"n_examples":3,
            "truth_noise":{"type":"isotropic","sigma":1}})")
                  .find("dims")
              != std::string::npos);
        CHECK(field_error(R"({"dims":2,"grid_shape":[16,16],"spacing":[1,1],"n_examples":3,
            "truth_noise":{"type":"mixture","components":[{"weight":0.5,"mean":[0,0],"covariance":[[1,0],[0,1]]}]}})")
                  .find("weight")
              != std::string::npos);
        CHECK(field_error(R"({"dims":2,"grid_shape":[16,16],"spacing":[0,1],"n_examples":3,
            "truth_noise":{"type":"isotropic","sigma":1}})")
                  .find("spacing")
              != std::string::npos);
        CHECK(field_error("not json").size() > 0);
    }

    TEST_CASE("simulate writes manifests that load back")
    {
        testing::TempDir dir("sim");
        auto c = base();
        c.splits = std::make_pair(std::size_t{6}, std::size_t{4});
        c.grid_dtype = DType::Float32;
        const auto paths = simulate(c, dir.path);
        REQUIRE(paths.size() == 2);
        const auto cal = load_dataset(paths[0]);
        const auto test = load_dataset(paths[1]);
        CHECK(cal.split == Split::Calibration);
        CHECK(test.split == Split::Test);
        CHECK(cal.examples.size() == 6);
        CHECK(test.examples.size() == 4);
        CHECK(cal.seed == std::optional<std::uint64_t>(3));
        CHECK(test.examples[0].id == "ex000006");
    }
}
