#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>
#include <sys/wait.h>

#include "helpers.hpp"
#include "lmcp/serialization.hpp"
#include "lmcp/tensor_io.hpp"

using namespace lmcp;
using testing::TempDir;

namespace {

int run(const std::string& args)
{
    const std::string cmd = std::string(LMCP_CLI) + " " + args + " 2>/dev/null >/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p)
{
    return "'" + p.string() + "'";
}

void write(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

std::string scenario(int n, int dims = 2, const std::string& extra = "")
{
    const std::string shape = dims == 2 ? "[16,16]" : "[16,16,8]";
    const std::string spacing = dims == 2 ? "[1,1]" : "[1,1,1]";
    return R"({"dims":)" + std::to_string(dims) + R"(,"grid_shape":)" + shape + R"(,"spacing":)" + spacing
           + R"(,"n_examples":)" + std::to_string(n)
           + R"(,"truth_noise":{"type":"isotropic","sigma":1.5},"sample_count":4,"seed":7)" + extra + "}";
}

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("simulate writes tensors and a deterministic manifest")
    {
        TempDir dir("cli1");
        write(dir / "s.json", scenario(10));
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "a")) == 0);
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "b")) == 0);
        std::size_t tensors = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir / "a/tensors")) {
            tensors += e.path().extension() == ".npy" ? 1 : 0;
        }
        CHECK(tensors == 10);
        CHECK(read_text_file(dir / "a/dataset.json") == read_text_file(dir / "b/dataset.json"));

        write(dir / "bad.json", scenario(10, 2, R"(,"heatmap_mode":{"type":"sharpened","beta":0})"));
        CHECK(run("simulate --config " + q(dir / "bad.json") + " --out " + q(dir / "c")) == 2);
        CHECK(run("simulate --config " + q(dir / "s.json")) == 2); // missing --out
    }

    TEST_CASE("calibrate, predict, evaluate and export")
    {
        TempDir dir("cli2");
        write(dir / "s.json", scenario(50));
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "d")) == 0);
        const auto data = q(dir / "d/dataset.json");

        REQUIRE(run("calibrate --method m_r2ccp --data " + data + " --out " + q(dir / "c.json")) == 0);
        const auto cal = nlohmann::json::parse(read_text_file(dir / "c.json"));
        CHECK(cal["landmarks"][0]["ledgers"][0].size() == 50);

        REQUIRE(run("predict --calibrator " + q(dir / "c.json") + " --data " + data + " --alpha 0.1 --out "
                    + q(dir / "r.json"))
                == 0);
        const auto set = region_set_from_json(read_text_file(dir / "r.json"));
        CHECK(set.records.size() == 50);
        CHECK(set.records[0].measure > 0.0);

        REQUIRE(run("evaluate --regions " + q(dir / "r.json") + " --data " + data + " --out " + q(dir / "e")) == 0);
        const auto report = report_from_json(read_text_file(dir / "e/report.json"));
        CHECK(report.pooled.n == 50);
        CHECK(std::filesystem::exists(dir / "e/report.txt"));

        CHECK(run("export-region --in " + q(dir / "r.json") + " --format json --out " + q(dir / "x.json")) == 0);
        CHECK(region_from_json(read_text_file(dir / "x.json")).index() == 2);
        CHECK(run("export-region --in " + q(dir / "r.json") + " --id ex000003 --format svg-slice --out "
                  + q(dir / "x.svg"))
              == 0);
        CHECK(read_text_file(dir / "x.svg").find("<svg") == 0);
        CHECK(run("export-region --in " + q(dir / "r.json") + " --format png") == 5);
        CHECK(run("predict --calibrator " + q(dir / "c.json") + " --data " + data + " --alpha 1.5 --out "
                  + q(dir / "r2.json"))
              == 2);
        CHECK(run("calibrate --method nope --data " + data + " --out " + q(dir / "c2.json")) == 2);
    }

    TEST_CASE("degenerate alphas give empty and full regions")
    {
        TempDir dir("cli3");
        write(dir / "s.json", scenario(10));
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "d")) == 0);
        const auto data = q(dir / "d/dataset.json");
        REQUIRE(run("calibrate --method ellipsoidal --data " + data + " --out " + q(dir / "c.json")) == 0);
        REQUIRE(run("predict --calibrator " + q(dir / "c.json") + " --data " + data + " --alpha 0.99 --out "
                    + q(dir / "hi.json"))
                == 0);
        REQUIRE(run("predict --calibrator " + q(dir / "c.json") + " --data " + data + " --alpha 0.001 --out "
                    + q(dir / "lo.json"))
                == 0);
        // Rank floor(0.99 * 11) = 10 = m: the smallest calibration score, so every
        // region is the same finite ellipse up to its center.
        const auto hi = region_set_from_json(read_text_file(dir / "hi.json")).records;
        const auto lo = region_set_from_json(read_text_file(dir / "lo.json")).records;
        REQUIRE(hi.size() == lo.size());
        for (std::size_t i = 0; i < hi.size(); ++i) {
            CHECK(std::isfinite(hi[i].measure));
            CHECK(hi[i].measure > 0.0);
            CHECK(std::isinf(lo[i].measure));
        }
    }

    TEST_CASE("covariance fallback is flagged in the report")
    {
        TempDir dir("cli5");
        std::string s = scenario(12);
        s.replace(s.find(R"("sample_count":4)"), 16, R"("sample_count":2)");
        write(dir / "s.json", s);
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "d")) == 0);
        const auto data = q(dir / "d/dataset.json");
        REQUIRE(run("calibrate --method gaussian_sample --config '{\"uncertainty\":\"samples\"}' --data " + data
                    + " --out " + q(dir / "c.json"))
                == 0);
        REQUIRE(run("predict --calibrator " + q(dir / "c.json") + " --data " + data + " --alpha 0.1 --out "
                    + q(dir / "r.json"))
                == 0);
        REQUIRE(run("evaluate --regions " + q(dir / "r.json") + " --data " + data + " --out " + q(dir / "e")) == 0);
        const auto report = report_from_json(read_text_file(dir / "e/report.json"));
        REQUIRE(report.flags.size() == 1);
        CHECK(report.flags[0] == "isotropic_covariance_fallback (12 of 12 regions)");
        CHECK(read_text_file(dir / "e/report.txt").find("isotropic_covariance_fallback") != std::string::npos);
    }

    TEST_CASE("error exit codes")
    {
        TempDir dir("cli4");
        write(dir / "s.json", scenario(12, 2, R"(,"sample_count":0,"covariance_mode":"none")"));
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "d")) == 0);
        auto manifest = nlohmann::json::parse(read_text_file(dir / "d/dataset.json"));
        for (auto& ex : manifest["examples"]) {
            ex.erase("grid");
        }
        write(dir / "d/pointonly.json", manifest.dump());
        CHECK(run("calibrate --method ellipsoidal --data " + q(dir / "d/pointonly.json") + " --out "
                  + q(dir / "c.json"))
              == 3);

        // bonferroni in 3D keeps three ledgers; 2D test data then mismatch
        write(dir / "s3.json", scenario(8, 3));
        REQUIRE(run("simulate --config " + q(dir / "s3.json") + " --out " + q(dir / "d3")) == 0);
        REQUIRE(run("calibrate --method bonferroni --data " + q(dir / "d3/dataset.json") + " --out "
                    + q(dir / "b3.json"))
                == 0);
        const auto b3 = nlohmann::json::parse(read_text_file(dir / "b3.json"));
        CHECK(b3["landmarks"][0]["ledgers"].size() == 3);
        CHECK(run("predict --calibrator " + q(dir / "b3.json") + " --data " + q(dir / "d/dataset.json")
                  + " --alpha 0.1 --out " + q(dir / "r.json"))
              == 3);

        // evaluating regions against a dataset with disjoint ids
        REQUIRE(run("predict --calibrator " + q(dir / "b3.json") + " --data " + q(dir / "d3/dataset.json")
                    + " --alpha 0.1 --out " + q(dir / "r3.json"))
                == 0);
        auto other = nlohmann::json::parse(read_text_file(dir / "d3/dataset.json"));
        for (auto& ex : other["examples"]) {
            ex["id"] = "other_" + ex["id"].get<std::string>();
        }
        write(dir / "d3/other.json", other.dump());
        CHECK(run("evaluate --regions " + q(dir / "r3.json") + " --data " + q(dir / "d3/other.json") + " --out "
                  + q(dir / "e"))
              == 4);
        CHECK(run("calibrate --method m_r2ccp --data " + q(dir / "nowhere.json") + " --out " + q(dir / "c.json"))
              == 3);
    }

    TEST_CASE("separate processes reproduce in-process predictions bit for bit")
    {
        TempDir dir("cli5");
        write(dir / "s.json", scenario(30, 2, R"(,"n_landmarks":2)"));
        REQUIRE(run("simulate --config " + q(dir / "s.json") + " --out " + q(dir / "d")) == 0);
        const auto ds = load_dataset(dir / "d/dataset.json");
        for (Method m : all_methods()) {
            const auto name = to_string(m);
            REQUIRE(run("calibrate --method " + name + " --data " + q(dir / "d/dataset.json") + " --out "
                        + q(dir / (name + ".json")))
                    == 0);
            REQUIRE(run("predict --calibrator " + q(dir / (name + ".json")) + " --data " + q(dir / "d/dataset.json")
                        + " --alpha 0.2 --out " + q(dir / (name + "_r.json")))
                    == 0);
            const auto set = region_set_from_json(read_text_file(dir / (name + "_r.json")));
            const auto cal = fit(m, ds.examples);
            REQUIRE(set.records.size() == ds.examples.size());
            for (std::size_t i = 0; i < ds.examples.size(); ++i) {
                CHECK(region_to_json(set.records[i].region) == region_to_json(predict(cal, ds.examples[i], 0.2).region));
            }
        }
    }
}
