#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lmcp/tensor_io.hpp"

namespace lmcp {

struct MixtureComponent {
    double weight = 1.0;
    Vec mean; // offset from the latent center
    Mat covariance;
};

/// Truth noise around the latent center.
struct NoiseModel {
    enum class Kind { Isotropic, Anisotropic, Mixture };
    Kind kind = Kind::Isotropic;
    double sigma = 1.0;              // isotropic
    Mat covariance;                  // anisotropic
    std::vector<MixtureComponent> components; // mixture

    /// The noise law as a list of Gaussian components (one unless a mixture).
    std::vector<MixtureComponent> as_components(int dims) const;
    /// Mean offset and covariance of the full noise law.
    Vec mean(int dims) const;
    Mat total_covariance(int dims) const;
};

/// How the stored heatmap departs from the true noise density.
struct HeatmapMode {
    enum class Kind { Oracle, Sharpened, Blurred, Shifted };
    Kind kind = Kind::Oracle;
    double beta = 1.0; // exponent for sharpened/blurred
    Vec offset;        // for shifted, in mm
};

enum class CovarianceMode { True, Sample, None };

struct ScenarioConfig {
    int dims = 2;
    std::vector<Index> grid_shape;
    Vec spacing;
    Vec origin; // defaults to zeros
    /// Either n_examples (single split) or a calibration/test split.
    std::size_t n_examples = 0;
    std::optional<std::pair<std::size_t, std::size_t>> splits;
    /// Split label of the single dataset written for n_examples.
    Split single_split = Split::Calibration;
    int n_landmarks = 1;
    NoiseModel truth_noise;
    HeatmapMode heatmap;
    std::size_t sample_count = 0;
    CovarianceMode covariance_mode = CovarianceMode::True;
    bool store_point = true;
    std::uint64_t seed = 0;
    DType grid_dtype = DType::Float64;

    std::size_t total_examples() const;
    GridGeometry geometry() const;
    void validate() const;
};

ScenarioConfig scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& config);

/// All examples of the scenario, in index order; example i draws from
/// Rng(derive_seed(seed, i)). Landmark of example i is i mod n_landmarks.
std::vector<Example> generate(const ScenarioConfig& config);

/// Splits generated examples into datasets: a single one labelled
/// single_split for n_examples, else calibration followed by test.
std::vector<Dataset> generate_datasets(const ScenarioConfig& config);

/// Writes the datasets of the scenario under `dir`: dataset.json for a single
/// split, else calibration.json and test.json. Returns the manifest paths.
std::vector<std::filesystem::path> simulate(const ScenarioConfig& config, const std::filesystem::path& dir);

/// Volume of the true highest-density ellipsoid at level 1 - alpha.
double true_region_volume(const ScenarioConfig& config, double alpha);

} // namespace lmcp
