#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmcp/density.hpp"
#include "lmcp/regions.hpp"

namespace lmcp {

enum class Method {
    Bonferroni,
    Sidak,
    MaxNonconf,
    Ellipsoidal,
    MR2CCP,
    MR2C2RStd,
    MR2C2RAps,
    NaiveR2CR,
    GaussianSample,
};

std::string to_string(Method method);
Method method_from_string(const std::string& name);
std::vector<Method> all_methods();
/// True for the methods that calibrate a threshold (and hence carry a coverage guarantee).
bool is_conformal(Method method);

/// Where the point prediction y_hat of an example comes from.
enum class CenterSource { Auto, Point, SampleMean, Grid };
/// Where the covariance behind the per-axis scale / Mahalanobis shape comes from.
enum class UncertaintySource { Auto, Samples, Covariance, Grid };

std::string to_string(CenterSource source);
std::string to_string(UncertaintySource source);
CenterSource center_source_from_string(const std::string& name);
UncertaintySource uncertainty_source_from_string(const std::string& name);

struct CalibratorConfig {
    CenterSource center = CenterSource::Auto;
    UncertaintySource uncertainty = UncertaintySource::Auto;
    /// Bin count per axis for the classification methods; empty means a
    /// quarter of the grid resolution per axis.
    std::vector<Index> bins;
    /// Fit a temperature on the calibration heatmaps before scoring.
    bool temperature = false;
    /// Randomized APS inclusion of the boundary bin.
    bool randomized = false;
    std::uint64_t seed = 0;
    /// Separate ledgers per landmark index (otherwise one pooled ledger).
    bool per_landmark = true;
};

/// Calibration scores in input order plus a cached descending copy.
struct ScoreLedger {
    std::vector<double> scores;
    std::vector<double> sorted_desc;

    static ScoreLedger from_scores(std::vector<double> scores);
    std::size_t size() const { return sorted_desc.size(); }
};

/// Index floor(alpha * (m + 1)) into the descending scores (1-based);
/// +inf below 1 and -inf above m.
double conformal_threshold(const ScoreLedger& ledger, double alpha);

/// 1-based rank used by conformal_threshold.
Index threshold_rank(std::size_t m, double alpha);

struct LandmarkState {
    std::vector<ScoreLedger> ledgers;
    std::optional<Temperature> temperature;
};

/// A fitted method; all state is alpha-independent.
struct Calibrator {
    Method method = Method::MR2CCP;
    CalibratorConfig config;
    int dims = 2;
    /// Keyed by landmark index, or by -1 when config.per_landmark is false.
    std::map<int, LandmarkState> landmarks;
};

Calibrator fit(Method method, std::span<const Example> calibration, const CalibratorConfig& config = {});

struct Prediction {
    PredictionRegion region;
    /// Non-fatal notes, e.g. an isotropic covariance fallback.
    std::vector<std::string> flags;
};

Prediction predict(const Calibrator& calibrator, const Example& example, double alpha);

/// Adaptive prediction set over the cells of `grid`: cells sorted by
/// probability (descending, C order on ties) are kept while their cumulative
/// score stays within `threshold`. With `randomized`, a seeded uniform draw
/// decides the boundary cell.
std::vector<CellIndex> aps_set(const GridDistribution& grid, double threshold, bool randomized = false,
                               std::uint64_t seed = 0);

/// APS score of `cell`: mass of all cells ranked before it plus its own mass
/// (scaled by `u` in [0, 1] when randomized).
double aps_score(const GridDistribution& grid, const CellIndex& cell, double u = 1.0);

/// Sums a heatmap into `bins` equal blocks per axis; each axis resolution
/// must be divisible by its bin count.
GridDistribution bin_grid(const GridDistribution& grid, const std::vector<Index>& bins);

/// Chi-square quantile with d degrees of freedom.
double chi2_quantile(double p, int dof);

} // namespace lmcp
