#include "lmcp/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "lmcp/rng.hpp"

namespace lmcp {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double scale_floor = 1e-6;    // mm, per-axis uncertainty floor
constexpr double mass_tolerance = 1e-12; // cumulative-mass comparisons in naive regions

void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
}

bool uses_grid_scores(Method m)
{
    return m == Method::MR2CCP || m == Method::MR2C2RStd || m == Method::MR2C2RAps || m == Method::NaiveR2CR;
}

bool needs_ledger(Method m)
{
    return m != Method::NaiveR2CR && m != Method::GaussianSample;
}

struct Moments {
    Vec mean;
    Mat covariance;
    bool isotropic_fallback = false;
};

// Unbiased sample covariance; with fewer than d + 1 draws, an isotropic
// covariance whose variance is the mean squared deviation per coordinate.
Moments sample_moments(const std::vector<Vec>& samples)
{
    const auto n = static_cast<Index>(samples.size());
    const Index d = samples.front().size();
    Vec mean = Vec::Zero(d);
    for (const auto& s : samples) {
        mean += s;
    }
    mean /= static_cast<double>(n);
    if (n >= d + 1) {
        Mat cov = Mat::Zero(d, d);
        for (const auto& s : samples) {
            const Vec r = s - mean;
            cov.noalias() += r * r.transpose();
        }
        cov /= static_cast<double>(n - 1);
        return {mean, 0.5 * (cov + cov.transpose()), false};
    }
    double msd = 0.0;
    for (const auto& s : samples) {
        msd += (s - mean).squaredNorm();
    }
    msd /= static_cast<double>(n * d);
    return {mean, msd * Mat::Identity(d, d), true};
}

// Adds eps * I with eps = 1e-9 * trace / d when the smallest eigenvalue falls below eps.
Mat regularize(const Mat& cov)
{
    const Index d = cov.rows();
    Mat sym = 0.5 * (cov + cov.transpose());
    const double eps = std::max(1e-9 * sym.trace() / static_cast<double>(d), scale_floor * scale_floor);
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < eps) {
        sym += eps * Mat::Identity(d, d);
    }
    return sym;
}

GaussianFit native_grid_fit(const Example& ex)
{
    GaussianFit fit = fit_gaussian(*ex.grid);
    if (ex.to_native) {
        fit.mean = ex.to_native->apply(fit.mean);
        fit.covariance = ex.to_native->apply_covariance(fit.covariance);
    }
    return fit;
}

[[noreturn]] void missing(const Example& ex, const std::string& what)
{
    throw Error(ErrorCode::MissingField, "example '" + ex.id + "' lacks " + what);
}

Vec resolve_center(const Example& ex, CenterSource source)
{
    switch (source) {
    case CenterSource::Point:
        if (!ex.point) {
            missing(ex, "a point prediction");
        }
        return *ex.point;
    case CenterSource::SampleMean:
        if (ex.samples.empty()) {
            missing(ex, "samples");
        }
        return sample_moments(ex.samples).mean;
    case CenterSource::Grid:
        if (!ex.grid) {
            missing(ex, "a grid");
        }
        return native_grid_fit(ex).mean;
    case CenterSource::Auto:
        if (ex.point) {
            return *ex.point;
        }
        if (!ex.samples.empty()) {
            return sample_moments(ex.samples).mean;
        }
        if (ex.grid) {
            return native_grid_fit(ex).mean;
        }
        missing(ex, "a point prediction, samples or a grid");
    }
    missing(ex, "a point prediction");
}

UncertaintySource resolve_source(const Example& ex, UncertaintySource source)
{
    if (source != UncertaintySource::Auto) {
        return source;
    }
    if (ex.covariance) {
        return UncertaintySource::Covariance;
    }
    if (!ex.samples.empty()) {
        return UncertaintySource::Samples;
    }
    if (ex.grid) {
        return UncertaintySource::Grid;
    }
    missing(ex, "a covariance, samples or a grid");
}

Mat resolve_covariance(const Example& ex, UncertaintySource source, std::vector<std::string>* flags)
{
    switch (resolve_source(ex, source)) {
    case UncertaintySource::Covariance:
        if (!ex.covariance) {
            missing(ex, "a covariance");
        }
        return *ex.covariance;
    case UncertaintySource::Samples: {
        if (ex.samples.empty()) {
            missing(ex, "samples");
        }
        auto m = sample_moments(ex.samples);
        if (m.isotropic_fallback && flags) {
            flags->push_back("isotropic_covariance_fallback");
        }
        return m.covariance;
    }
    case UncertaintySource::Grid:
        if (!ex.grid) {
            missing(ex, "a grid");
        }
        return native_grid_fit(ex).covariance;
    case UncertaintySource::Auto:
        break;
    }
    missing(ex, "an uncertainty source");
}

Vec axis_scales(const Mat& cov)
{
    return cov.diagonal().cwiseMax(0.0).cwiseSqrt().cwiseMax(scale_floor);
}

int state_key(const Calibrator& cal, const Example& ex)
{
    return cal.config.per_landmark ? ex.landmark : -1;
}

const Example& check_dims(const Example& ex, int dims)
{
    if (ex.dims() != dims) {
        throw Error(ErrorCode::DimMismatch, "example '" + ex.id + "' has dimension " + std::to_string(ex.dims())
                                                + ", calibrator expects " + std::to_string(dims));
    }
    return ex;
}

const GridDistribution& require_grid(const Example& ex)
{
    if (!ex.grid) {
        missing(ex, "a grid");
    }
    return *ex.grid;
}

GridDistribution prepared_grid(const Example& ex, const std::optional<Temperature>& t)
{
    const auto& g = require_grid(ex);
    return t ? apply_temperature(g, *t) : g;
}

std::vector<Index> resolve_bins(const GridGeometry& g, const std::vector<Index>& configured)
{
    std::vector<Index> bins(static_cast<std::size_t>(g.dims()));
    for (int j = 0; j < g.dims(); ++j) {
        bins[j] = configured.empty() ? std::max<Index>(1, g.shape[j] / 4) : configured[j];
    }
    return bins;
}

// Cells ordered by probability, descending, ties in C order.
std::vector<Index> descending_order(const Vec& values)
{
    std::vector<Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });
    return order;
}

double uniform_for(std::uint64_t seed, const std::string& id)
{
    return Rng(derive_seed(seed, hash_id(id))).uniform();
}

double per_axis_alpha(Method m, double alpha, int d)
{
    if (m == Method::Bonferroni) {
        return alpha / d;
    }
    return 1.0 - std::pow(1.0 - alpha, 1.0 / d);
}

} // namespace

// ---------------------------------------------------------------------------

std::string to_string(Method method)
{
    switch (method) {
    case Method::Bonferroni: return "bonferroni";
    case Method::Sidak: return "sidak";
    case Method::MaxNonconf: return "max_nonconf";
    case Method::Ellipsoidal: return "ellipsoidal";
    case Method::MR2CCP: return "m_r2ccp";
    case Method::MR2C2RStd: return "m_r2c2r_std";
    case Method::MR2C2RAps: return "m_r2c2r_aps";
    case Method::NaiveR2CR: return "naive_r2cr";
    case Method::GaussianSample: return "gaussian_sample";
    }
    return "unknown";
}

std::vector<Method> all_methods()
{
    return {Method::Bonferroni, Method::Sidak,     Method::MaxNonconf, Method::Ellipsoidal,   Method::MR2CCP,
            Method::MR2C2RStd,  Method::MR2C2RAps, Method::NaiveR2CR,  Method::GaussianSample};
}

Method method_from_string(const std::string& name)
{
    for (Method m : all_methods()) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown method '" + name + "'");
}

bool is_conformal(Method method)
{
    return needs_ledger(method);
}

std::string to_string(CenterSource source)
{
    switch (source) {
    case CenterSource::Auto: return "auto";
    case CenterSource::Point: return "point";
    case CenterSource::SampleMean: return "sample_mean";
    case CenterSource::Grid: return "grid";
    }
    return "auto";
}

std::string to_string(UncertaintySource source)
{
    switch (source) {
    case UncertaintySource::Auto: return "auto";
    case UncertaintySource::Samples: return "samples";
    case UncertaintySource::Covariance: return "covariance";
    case UncertaintySource::Grid: return "grid";
    }
    return "auto";
}

CenterSource center_source_from_string(const std::string& name)
{
    for (auto s : {CenterSource::Auto, CenterSource::Point, CenterSource::SampleMean, CenterSource::Grid}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown center source '" + name + "'");
}

UncertaintySource uncertainty_source_from_string(const std::string& name)
{
    for (auto s : {UncertaintySource::Auto, UncertaintySource::Samples, UncertaintySource::Covariance,
                   UncertaintySource::Grid}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown uncertainty source '" + name + "'");
}

ScoreLedger ScoreLedger::from_scores(std::vector<double> scores)
{
    ScoreLedger ledger;
    ledger.sorted_desc = scores;
    std::stable_sort(ledger.sorted_desc.begin(), ledger.sorted_desc.end(), std::greater<>());
    ledger.scores = std::move(scores);
    return ledger;
}

Index threshold_rank(std::size_t m, double alpha)
{
    // The small offset absorbs decimal representation error, e.g. 0.29 * 100
    // evaluating to 28.999999999999996.
    return static_cast<Index>(std::floor(alpha * static_cast<double>(m + 1) + 1e-9));
}

double conformal_threshold(const ScoreLedger& ledger, double alpha)
{
    if (ledger.size() == 0) {
        throw Error(ErrorCode::EmptyLedger, "cannot take a threshold of an empty ledger");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
    }
    const Index k = threshold_rank(ledger.size(), alpha);
    if (k < 1) {
        return inf;
    }
    if (k > static_cast<Index>(ledger.size())) {
        return -inf;
    }
    return ledger.sorted_desc[static_cast<std::size_t>(k - 1)];
}

double chi2_quantile(double p, int dof)
{
    return boost::math::quantile(boost::math::chi_squared(dof), p);
}

GridDistribution bin_grid(const GridDistribution& grid, const std::vector<Index>& bins)
{
    const auto& g = grid.geometry;
    const int d = g.dims();
    if (static_cast<int>(bins.size()) != d) {
        throw Error(ErrorCode::InvalidConfig, "bin counts must be given for every axis");
    }
    GridGeometry binned;
    binned.shape.resize(static_cast<std::size_t>(d));
    binned.origin.resize(d);
    binned.spacing.resize(d);
    std::array<Index, 3> factor{1, 1, 1};
    for (int j = 0; j < d; ++j) {
        if (bins[j] < 1 || g.shape[j] % bins[j] != 0) {
            throw Error(ErrorCode::InvalidConfig, "axis " + std::to_string(j) + " resolution "
                                                      + std::to_string(g.shape[j]) + " is not divisible into "
                                                      + std::to_string(bins[j]) + " bins");
        }
        factor[j] = g.shape[j] / bins[j];
        binned.shape[j] = bins[j];
        binned.spacing[j] = static_cast<double>(factor[j]) * g.spacing[j];
        binned.origin[j] = g.origin[j] + 0.5 * static_cast<double>(factor[j] - 1) * g.spacing[j];
    }
    GridDistribution out{binned, Vec::Zero(binned.cell_count())};
    for (Index k = 0; k < g.cell_count(); ++k) {
        CellIndex idx = g.unflatten(k);
        for (int j = 0; j < d; ++j) {
            idx[j] /= factor[j];
        }
        out.values[binned.flatten(idx)] += grid.values[k];
    }
    return out;
}

double aps_score(const GridDistribution& grid, const CellIndex& cell, double u)
{
    const Index target = grid.geometry.flatten(cell);
    double cumulative = 0.0;
    for (Index k : descending_order(grid.values)) {
        if (k == target) {
            return cumulative + u * grid.values[k];
        }
        cumulative += grid.values[k];
    }
    throw Error(ErrorCode::IndexOutOfRange, "cell outside the grid");
}

namespace {

std::vector<CellIndex> aps_set_with_u(const GridDistribution& grid, double threshold, double u)
{
    const auto& g = grid.geometry;
    std::vector<CellIndex> out;
    double cumulative = 0.0;
    for (Index k : descending_order(grid.values)) {
        // Scores never exceed the total mass of one, so a threshold of one
        // keeps every cell regardless of summation rounding.
        if (threshold < 1.0 && cumulative + u * grid.values[k] > threshold) {
            break;
        }
        out.push_back(g.unflatten(k));
        cumulative += grid.values[k];
    }
    return out;
}

} // namespace

std::vector<CellIndex> aps_set(const GridDistribution& grid, double threshold, bool randomized, std::uint64_t seed)
{
    const double u = randomized ? Rng(seed).uniform() : 1.0;
    return aps_set_with_u(grid, threshold, u);
}

// ---------------------------------------------------------------------------

namespace {

// Score of one calibration example; may return several values (one per axis).
std::vector<double> example_scores(Method method, const Example& ex, const CalibratorConfig& config,
                                   const std::optional<Temperature>& temperature)
{
    const int d = ex.dims();
    switch (method) {
    case Method::Bonferroni:
    case Method::Sidak:
    case Method::MaxNonconf: {
        const Vec center = resolve_center(ex, config.center);
        const Vec scales = axis_scales(resolve_covariance(ex, config.uncertainty, nullptr));
        const Vec s = (ex.truth - center).cwiseAbs().cwiseQuotient(scales);
        if (method == Method::MaxNonconf) {
            return {s.maxCoeff()};
        }
        return {s.data(), s.data() + d};
    }
    case Method::Ellipsoidal: {
        const Vec center = resolve_center(ex, config.center);
        const Mat cov = regularize(resolve_covariance(ex, config.uncertainty, nullptr));
        Eigen::LLT<Mat> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorCode::NonSPDMatrix, "example '" + ex.id + "' covariance is not SPD");
        }
        return {llt.matrixL().solve(ex.truth - center).norm()};
    }
    case Method::MR2CCP: {
        const auto grid = prepared_grid(ex, temperature);
        try {
            return {score_density(grid, to_grid_space(ex, ex.truth))};
        } catch (const Error& e) {
            if (e.code() != ErrorCode::OutOfDomain) {
                throw;
            }
            return {0.0}; // the heatmap puts no mass outside its own extent
        }
    }
    case Method::MR2C2RStd:
    case Method::MR2C2RAps: {
        const auto fine = prepared_grid(ex, temperature);
        const auto bins = bin_grid(fine, resolve_bins(fine.geometry, config.bins));
        const auto cell = bins.geometry.cell_containing(to_grid_space(ex, ex.truth));
        if (!cell) {
            return {1.0};
        }
        if (method == Method::MR2C2RStd) {
            return {1.0 - bins.values[bins.geometry.flatten(*cell)]};
        }
        const double u = config.randomized ? uniform_for(config.seed, ex.id) : 1.0;
        return {aps_score(bins, *cell, u)};
    }
    case Method::NaiveR2CR:
    case Method::GaussianSample:
        break;
    }
    return {};
}

} // namespace

Calibrator fit(Method method, std::span<const Example> calibration, const CalibratorConfig& config)
{
    Calibrator cal;
    cal.method = method;
    cal.config = config;
    if (!config.bins.empty()) {
        for (Index k : config.bins) {
            if (k < 1) {
                throw Error(ErrorCode::InvalidConfig, "bin counts must be positive");
            }
        }
    }

    const bool wants_temperature = config.temperature && uses_grid_scores(method);
    if (calibration.empty()) {
        if (needs_ledger(method) || wants_temperature) {
            throw Error(ErrorCode::EmptyCalibrationSet, "method " + to_string(method) + " needs calibration examples");
        }
        return cal;
    }
    cal.dims = calibration.front().dims();

    std::map<int, std::vector<const Example*>> groups;
    for (const auto& ex : calibration) {
        check_dims(ex, cal.dims);
        groups[config.per_landmark ? ex.landmark : -1].push_back(&ex);
    }

    for (const auto& [key, members] : groups) {
        LandmarkState state;
        if (wants_temperature) {
            state.temperature = fit_temperature(std::span<const Example* const>(members));
        }
        if (needs_ledger(method)) {
            std::vector<std::vector<double>> columns;
            for (const Example* ex : members) {
                auto scores = example_scores(method, *ex, config, state.temperature);
                columns.resize(scores.size());
                for (std::size_t c = 0; c < scores.size(); ++c) {
                    columns[c].push_back(scores[c]);
                }
            }
            for (auto& column : columns) {
                state.ledgers.push_back(ScoreLedger::from_scores(std::move(column)));
            }
        }
        cal.landmarks.emplace(key, std::move(state));
    }
    return cal;
}

Prediction predict(const Calibrator& cal, const Example& ex, double alpha)
{
    check_alpha(alpha);
    const int d = ex.dims();
    if (!cal.landmarks.empty()) {
        check_dims(ex, cal.dims);
    }

    const LandmarkState* state = nullptr;
    const auto it = cal.landmarks.find(state_key(cal, ex));
    if (it != cal.landmarks.end()) {
        state = &it->second;
    } else if (needs_ledger(cal.method) || (cal.config.temperature && uses_grid_scores(cal.method))) {
        throw Error(ErrorCode::UncalibratedLandmark,
                    "no calibration state for landmark " + std::to_string(ex.landmark) + " (example '" + ex.id + "')");
    }
    const std::optional<Temperature> temperature = state ? state->temperature : std::nullopt;

    Prediction out;
    const auto native = [&](PredictionRegion r) { return ex.to_native ? transform(r, *ex.to_native) : r; };

    switch (cal.method) {
    case Method::Bonferroni:
    case Method::Sidak: {
        const Vec center = resolve_center(ex, cal.config.center);
        const Vec scales = axis_scales(resolve_covariance(ex, cal.config.uncertainty, &out.flags));
        const double alpha_axis = per_axis_alpha(cal.method, alpha, d);
        HyperRect rect{center, Vec(d), false};
        for (int j = 0; j < d; ++j) {
            const double q = conformal_threshold(state->ledgers.at(static_cast<std::size_t>(j)), alpha_axis);
            rect.empty = rect.empty || q == -inf;
            rect.half_widths[j] = q == -inf ? 0.0 : q * scales[j];
        }
        out.region = rect;
        break;
    }
    case Method::MaxNonconf: {
        const Vec center = resolve_center(ex, cal.config.center);
        const Vec scales = axis_scales(resolve_covariance(ex, cal.config.uncertainty, &out.flags));
        const double q = conformal_threshold(state->ledgers.front(), alpha);
        out.region = q == -inf ? HyperRect{center, Vec::Zero(d), true} : HyperRect{center, q * scales, false};
        break;
    }
    case Method::Ellipsoidal: {
        const Vec center = resolve_center(ex, cal.config.center);
        const Mat cov = regularize(resolve_covariance(ex, cal.config.uncertainty, &out.flags));
        const double q = conformal_threshold(state->ledgers.front(), alpha);
        out.region = Ellipsoid{center, cov, q == -inf ? 0.0 : q, q == -inf};
        break;
    }
    case Method::MR2CCP: {
        const auto grid = prepared_grid(ex, temperature);
        const double q = conformal_threshold(state->ledgers.front(), alpha);
        GridMask mask{grid.geometry, std::vector<std::uint8_t>(static_cast<std::size_t>(grid.values.size()), 0)};
        for (Index k = 0; k < grid.values.size(); ++k) {
            mask.included[static_cast<std::size_t>(k)] = -grid.values[k] <= q;
        }
        out.region = native(std::move(mask));
        break;
    }
    case Method::MR2C2RStd:
    case Method::MR2C2RAps: {
        const auto fine = prepared_grid(ex, temperature);
        const auto bins = bin_grid(fine, resolve_bins(fine.geometry, cal.config.bins));
        const double q = conformal_threshold(state->ledgers.front(), alpha);
        std::vector<CellIndex> chosen;
        if (cal.method == Method::MR2C2RStd) {
            for (Index k = 0; k < bins.values.size(); ++k) {
                if (1.0 - bins.values[k] <= q) {
                    chosen.push_back(bins.geometry.unflatten(k));
                }
            }
        } else {
            const double u = cal.config.randomized ? uniform_for(cal.config.seed, ex.id) : 1.0;
            chosen = aps_set_with_u(bins, q, u);
        }
        out.region = native(bins_to_region(bins.geometry, chosen));
        break;
    }
    case Method::NaiveR2CR: {
        const auto grid = prepared_grid(ex, temperature);
        GridMask mask{grid.geometry, std::vector<std::uint8_t>(static_cast<std::size_t>(grid.values.size()), 0)};
        const double target = 1.0 - alpha - mass_tolerance;
        double cumulative = 0.0;
        for (Index k : descending_order(grid.values)) {
            mask.included[static_cast<std::size_t>(k)] = 1;
            cumulative += grid.values[k];
            if (cumulative >= target) {
                break;
            }
        }
        out.region = native(std::move(mask));
        break;
    }
    case Method::GaussianSample: {
        Vec center;
        Mat cov;
        switch (resolve_source(ex, cal.config.uncertainty)) {
        case UncertaintySource::Samples: {
            if (ex.samples.empty()) {
                missing(ex, "samples");
            }
            auto m = sample_moments(ex.samples);
            if (m.isotropic_fallback) {
                out.flags.push_back("isotropic_covariance_fallback");
            }
            center = m.mean;
            cov = m.covariance;
            break;
        }
        case UncertaintySource::Grid: {
            if (!ex.grid) {
                missing(ex, "a grid");
            }
            auto fit = native_grid_fit(ex);
            center = fit.mean;
            cov = fit.covariance;
            break;
        }
        default:
            center = resolve_center(ex, cal.config.center);
            cov = resolve_covariance(ex, UncertaintySource::Covariance, &out.flags);
            break;
        }
        out.region = Ellipsoid{center, regularize(cov), std::sqrt(chi2_quantile(1.0 - alpha, d)), false};
        break;
    }
    }
    return out;
}

} // namespace lmcp
