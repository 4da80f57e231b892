#include "lmcp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "json_util.hpp"
#include "lmcp/calibrators.hpp"
#include "lmcp/density.hpp"
#include "lmcp/regions.hpp"
#include "lmcp/rng.hpp"

namespace lmcp {

using detail::json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why)
{
    throw Error(ErrorCode::InvalidConfig, "invalid scenario field '" + field + "': " + why);
}

bool is_spd(const Mat& m)
{
    if (m.rows() != m.cols() || !m.allFinite() || !m.isApprox(m.transpose(), 1e-9)) {
        return false;
    }
    Eigen::LLT<Mat> llt(m);
    return llt.info() == Eigen::Success;
}

// A Gaussian component prepared for repeated density evaluation and sampling.
struct Component {
    double log_weight;
    Vec mean;
    Mat lower;    // Cholesky factor of the covariance
    Mat precision;
    double log_norm; // -0.5 * log det covariance
};

std::vector<Component> prepare(const NoiseModel& noise, int d)
{
    std::vector<Component> out;
    for (const auto& c : noise.as_components(d)) {
        Eigen::LLT<Mat> llt(c.covariance);
        Component p;
        p.log_weight = std::log(c.weight);
        p.mean = c.mean;
        p.lower = llt.matrixL();
        p.precision = llt.solve(Mat::Identity(d, d));
        p.log_norm = -p.lower.diagonal().array().log().sum();
        out.push_back(std::move(p));
    }
    return out;
}

Vec draw(const std::vector<Component>& comps, Rng& rng, int d)
{
    std::size_t pick = 0;
    if (comps.size() > 1) {
        const double u = rng.uniform();
        double cumulative = 0.0;
        pick = comps.size() - 1;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            cumulative += std::exp(comps[i].log_weight);
            if (u < cumulative) {
                pick = i;
                break;
            }
        }
    }
    Vec z(d);
    for (int j = 0; j < d; ++j) {
        z[j] = rng.normal();
    }
    return comps[pick].mean + comps[pick].lower * z;
}

// Log density (up to a constant) of the noise law at offset r from the center.
double log_density(const std::vector<Component>& comps, const double* r, int d)
{
    double best = -std::numeric_limits<double>::infinity();
    double terms[8];
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const auto& k = comps[c];
        double diff[3];
        for (int i = 0; i < d; ++i) {
            diff[i] = r[i] - k.mean[i];
        }
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                q += diff[i] * k.precision(i, j) * diff[j];
            }
        }
        terms[c] = k.log_weight + k.log_norm - 0.5 * q;
        best = std::max(best, terms[c]);
    }
    if (comps.size() == 1) {
        return terms[0];
    }
    double s = 0.0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        s += std::exp(terms[c] - best);
    }
    return best + std::log(s);
}

GridDistribution heatmap(const ScenarioConfig& cfg, const GridGeometry& g, const std::vector<Component>& comps,
                         const Vec& center)
{
    const int d = cfg.dims;
    Vec shift = center;
    if (cfg.heatmap.kind == HeatmapMode::Kind::Shifted) {
        shift += cfg.heatmap.offset;
    }
    const double beta = (cfg.heatmap.kind == HeatmapMode::Kind::Sharpened
                         || cfg.heatmap.kind == HeatmapMode::Kind::Blurred)
        ? cfg.heatmap.beta
        : 1.0;

    GridDistribution grid{g, Vec(g.cell_count())};
    double peak = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < g.cell_count(); ++k) {
        const CellIndex idx = g.unflatten(k);
        double r[3];
        for (int j = 0; j < d; ++j) {
            r[j] = g.origin[j] + static_cast<double>(idx[j]) * g.spacing[j] - shift[j];
        }
        const double l = beta * log_density(comps, r, d);
        grid.values[k] = l;
        peak = std::max(peak, l);
    }
    grid.values = (grid.values.array() - peak).exp().matrix();
    return normalize(std::move(grid));
}

// Rounds values through float32 so the in-memory grid equals what is stored.
void round_to_dtype(GridDistribution& grid, DType dtype)
{
    if (dtype == DType::Float32) {
        for (Index k = 0; k < grid.values.size(); ++k) {
            grid.values[k] = static_cast<double>(static_cast<float>(grid.values[k]));
        }
        grid = normalize(std::move(grid));
    }
}

Mat sample_covariance(const std::vector<Vec>& samples)
{
    const Index d = samples.front().size();
    Vec mean = Vec::Zero(d);
    for (const auto& s : samples) {
        mean += s;
    }
    mean /= static_cast<double>(samples.size());
    Mat cov = Mat::Zero(d, d);
    for (const auto& s : samples) {
        cov.noalias() += (s - mean) * (s - mean).transpose();
    }
    cov /= static_cast<double>(samples.size() - 1);
    return 0.5 * (cov + cov.transpose());
}

std::string example_id(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "ex%06zu", i);
    return buf;
}

Vec vec_field(const json& j, const char* key, int d, const std::string& name)
{
    Vec v;
    try {
        v = detail::vec_from_json(detail::require(j, key));
    } catch (const Error&) {
        bad(name, "expected an array of numbers");
    }
    if (v.size() != d) {
        bad(name, "expected " + std::to_string(d) + " entries");
    }
    return v;
}

Mat mat_field(const json& j, const char* key, int d, const std::string& name)
{
    Mat m;
    try {
        m = detail::mat_from_json(detail::require(j, key));
    } catch (const Error&) {
        bad(name, "expected a matrix");
    }
    if (m.rows() != d || m.cols() != d) {
        bad(name, "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
    }
    return m;
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& name)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        bad(name, "missing or wrong type");
    }
}

} // namespace

std::vector<MixtureComponent> NoiseModel::as_components(int dims) const
{
    switch (kind) {
    case Kind::Isotropic:
        return {{1.0, Vec::Zero(dims), sigma * sigma * Mat::Identity(dims, dims)}};
    case Kind::Anisotropic:
        return {{1.0, Vec::Zero(dims), covariance}};
    case Kind::Mixture:
        break;
    }
    return components;
}

Vec NoiseModel::mean(int dims) const
{
    Vec m = Vec::Zero(dims);
    for (const auto& c : as_components(dims)) {
        m += c.weight * c.mean;
    }
    return m;
}

Mat NoiseModel::total_covariance(int dims) const
{
    const Vec mu = mean(dims);
    Mat cov = Mat::Zero(dims, dims);
    for (const auto& c : as_components(dims)) {
        cov += c.weight * (c.covariance + (c.mean - mu) * (c.mean - mu).transpose());
    }
    return cov;
}

std::size_t ScenarioConfig::total_examples() const
{
    return splits ? splits->first + splits->second : n_examples;
}

GridGeometry ScenarioConfig::geometry() const
{
    return {grid_shape, origin.size() == dims ? origin : Vec::Zero(dims), spacing};
}

void ScenarioConfig::validate() const
{
    if (dims != 2 && dims != 3) {
        bad("dims", "must be 2 or 3");
    }
    if (static_cast<int>(grid_shape.size()) != dims) {
        bad("grid_shape", "must have dims entries");
    }
    for (Index n : grid_shape) {
        if (n < 2) {
            bad("grid_shape", "every axis needs at least 2 cells");
        }
    }
    if (spacing.size() != dims || !(spacing.array() > 0.0).all() || !spacing.allFinite()) {
        bad("spacing", "must have dims positive entries");
    }
    if (origin.size() != 0 && (origin.size() != dims || !origin.allFinite())) {
        bad("origin", "must have dims finite entries");
    }
    if (total_examples() == 0) {
        bad(splits ? "splits" : "n_examples", "must request at least one example");
    }
    if (n_landmarks < 1) {
        bad("n_landmarks", "must be positive");
    }
    switch (truth_noise.kind) {
    case NoiseModel::Kind::Isotropic:
        if (!(truth_noise.sigma > 0.0) || !std::isfinite(truth_noise.sigma)) {
            bad("truth_noise.sigma", "must be > 0");
        }
        break;
    case NoiseModel::Kind::Anisotropic:
        if (truth_noise.covariance.rows() != dims || !is_spd(truth_noise.covariance)) {
            bad("truth_noise.covariance", "must be a symmetric positive definite dims x dims matrix");
        }
        break;
    case NoiseModel::Kind::Mixture: {
        if (truth_noise.components.empty() || truth_noise.components.size() > 8) {
            bad("truth_noise.components", "must hold between 1 and 8 components");
        }
        double total = 0.0;
        for (const auto& c : truth_noise.components) {
            if (!(c.weight > 0.0)) {
                bad("truth_noise.components.weight", "must be > 0");
            }
            if (c.mean.size() != dims) {
                bad("truth_noise.components.mean", "must have dims entries");
            }
            if (c.covariance.rows() != dims || !is_spd(c.covariance)) {
                bad("truth_noise.components.covariance", "must be symmetric positive definite");
            }
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            bad("truth_noise.components.weight", "weights must sum to 1");
        }
        break;
    }
    }
    switch (heatmap.kind) {
    case HeatmapMode::Kind::Sharpened:
    case HeatmapMode::Kind::Blurred:
        if (!(heatmap.beta > 0.0) || !std::isfinite(heatmap.beta)) {
            bad("heatmap_mode.beta", "must be > 0");
        }
        break;
    case HeatmapMode::Kind::Shifted:
        if (heatmap.offset.size() != dims || !heatmap.offset.allFinite()) {
            bad("heatmap_mode.offset", "must have dims finite entries");
        }
        break;
    case HeatmapMode::Kind::Oracle:
        break;
    }
    if (covariance_mode == CovarianceMode::Sample && sample_count < static_cast<std::size_t>(dims) + 1) {
        bad("covariance_mode", "\"sample\" needs sample_count >= dims + 1");
    }
}

ScenarioConfig scenario_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        bad("<root>", "must be an object");
    }
    ScenarioConfig c;
    c.dims = get_field<int>(j, "dims", "dims");
    if (c.dims != 2 && c.dims != 3) {
        bad("dims", "must be 2 or 3");
    }
    c.grid_shape = get_field<std::vector<Index>>(j, "grid_shape", "grid_shape");
    c.spacing = vec_field(j, "spacing", c.dims, "spacing");
    if (j.contains("origin")) {
        c.origin = vec_field(j, "origin", c.dims, "origin");
    }
    if (j.contains("splits")) {
        const auto& s = j.at("splits");
        c.splits = std::make_pair(get_field<std::size_t>(s, "calibration", "splits.calibration"),
                                  get_field<std::size_t>(s, "test", "splits.test"));
    } else {
        c.n_examples = get_field<std::size_t>(j, "n_examples", "n_examples");
    }
    if (j.contains("split")) {
        try {
            c.single_split = split_from_string(get_field<std::string>(j, "split", "split"));
        } catch (const Error&) {
            bad("split", "must be train, calibration or test");
        }
    }
    if (j.contains("n_landmarks")) {
        c.n_landmarks = get_field<int>(j, "n_landmarks", "n_landmarks");
    }

    const auto& noise = detail::require(j, "truth_noise");
    const auto kind = get_field<std::string>(noise, "type", "truth_noise.type");
    if (kind == "isotropic") {
        c.truth_noise.kind = NoiseModel::Kind::Isotropic;
        c.truth_noise.sigma = get_field<double>(noise, "sigma", "truth_noise.sigma");
    } else if (kind == "anisotropic") {
        c.truth_noise.kind = NoiseModel::Kind::Anisotropic;
        c.truth_noise.covariance = mat_field(noise, "covariance", c.dims, "truth_noise.covariance");
    } else if (kind == "mixture") {
        c.truth_noise.kind = NoiseModel::Kind::Mixture;
        const auto& comps = detail::require(noise, "components");
        if (!comps.is_array()) {
            bad("truth_noise.components", "must be an array");
        }
        for (const auto& cj : comps) {
            c.truth_noise.components.push_back(
                {get_field<double>(cj, "weight", "truth_noise.components.weight"),
                 vec_field(cj, "mean", c.dims, "truth_noise.components.mean"),
                 mat_field(cj, "covariance", c.dims, "truth_noise.components.covariance")});
        }
    } else {
        bad("truth_noise.type", "must be isotropic, anisotropic or mixture");
    }

    if (j.contains("heatmap_mode")) {
        const auto& h = j.at("heatmap_mode");
        const auto mode = h.is_string() ? h.get<std::string>() : get_field<std::string>(h, "type", "heatmap_mode.type");
        if (mode == "oracle") {
            c.heatmap.kind = HeatmapMode::Kind::Oracle;
        } else if (mode == "sharpened" || mode == "blurred") {
            c.heatmap.kind = mode == "sharpened" ? HeatmapMode::Kind::Sharpened : HeatmapMode::Kind::Blurred;
            c.heatmap.beta = get_field<double>(h, "beta", "heatmap_mode.beta");
        } else if (mode == "shifted") {
            c.heatmap.kind = HeatmapMode::Kind::Shifted;
            c.heatmap.offset = vec_field(h, "offset", c.dims, "heatmap_mode.offset");
        } else {
            bad("heatmap_mode.type", "must be oracle, sharpened, blurred or shifted");
        }
    }
    if (j.contains("sample_count")) {
        c.sample_count = get_field<std::size_t>(j, "sample_count", "sample_count");
    }
    if (j.contains("covariance_mode")) {
        const auto mode = get_field<std::string>(j, "covariance_mode", "covariance_mode");
        if (mode == "true") {
            c.covariance_mode = CovarianceMode::True;
        } else if (mode == "sample") {
            c.covariance_mode = CovarianceMode::Sample;
        } else if (mode == "none") {
            c.covariance_mode = CovarianceMode::None;
        } else {
            bad("covariance_mode", "must be true, sample or none");
        }
    }
    if (j.contains("store_point")) {
        c.store_point = get_field<bool>(j, "store_point", "store_point");
    }
    if (j.contains("seed")) {
        c.seed = get_field<std::uint64_t>(j, "seed", "seed");
    }
    if (j.contains("dtype")) {
        const auto dt = get_field<std::string>(j, "dtype", "dtype");
        if (dt == "float32") {
            c.grid_dtype = DType::Float32;
        } else if (dt == "float64") {
            c.grid_dtype = DType::Float64;
        } else {
            bad("dtype", "must be float32 or float64");
        }
    }
    c.validate();
    return c;
}

std::string scenario_to_json(const ScenarioConfig& c)
{
    json j;
    j["dims"] = c.dims;
    j["grid_shape"] = c.grid_shape;
    j["spacing"] = detail::vec_to_json(c.spacing);
    if (c.origin.size() != 0) {
        j["origin"] = detail::vec_to_json(c.origin);
    }
    if (c.splits) {
        j["splits"] = {{"calibration", c.splits->first}, {"test", c.splits->second}};
    } else {
        j["n_examples"] = c.n_examples;
        j["split"] = to_string(c.single_split);
    }
    j["n_landmarks"] = c.n_landmarks;
    switch (c.truth_noise.kind) {
    case NoiseModel::Kind::Isotropic:
        j["truth_noise"] = {{"type", "isotropic"}, {"sigma", c.truth_noise.sigma}};
        break;
    case NoiseModel::Kind::Anisotropic:
        j["truth_noise"] = {{"type", "anisotropic"}, {"covariance", detail::mat_to_json(c.truth_noise.covariance)}};
        break;
    case NoiseModel::Kind::Mixture: {
        json comps = json::array();
        for (const auto& k : c.truth_noise.components) {
            comps.push_back({{"weight", k.weight},
                             {"mean", detail::vec_to_json(k.mean)},
                             {"covariance", detail::mat_to_json(k.covariance)}});
        }
        j["truth_noise"] = {{"type", "mixture"}, {"components", comps}};
        break;
    }
    }
    switch (c.heatmap.kind) {
    case HeatmapMode::Kind::Oracle: j["heatmap_mode"] = {{"type", "oracle"}}; break;
    case HeatmapMode::Kind::Sharpened: j["heatmap_mode"] = {{"type", "sharpened"}, {"beta", c.heatmap.beta}}; break;
    case HeatmapMode::Kind::Blurred: j["heatmap_mode"] = {{"type", "blurred"}, {"beta", c.heatmap.beta}}; break;
    case HeatmapMode::Kind::Shifted:
        j["heatmap_mode"] = {{"type", "shifted"}, {"offset", detail::vec_to_json(c.heatmap.offset)}};
        break;
    }
    j["sample_count"] = c.sample_count;
    j["covariance_mode"] = c.covariance_mode == CovarianceMode::True     ? "true"
                           : c.covariance_mode == CovarianceMode::Sample ? "sample"
                                                                         : "none";
    j["store_point"] = c.store_point;
    j["seed"] = c.seed;
    j["dtype"] = c.grid_dtype == DType::Float32 ? "float32" : "float64";
    return j.dump(2);
}

std::vector<Example> generate(const ScenarioConfig& config)
{
    config.validate();
    const int d = config.dims;
    const GridGeometry g = config.geometry();
    const auto comps = prepare(config.truth_noise, d);
    const Vec lower = g.lower_bound();
    const Vec extent = g.upper_bound() - lower;
    const Mat true_cov = config.truth_noise.total_covariance(d);

    std::vector<Example> out;
    out.reserve(config.total_examples());
    for (std::size_t i = 0; i < config.total_examples(); ++i) {
        Rng rng(derive_seed(config.seed, i));
        Example ex;
        ex.id = example_id(i);
        ex.landmark = static_cast<int>(i % static_cast<std::size_t>(config.n_landmarks));

        Vec center(d);
        for (int j = 0; j < d; ++j) {
            center[j] = lower[j] + extent[j] * (0.25 + 0.5 * rng.uniform());
        }
        ex.truth = center + draw(comps, rng, d);
        for (std::size_t s = 0; s < config.sample_count; ++s) {
            ex.samples.push_back(center + draw(comps, rng, d));
        }

        GridDistribution grid = heatmap(config, g, comps, center);
        round_to_dtype(grid, config.grid_dtype);
        if (config.store_point) {
            ex.point = decode(grid, DecodeMode::WeightedMean);
        }
        ex.grid = std::move(grid);

        if (config.covariance_mode == CovarianceMode::True) {
            ex.covariance = true_cov;
        } else if (config.covariance_mode == CovarianceMode::Sample) {
            ex.covariance = sample_covariance(ex.samples);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Dataset> generate_datasets(const ScenarioConfig& config)
{
    auto examples = generate(config);
    const auto make = [&](Split split, auto first, auto last) {
        Dataset ds;
        ds.dims = config.dims;
        ds.split = split;
        ds.seed = config.seed;
        ds.examples.assign(std::make_move_iterator(first), std::make_move_iterator(last));
        return ds;
    };
    std::vector<Dataset> out;
    if (!config.splits) {
        out.push_back(make(config.single_split, examples.begin(), examples.end()));
        return out;
    }
    const auto cut = examples.begin() + static_cast<std::ptrdiff_t>(config.splits->first);
    out.push_back(make(Split::Calibration, examples.begin(), cut));
    out.push_back(make(Split::Test, cut, examples.end()));
    return out;
}

std::vector<std::filesystem::path> simulate(const ScenarioConfig& config, const std::filesystem::path& dir)
{
    auto datasets = generate_datasets(config);
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    if (datasets.size() == 1) {
        paths.push_back(dir / "dataset.json");
    } else {
        paths.push_back(dir / "calibration.json");
        paths.push_back(dir / "test.json");
    }
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        save_dataset(datasets[k], paths[k], config.grid_dtype);
    }
    return paths;
}

double true_region_volume(const ScenarioConfig& config, double alpha)
{
    if (config.truth_noise.kind == NoiseModel::Kind::Mixture) {
        throw Error(ErrorCode::UnsupportedNoise, "the true region of a mixture is not an ellipsoid");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
    }
    const int d = config.dims;
    const Mat cov = config.truth_noise.total_covariance(d);
    return unit_ball_volume(d) * std::pow(chi2_quantile(1.0 - alpha, d), 0.5 * d) * std::sqrt(cov.determinant());
}

} // namespace lmcp
