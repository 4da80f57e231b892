#include "lmcp/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lmcp {

namespace {

constexpr double probability_floor = 1e-12;

struct AxisBracket {
    Index lower = 0;
    Index upper = 0;
    double t = 0.0; // weight of the upper vertex
};

AxisBracket bracket_axis(double y, double origin, double spacing, Index n)
{
    double u = (y - origin) / spacing;
    if (!(u >= -0.5) || !(u <= static_cast<double>(n) - 0.5)) {
        throw Error(ErrorCode::OutOfDomain, "point lies outside the physical grid extent");
    }
    if (n == 1) {
        return {0, 0, 0.0};
    }
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));

    // Exactly on a midpoint: use a 0/1 weight so the node value is reproduced
    // bit-for-bit even when (y - origin) / spacing does not round to an integer.
    const double nearest = std::round(u);
    Index k;
    double t;
    if (origin + nearest * spacing == y || nearest == u) {
        k = static_cast<Index>(nearest);
        t = 0.0;
    } else {
        k = static_cast<Index>(std::floor(u));
        t = u - static_cast<double>(k);
    }
    if (k >= n - 1) {
        k = n - 2;
        t = 1.0;
    }
    return {k, k + 1, t};
}

} // namespace

double interp_density(const GridDistribution& grid, const Vec& y)
{
    const auto& g = grid.geometry;
    const int d = g.dims();
    if (y.size() != d) {
        throw Error(ErrorCode::DimMismatch, "point dimension differs from grid dimension");
    }
    std::array<AxisBracket, 3> axes{};
    for (int j = 0; j < d; ++j) {
        axes[j] = bracket_axis(y[j], g.origin[j], g.spacing[j], g.shape[j]);
    }

    double value = 0.0;
    for (unsigned corner = 0; corner < (1u << d); ++corner) {
        double weight = 1.0;
        CellIndex idx{0, 0, 0};
        for (int j = 0; j < d; ++j) {
            const bool up = (corner >> j) & 1u;
            idx[j] = up ? axes[j].upper : axes[j].lower;
            weight *= up ? axes[j].t : 1.0 - axes[j].t;
        }
        if (weight != 0.0) {
            value += weight * grid.values[g.flatten(idx)];
        }
    }
    return value;
}

double score_density(const GridDistribution& grid, const Vec& y)
{
    return -interp_density(grid, y);
}

Vec decode(const GridDistribution& grid, DecodeMode mode)
{
    const auto& g = grid.geometry;
    if (!(grid.values.sum() > 0.0)) {
        throw Error(ErrorCode::DegenerateGrid, "cannot decode an all-zero grid");
    }
    if (mode == DecodeMode::Argmax) {
        Index best = 0;
        grid.values.maxCoeff(&best); // Eigen returns the first maximal coefficient
        return g.midpoint(best);
    }
    Vec mean = Vec::Zero(g.dims());
    double total = 0.0;
    for (Index k = 0; k < g.cell_count(); ++k) {
        const double p = grid.values[k];
        if (p != 0.0) {
            mean += p * g.midpoint(k);
            total += p;
        }
    }
    return mean / total;
}

GaussianFit fit_gaussian(const GridDistribution& grid)
{
    const auto& g = grid.geometry;
    const Vec mean = decode(grid, DecodeMode::WeightedMean);
    Mat cov = Mat::Zero(g.dims(), g.dims());
    double total = 0.0;
    for (Index k = 0; k < g.cell_count(); ++k) {
        const double p = grid.values[k];
        if (p != 0.0) {
            const Vec r = g.midpoint(k) - mean;
            cov.noalias() += p * r * r.transpose();
            total += p;
        }
    }
    cov /= total;
    return {mean, 0.5 * (cov + cov.transpose())};
}

GridDistribution average_grids(std::span<const GridDistribution> grids)
{
    if (grids.empty()) {
        throw Error(ErrorCode::GeometryMismatch, "cannot average an empty list of grids");
    }
    GridDistribution out{grids.front().geometry, Vec::Zero(grids.front().values.size())};
    for (const auto& g : grids) {
        if (!(g.geometry == out.geometry) || g.values.size() != out.values.size()) {
            throw Error(ErrorCode::GeometryMismatch, "grids to average have different geometry");
        }
        out.values += g.values;
    }
    out.values /= static_cast<double>(grids.size());
    return normalize(std::move(out));
}

GridDistribution apply_temperature(const GridDistribution& grid, Temperature t)
{
    if (!(t.tau > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
    }
    GridDistribution out = grid;
    Eigen::ArrayXd logits = grid.values.array().max(probability_floor).log() / t.tau;
    logits -= logits.maxCoeff();
    Eigen::ArrayXd e = logits.exp();
    out.values = (e / e.sum()).matrix();
    return out;
}

Vec to_grid_space(const Example& ex, const Vec& y)
{
    return ex.to_native ? ex.to_native->inverse(y) : y;
}

namespace {

struct NllTerm {
    Eigen::ArrayXd log_probs;
    double log_truth = 0.0;
};

std::vector<NllTerm> nll_terms(std::span<const Example* const> examples)
{
    std::vector<NllTerm> terms;
    terms.reserve(examples.size());
    for (const Example* ptr : examples) {
        const Example& ex = *ptr;
        if (!ex.grid) {
            throw Error(ErrorCode::MissingField, "example '" + ex.id + "' has no grid for temperature fitting");
        }
        const auto& g = *ex.grid;
        NllTerm term;
        term.log_probs = g.values.array().max(probability_floor).log();
        const auto cell = g.geometry.nearest_cell(to_grid_space(ex, ex.truth));
        term.log_truth = term.log_probs[g.geometry.flatten(cell)];
        terms.push_back(std::move(term));
    }
    return terms;
}

double mean_nll(const std::vector<NllTerm>& terms, double tau)
{
    double total = 0.0;
    for (const auto& term : terms) {
        const double peak = term.log_probs.maxCoeff() / tau;
        const double lse = peak + std::log(((term.log_probs / tau) - peak).exp().sum());
        total += lse - term.log_truth / tau;
    }
    return total / static_cast<double>(terms.size());
}

std::vector<const Example*> pointers(std::span<const Example> examples)
{
    std::vector<const Example*> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        out.push_back(&ex);
    }
    return out;
}

} // namespace

double temperature_nll(std::span<const Example> examples, Temperature t)
{
    if (examples.empty()) {
        throw Error(ErrorCode::EmptyCalibrationSet, "no examples to evaluate the likelihood on");
    }
    return mean_nll(nll_terms(pointers(examples)), t.tau);
}

Temperature fit_temperature(std::span<const Example> calibration)
{
    return fit_temperature(std::span<const Example* const>(pointers(calibration)));
}

Temperature fit_temperature(std::span<const Example* const> calibration)
{
    if (calibration.empty()) {
        throw Error(ErrorCode::EmptyCalibrationSet, "temperature fitting needs at least one example");
    }
    const auto terms = nll_terms(calibration);
    const auto f = [&](double log_tau) { return mean_nll(terms, std::exp(log_tau)); };

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(0.01);
    double b = std::log(100.0);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > 1e-4) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }

    // The likelihood is unimodal in practice but not provably so; fall back
    // to the best of the bracket ends and tau = 1 if they beat the search.
    double best_log_tau = 0.5 * (a + b);
    double best = f(best_log_tau);
    for (double candidate : {std::log(0.01), std::log(100.0), 0.0}) {
        const double value = f(candidate);
        if (value < best) {
            best = value;
            best_log_tau = candidate;
        }
    }
    return {std::exp(best_log_tau)};
}

} // namespace lmcp
