#pragma once

#include <span>

#include "lmcp/grid.hpp"

namespace lmcp {

/// Multilinear interpolation of the cell probabilities over the 2^d cell
/// midpoints surrounding y. At a midpoint this is exactly the stored
/// probability. Points between the outermost midpoints and the outer cell
/// faces use the clamped (nearest hull) coordinate; points beyond the outer
/// faces raise OutOfDomain.
double interp_density(const GridDistribution& grid, const Vec& y);

/// Nonconformity of y under the heatmap: -interp_density(grid, y).
double score_density(const GridDistribution& grid, const Vec& y);

enum class DecodeMode { Argmax, WeightedMean };

/// Argmax returns the midpoint of the most probable cell (first in C order on
/// ties); WeightedMean returns sum_k p_k * midpoint_k.
Vec decode(const GridDistribution& grid, DecodeMode mode);

struct GaussianFit {
    Vec mean;
    Mat covariance;
};

/// Probability-weighted mean and covariance of the cell midpoints.
GaussianFit fit_gaussian(const GridDistribution& grid);

/// Cell-wise mean of grids sharing one geometry, renormalized.
GridDistribution average_grids(std::span<const GridDistribution> grids);

struct Temperature {
    double tau = 1.0;
};

/// softmax(log(max(p, 1e-12)) / tau) over all cells.
GridDistribution apply_temperature(const GridDistribution& grid, Temperature t);

/// Maps a native-space coordinate of `ex` into the space of its grid.
Vec to_grid_space(const Example& ex, const Vec& y);

/// Mean negative log-likelihood of the cell holding each truth (clamped to
/// the nearest cell) after temperature scaling.
double temperature_nll(std::span<const Example> examples, Temperature t);

/// Golden-section search over log(tau) in [log 0.01, log 100] minimizing
/// temperature_nll; the result is never worse than tau = 1.
Temperature fit_temperature(std::span<const Example> calibration);
Temperature fit_temperature(std::span<const Example* const> calibration);

} // namespace lmcp
