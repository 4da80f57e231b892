#include "lmcp/grid.hpp"

#include <algorithm>
#include <cmath>

namespace lmcp {

AffineMap AffineMap::identity(int dims)
{
    return {Vec::Ones(dims), Vec::Zero(dims)};
}

Vec AffineMap::apply(const Vec& y) const
{
    if (y.size() != scale.size()) {
        throw Error(ErrorCode::DimMismatch, "affine map dimension differs from point dimension");
    }
    return scale.cwiseProduct(y) + offset;
}

Vec AffineMap::inverse(const Vec& y) const
{
    if (y.size() != scale.size()) {
        throw Error(ErrorCode::DimMismatch, "affine map dimension differs from point dimension");
    }
    return (y - offset).cwiseQuotient(scale);
}

Mat AffineMap::apply_covariance(const Mat& cov) const
{
    return scale.asDiagonal() * cov * scale.asDiagonal();
}

void AffineMap::validate() const
{
    if (scale.size() != offset.size()) {
        throw Error(ErrorCode::DimMismatch, "affine map scale and offset lengths differ");
    }
    for (Index j = 0; j < scale.size(); ++j) {
        if (!(scale[j] > 0.0) || !std::isfinite(scale[j]) || !std::isfinite(offset[j])) {
            throw Error(ErrorCode::InvalidConfig, "affine map scale must be finite and strictly positive");
        }
    }
}

Index GridGeometry::cell_count() const
{
    Index n = 1;
    for (Index s : shape) {
        n *= s;
    }
    return n;
}

double GridGeometry::cell_volume() const
{
    return spacing.prod();
}

Index GridGeometry::flatten(const CellIndex& idx) const
{
    Index flat = 0;
    for (int j = 0; j < dims(); ++j) {
        flat = flat * shape[j] + idx[j];
    }
    return flat;
}

CellIndex GridGeometry::unflatten(Index flat) const
{
    CellIndex idx{0, 0, 0};
    for (int j = dims() - 1; j >= 0; --j) {
        idx[j] = flat % shape[j];
        flat /= shape[j];
    }
    return idx;
}

Vec GridGeometry::midpoint(const CellIndex& idx) const
{
    Vec m(dims());
    for (int j = 0; j < dims(); ++j) {
        m[j] = origin[j] + static_cast<double>(idx[j]) * spacing[j];
    }
    return m;
}

Vec GridGeometry::lower_bound() const
{
    return origin - 0.5 * spacing;
}

Vec GridGeometry::upper_bound() const
{
    Vec hi(dims());
    for (int j = 0; j < dims(); ++j) {
        hi[j] = origin[j] + (static_cast<double>(shape[j]) - 0.5) * spacing[j];
    }
    return hi;
}

std::optional<CellIndex> GridGeometry::cell_containing(const Vec& y) const
{
    if (y.size() != dims()) {
        throw Error(ErrorCode::DimMismatch, "point dimension differs from grid dimension");
    }
    CellIndex idx{0, 0, 0};
    for (int j = 0; j < dims(); ++j) {
        const double u = (y[j] - origin[j]) / spacing[j];
        const double n = static_cast<double>(shape[j]);
        if (!(u >= -0.5) || !(u <= n - 0.5)) {
            return std::nullopt;
        }
        auto k = static_cast<Index>(std::floor(u + 0.5));
        idx[j] = std::min(k, shape[j] - 1);
    }
    return idx;
}

CellIndex GridGeometry::nearest_cell(const Vec& y) const
{
    CellIndex idx{0, 0, 0};
    for (int j = 0; j < dims(); ++j) {
        const double u = (y[j] - origin[j]) / spacing[j];
        double k = std::floor(u + 0.5);
        k = std::clamp(k, 0.0, static_cast<double>(shape[j] - 1));
        idx[j] = static_cast<Index>(k);
    }
    return idx;
}

GridGeometry GridGeometry::transformed(const AffineMap& map) const
{
    if (map.dims() != dims()) {
        throw Error(ErrorCode::DimMismatch, "affine map dimension differs from grid dimension");
    }
    return {shape, map.apply(origin), map.scale.cwiseProduct(spacing)};
}

void GridGeometry::validate() const
{
    if (dims() != 2 && dims() != 3) {
        throw Error(ErrorCode::InvariantViolation, "grids must be 2D or 3D");
    }
    if (origin.size() != dims() || spacing.size() != dims()) {
        throw Error(ErrorCode::DimMismatch, "origin/spacing length differs from grid rank");
    }
    for (int j = 0; j < dims(); ++j) {
        if (shape[j] < 1) {
            throw Error(ErrorCode::InvariantViolation, "grid shape must be positive on every axis");
        }
        if (!(spacing[j] > 0.0) || !std::isfinite(spacing[j]) || !std::isfinite(origin[j])) {
            throw Error(ErrorCode::InvariantViolation, "grid spacing must be finite and strictly positive");
        }
    }
}

bool GridGeometry::operator==(const GridGeometry& other) const
{
    return shape == other.shape && origin.size() == other.origin.size() && origin == other.origin
        && spacing == other.spacing;
}

GridDistribution normalize(GridDistribution grid)
{
    constexpr double negative_tolerance = -1e-9;
    if (grid.values.size() != grid.geometry.cell_count()) {
        throw Error(ErrorCode::ShapeMismatch, "grid value count differs from its geometry");
    }
    for (double& v : grid.values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::InvariantViolation, "grid contains a non-finite value");
        }
        if (v < 0.0) {
            if (v <= negative_tolerance) {
                throw Error(ErrorCode::InvariantViolation, "grid contains a negative value");
            }
            v = 0.0;
        }
    }
    const double total = grid.values.sum();
    if (!(total > 0.0)) {
        throw Error(ErrorCode::InvariantViolation, "grid has zero total mass");
    }
    // Already unit mass up to summation rounding: leave untouched so that
    // normalize is idempotent bit-for-bit.
    if (std::abs(total - 1.0) > 1e-12) {
        grid.values /= total;
    }
    return grid;
}

void Example::validate() const
{
    const int d = dims();
    if (d != 2 && d != 3) {
        throw Error(ErrorCode::InvariantViolation, "example '" + id + "': truth must be 2D or 3D");
    }
    if (!grid && !point && samples.empty()) {
        throw Error(ErrorCode::InvariantViolation, "example '" + id + "': needs a grid, a point or samples");
    }
    if (grid) {
        grid->geometry.validate();
        if (grid->dims() != d) {
            throw Error(ErrorCode::DimMismatch, "example '" + id + "': grid rank differs from truth");
        }
    }
    if (point && point->size() != d) {
        throw Error(ErrorCode::DimMismatch, "example '" + id + "': point dimension differs from truth");
    }
    for (const auto& s : samples) {
        if (s.size() != d) {
            throw Error(ErrorCode::DimMismatch, "example '" + id + "': sample dimension differs from truth");
        }
    }
    if (to_native) {
        to_native->validate();
        if (to_native->dims() != d) {
            throw Error(ErrorCode::DimMismatch, "example '" + id + "': to_native dimension differs from truth");
        }
    }
    if (covariance) {
        const Mat& c = *covariance;
        if (c.rows() != d || c.cols() != d) {
            throw Error(ErrorCode::DimMismatch, "example '" + id + "': covariance must be d x d");
        }
        if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
            throw Error(ErrorCode::InvariantViolation, "example '" + id + "': covariance is not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Mat> eig(c, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
        if (eig.eigenvalues().minCoeff() < -1e-9 * scale) {
            throw Error(ErrorCode::InvariantViolation, "example '" + id + "': covariance is not PSD");
        }
    }
}

} // namespace lmcp
