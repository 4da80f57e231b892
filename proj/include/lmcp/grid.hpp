#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmcp/error.hpp"

namespace lmcp {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Multi-index of a grid cell. Only the first `dims` entries are meaningful.
using CellIndex = std::array<Index, 3>;

/// Axis-aligned monotone map y -> scale .* y + offset.
struct AffineMap {
    Vec scale;
    Vec offset;

    static AffineMap identity(int dims);

    int dims() const { return static_cast<int>(scale.size()); }
    Vec apply(const Vec& y) const;
    Vec inverse(const Vec& y) const;
    /// D * cov * D with D = diag(scale).
    Mat apply_covariance(const Mat& cov) const;
    void validate() const;
};

/// Regular grid of cells; cell k on axis j has its midpoint at origin_j + k * spacing_j.
/// Cells are stored in C order (last axis fastest).
struct GridGeometry {
    std::vector<Index> shape;
    Vec origin;
    Vec spacing;

    int dims() const { return static_cast<int>(shape.size()); }
    Index cell_count() const;
    double cell_volume() const;

    Index flatten(const CellIndex& idx) const;
    CellIndex unflatten(Index flat) const;
    Vec midpoint(const CellIndex& idx) const;
    Vec midpoint(Index flat) const { return midpoint(unflatten(flat)); }

    /// Lower/upper physical extent of the grid (outer cell faces).
    Vec lower_bound() const;
    Vec upper_bound() const;

    /// Cell containing y using half-open cells [m - s/2, m + s/2); the upper
    /// outer face belongs to the last cell. Empty if y is outside the grid.
    std::optional<CellIndex> cell_containing(const Vec& y) const;
    /// Like cell_containing but clamps to the nearest cell when outside.
    CellIndex nearest_cell(const Vec& y) const;

    GridGeometry transformed(const AffineMap& map) const;

    void validate() const;
    bool operator==(const GridGeometry& other) const;
};

/// Discrete probability distribution over the cells of a grid (a heatmap).
struct GridDistribution {
    GridGeometry geometry;
    Vec values;

    int dims() const { return geometry.dims(); }
    double mass() const { return values.sum(); }
};

/// Clamps entries in (-1e-9, 0) to zero and rescales to unit mass. Larger
/// negative entries, non-finite entries or an all-zero grid raise InvariantViolation.
GridDistribution normalize(GridDistribution grid);

/// One calibration/test record: model outputs plus the ground-truth landmark.
struct Example {
    std::string id;
    int landmark = 0;
    Vec truth;
    std::optional<GridDistribution> grid;
    std::optional<Vec> point;
    std::vector<Vec> samples;
    std::optional<Mat> covariance;
    /// Map from the grid's standardized response space to the native space of
    /// truth/point/samples/covariance. Absent means both spaces coincide.
    std::optional<AffineMap> to_native;

    int dims() const { return static_cast<int>(truth.size()); }
    bool has_samples() const { return !samples.empty(); }
    void validate() const;
};

} // namespace lmcp
