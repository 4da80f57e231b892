#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "lmcp/grid.hpp"

namespace lmcp {

/// Axis-aligned box center +/- half_widths. Infinite half widths denote the
/// whole response space.
struct HyperRect {
    Vec center;
    Vec half_widths;
    bool empty = false;
};

/// {y : (y - center)^T shape^{-1} (y - center) <= radius^2}.
struct Ellipsoid {
    Vec center;
    Mat shape;
    double radius = 0.0;
    bool empty = false;
};

/// Union of the full hyperrectangular cells of a grid whose flag is set.
struct GridMask {
    GridGeometry geometry;
    std::vector<std::uint8_t> included;

    Index count() const;
};

using PredictionRegion = std::variant<HyperRect, Ellipsoid, GridMask>;

int dims(const PredictionRegion& region);
bool is_empty(const PredictionRegion& region);

/// Points on the boundary of a box or ellipsoid count as inside.
bool contains(const PredictionRegion& region, const Vec& y);

/// Area (d = 2) or volume (d = 3) in mm^d; +inf for unbounded regions.
double measure(const PredictionRegion& region);

PredictionRegion transform(const PredictionRegion& region, const AffineMap& map);

/// GridMask whose included cells are exactly `bins`.
GridMask bins_to_region(const GridGeometry& geometry, const std::vector<CellIndex>& bins);

/// Volume of the unit ball in d dimensions (d = 1, 2, 3).
double unit_ball_volume(int d);

} // namespace lmcp
