#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lmcp/regions.hpp"

namespace lmcp {

/// Axes left after removing `axis` from a d-dimensional space, in order.
std::vector<int> remaining_axes(int dims, int axis);

/// Intersection of a 3D region with the plane y_axis = value, expressed in the
/// two remaining axes. An ellipsoid slice keeps the Schur complement of the
/// shape matrix and a correspondingly reduced radius.
PredictionRegion slice_region(const PredictionRegion& region, int axis, double value);

/// Coordinate of the midpoint of cell `index` along `axis` of a grid mask.
double slice_coordinate(const GridMask& mask, int axis, Index index);

/// Default slice plane: through the center of a box/ellipsoid, through the
/// middle cell of a grid mask.
double default_slice_coordinate(const PredictionRegion& region, int axis);

/// SVG drawing of a 2D region in mm coordinates (x right, y down).
std::string render_svg(const PredictionRegion& region2d);

} // namespace lmcp
