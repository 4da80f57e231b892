#include "lmcp/svg.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace lmcp {

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void check_axis(int dims, int axis)
{
    if (dims != 3) {
        throw Error(ErrorCode::DimMismatch, "only 3D regions can be sliced");
    }
    if (axis < 0 || axis >= dims) {
        throw Error(ErrorCode::IndexOutOfRange, "slice axis " + std::to_string(axis) + " out of range");
    }
}

Vec take(const Vec& v, const std::vector<int>& axes)
{
    Vec out(static_cast<Index>(axes.size()));
    for (std::size_t i = 0; i < axes.size(); ++i) {
        out[static_cast<Index>(i)] = v[axes[i]];
    }
    return out;
}

} // namespace

std::vector<int> remaining_axes(int dims, int axis)
{
    std::vector<int> out;
    for (int j = 0; j < dims; ++j) {
        if (j != axis) {
            out.push_back(j);
        }
    }
    return out;
}

PredictionRegion slice_region(const PredictionRegion& region, int axis, double value)
{
    check_axis(dims(region), axis);
    const auto keep = remaining_axes(3, axis);
    if (const auto* r = std::get_if<HyperRect>(&region)) {
        HyperRect out{take(r->center, keep), take(r->half_widths, keep), r->empty};
        if (!(std::abs(value - r->center[axis]) <= r->half_widths[axis])) {
            out.empty = true;
        }
        return out;
    }
    if (const auto* e = std::get_if<Ellipsoid>(&region)) {
        Ellipsoid out;
        out.center = take(e->center, keep);
        out.shape = Mat(2, 2);
        out.empty = e->empty;
        if (std::isinf(e->radius)) {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    out.shape(a, b) = e->shape(keep[a], keep[b]);
                }
            }
            out.radius = e->radius;
            return out;
        }
        const double skk = e->shape(axis, axis);
        const double delta = value - e->center[axis];
        Vec cross(2);
        for (int a = 0; a < 2; ++a) {
            cross[a] = e->shape(keep[a], axis);
            for (int b = 0; b < 2; ++b) {
                out.shape(a, b) = e->shape(keep[a], keep[b]);
            }
        }
        // Conditional center and Schur complement of the fixed axis.
        out.center += cross * (delta / skk);
        out.shape -= cross * cross.transpose() / skk;
        const double r2 = e->radius * e->radius - delta * delta / skk;
        if (r2 < 0.0) {
            out.empty = true;
            out.radius = 0.0;
        } else {
            out.radius = std::sqrt(r2);
        }
        return out;
    }
    const auto& m = std::get<GridMask>(region);
    const auto& g = m.geometry;
    GridMask out;
    out.geometry.shape = {g.shape[keep[0]], g.shape[keep[1]]};
    out.geometry.origin = take(g.origin, keep);
    out.geometry.spacing = take(g.spacing, keep);
    out.included.assign(static_cast<std::size_t>(out.geometry.cell_count()), 0);
    const double u = (value - g.origin[axis]) / g.spacing[axis];
    const auto n = g.shape[axis];
    if (!(u >= -0.5 && u <= static_cast<double>(n) - 0.5)) {
        return out;
    }
    const Index level = std::min<Index>(static_cast<Index>(std::floor(u + 0.5)), n - 1);
    for (Index a = 0; a < out.geometry.shape[0]; ++a) {
        for (Index b = 0; b < out.geometry.shape[1]; ++b) {
            CellIndex full{0, 0, 0};
            full[axis] = level;
            full[keep[0]] = a;
            full[keep[1]] = b;
            out.included[static_cast<std::size_t>(out.geometry.flatten({a, b, 0}))] =
                m.included[static_cast<std::size_t>(g.flatten(full))];
        }
    }
    return out;
}

double slice_coordinate(const GridMask& mask, int axis, Index index)
{
    check_axis(mask.geometry.dims(), axis);
    if (index < 0 || index >= mask.geometry.shape[axis]) {
        throw Error(ErrorCode::IndexOutOfRange, "slice index " + std::to_string(index) + " out of range");
    }
    return mask.geometry.origin[axis] + static_cast<double>(index) * mask.geometry.spacing[axis];
}

double default_slice_coordinate(const PredictionRegion& region, int axis)
{
    check_axis(dims(region), axis);
    if (const auto* m = std::get_if<GridMask>(&region)) {
        return slice_coordinate(*m, axis, m->geometry.shape[axis] / 2);
    }
    if (const auto* r = std::get_if<HyperRect>(&region)) {
        return r->center[axis];
    }
    return std::get<Ellipsoid>(region).center[axis];
}

std::string render_svg(const PredictionRegion& region)
{
    if (dims(region) != 2) {
        throw Error(ErrorCode::DimMismatch, "SVG export needs a 2D region; slice 3D regions first");
    }
    std::ostringstream body;
    Vec lo = Vec::Zero(2), hi = Vec::Ones(2);
    const bool empty = is_empty(region);

    if (const auto* r = std::get_if<HyperRect>(&region)) {
        if (!r->half_widths.allFinite()) {
            lo = r->center.array() - 1.0;
            hi = r->center.array() + 1.0;
            body << "  <!-- unbounded region: the whole plane -->\n";
        } else {
            lo = r->center - r->half_widths;
            hi = r->center + r->half_widths;
            if (!empty) {
                body << "  <rect x=\"" << fmt(lo[0]) << "\" y=\"" << fmt(lo[1]) << "\" width=\""
                     << fmt(hi[0] - lo[0]) << "\" height=\"" << fmt(hi[1] - lo[1]) << "\" class=\"region\"/>\n";
            }
        }
    } else if (const auto* e = std::get_if<Ellipsoid>(&region)) {
        if (std::isinf(e->radius)) {
            lo = e->center.array() - 1.0;
            hi = e->center.array() + 1.0;
            body << "  <!-- unbounded region: the whole plane -->\n";
        } else {
            Eigen::SelfAdjointEigenSolver<Mat> eig(e->shape);
            // Eigen sorts eigenvalues ascending; the last vector is the major axis.
            const Vec major = eig.eigenvectors().col(1);
            const double rx = e->radius * std::sqrt(std::max(0.0, eig.eigenvalues()[1]));
            const double ry = e->radius * std::sqrt(std::max(0.0, eig.eigenvalues()[0]));
            const double angle = std::atan2(major[1], major[0]) * 180.0 / std::numbers::pi;
            const Vec extent = (e->radius * e->shape.diagonal().cwiseMax(0.0).cwiseSqrt());
            lo = e->center - extent;
            hi = e->center + extent;
            if (!empty) {
                body << "  <ellipse cx=\"" << fmt(e->center[0]) << "\" cy=\"" << fmt(e->center[1]) << "\" rx=\""
                     << fmt(rx) << "\" ry=\"" << fmt(ry) << "\" transform=\"rotate(" << fmt(angle) << ' '
                     << fmt(e->center[0]) << ' ' << fmt(e->center[1]) << ")\" class=\"region\"/>\n";
            }
        }
    } else {
        const auto& m = std::get<GridMask>(region);
        const auto& g = m.geometry;
        lo = g.lower_bound();
        hi = g.upper_bound();
        for (Index k = 0; k < g.cell_count(); ++k) {
            if (m.included[static_cast<std::size_t>(k)]) {
                const Vec c = g.midpoint(k) - 0.5 * g.spacing;
                body << "  <rect x=\"" << fmt(c[0]) << "\" y=\"" << fmt(c[1]) << "\" width=\"" << fmt(g.spacing[0])
                     << "\" height=\"" << fmt(g.spacing[1]) << "\" class=\"cell\"/>\n";
            }
        }
    }

    Vec size = (hi - lo).cwiseMax(1e-9);
    const Vec pad = 0.05 * size;
    lo -= pad;
    size += 2.0 * pad;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << fmt(lo[0]) << ' ' << fmt(lo[1]) << ' '
        << fmt(size[0]) << ' ' << fmt(size[1]) << "\">\n";
    out << "  <style>.region, .cell { fill: #d62728; fill-opacity: 0.4; stroke: #d62728; "
           "stroke-width: 0; } .region { stroke-width: "
        << fmt(0.005 * std::max(size[0], size[1])) << "; }</style>\n";
    if (empty) {
        out << "  <!-- empty region -->\n";
    }
    out << body.str() << "</svg>\n";
    return out.str();
}

} // namespace lmcp
