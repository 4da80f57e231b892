#pragma once

// JSON helpers shared by the manifest, region, calibrator and report codecs.

#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "lmcp/grid.hpp"

namespace lmcp::detail {

using json = nlohmann::json;

// Non-finite values are written as the strings "inf", "-inf" and "nan".
inline json number_to_json(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

inline double number_from_json(const json& j, ErrorCode code = ErrorCode::InvalidConfig)
{
    if (j.is_number()) {
        return j.get<double>();
    }
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        if (s == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
    }
    throw Error(code, "expected a number, got " + j.dump());
}

inline json vec_to_json(const Vec& v)
{
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) {
        out.push_back(number_to_json(v[i]));
    }
    return out;
}

inline Vec vec_from_json(const json& j, ErrorCode code = ErrorCode::InvalidConfig)
{
    if (!j.is_array()) {
        throw Error(code, "expected an array of numbers, got " + j.dump());
    }
    Vec v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Index>(i)] = number_from_json(j[i], code);
    }
    return v;
}

inline json mat_to_json(const Mat& m)
{
    json out = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        out.push_back(vec_to_json(m.row(r).transpose()));
    }
    return out;
}

inline Mat mat_from_json(const json& j, ErrorCode code = ErrorCode::InvalidConfig)
{
    if (!j.is_array() || j.empty()) {
        throw Error(code, "expected a non-empty array of rows, got " + j.dump());
    }
    const auto rows = static_cast<Index>(j.size());
    Mat m(rows, static_cast<Index>(j[0].size()));
    for (Index r = 0; r < rows; ++r) {
        Vec row = vec_from_json(j[static_cast<std::size_t>(r)], code);
        if (row.size() != m.cols()) {
            throw Error(code, "ragged matrix rows");
        }
        m.row(r) = row.transpose();
    }
    return m;
}

inline const json& require(const json& j, const char* key, ErrorCode code = ErrorCode::InvalidConfig)
{
    if (!j.is_object() || !j.contains(key)) {
        throw Error(code, std::string("missing field '") + key + "'");
    }
    return j.at(key);
}

inline json affine_to_json(const AffineMap& map)
{
    return {{"scale", vec_to_json(map.scale)}, {"offset", vec_to_json(map.offset)}};
}

inline AffineMap affine_from_json(const json& j, ErrorCode code = ErrorCode::InvalidConfig)
{
    AffineMap map{vec_from_json(require(j, "scale", code), code), vec_from_json(require(j, "offset", code), code)};
    map.validate();
    return map;
}

inline json geometry_to_json(const GridGeometry& g)
{
    return {{"shape", g.shape}, {"origin", vec_to_json(g.origin)}, {"spacing", vec_to_json(g.spacing)}};
}

inline GridGeometry geometry_from_json(const json& j, ErrorCode code = ErrorCode::InvalidConfig)
{
    GridGeometry g;
    for (const auto& s : require(j, "shape", code)) {
        g.shape.push_back(s.get<Index>());
    }
    g.origin = vec_from_json(require(j, "origin", code), code);
    g.spacing = vec_from_json(require(j, "spacing", code), code);
    g.validate();
    return g;
}

} // namespace lmcp::detail
