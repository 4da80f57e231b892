#include "lmcp/regions.hpp"

#include <cmath>
#include <numbers>

namespace lmcp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_dims(const PredictionRegion& region, const Vec& y)
{
    if (dims(region) != y.size()) {
        throw Error(ErrorCode::DimMismatch, "point dimension differs from region dimension");
    }
}

Eigen::LLT<Mat> factor_spd(const Mat& shape)
{
    Eigen::LLT<Mat> llt(shape);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NonSPDMatrix, "ellipsoid shape matrix is not symmetric positive definite");
    }
    return llt;
}

} // namespace

Index GridMask::count() const
{
    Index n = 0;
    for (auto flag : included) {
        n += flag != 0;
    }
    return n;
}

int dims(const PredictionRegion& region)
{
    return std::visit(overloaded{
                          [](const HyperRect& r) { return static_cast<int>(r.center.size()); },
                          [](const Ellipsoid& r) { return static_cast<int>(r.center.size()); },
                          [](const GridMask& r) { return r.geometry.dims(); },
                      },
                      region);
}

bool is_empty(const PredictionRegion& region)
{
    return std::visit(overloaded{
                          [](const HyperRect& r) { return r.empty; },
                          [](const Ellipsoid& r) { return r.empty; },
                          [](const GridMask& r) { return r.count() == 0; },
                      },
                      region);
}

bool contains(const PredictionRegion& region, const Vec& y)
{
    check_dims(region, y);
    return std::visit(overloaded{
                          [&](const HyperRect& r) {
                              if (r.empty) {
                                  return false;
                              }
                              return ((y - r.center).cwiseAbs().array() <= r.half_widths.array()).all();
                          },
                          [&](const Ellipsoid& r) {
                              if (r.empty) {
                                  return false;
                              }
                              if (std::isinf(r.radius)) {
                                  return true;
                              }
                              const auto llt = factor_spd(r.shape);
                              const Vec z = llt.matrixL().solve(y - r.center);
                              return z.squaredNorm() <= r.radius * r.radius;
                          },
                          [&](const GridMask& r) {
                              const auto cell = r.geometry.cell_containing(y);
                              return cell && r.included[static_cast<std::size_t>(r.geometry.flatten(*cell))] != 0;
                          },
                      },
                      region);
}

double unit_ball_volume(int d)
{
    switch (d) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi / 3.0;
    default: throw Error(ErrorCode::DimMismatch, "only 1D, 2D and 3D balls are supported");
    }
}

double measure(const PredictionRegion& region)
{
    return std::visit(overloaded{
                          [](const HyperRect& r) {
                              if (r.empty) {
                                  return 0.0;
                              }
                              return (2.0 * r.half_widths).prod();
                          },
                          [](const Ellipsoid& r) {
                              if (r.empty) {
                                  return 0.0;
                              }
                              const auto llt = factor_spd(r.shape);
                              const double sqrt_det = llt.matrixLLT().diagonal().prod();
                              const int d = static_cast<int>(r.center.size());
                              return unit_ball_volume(d) * std::pow(r.radius, d) * sqrt_det;
                          },
                          [](const GridMask& r) {
                              return static_cast<double>(r.count()) * r.geometry.cell_volume();
                          },
                      },
                      region);
}

PredictionRegion transform(const PredictionRegion& region, const AffineMap& map)
{
    map.validate();
    if (map.dims() != dims(region)) {
        throw Error(ErrorCode::DimMismatch, "affine map dimension differs from region dimension");
    }
    return std::visit(overloaded{
                          [&](const HyperRect& r) -> PredictionRegion {
                              return HyperRect{map.apply(r.center), map.scale.cwiseProduct(r.half_widths), r.empty};
                          },
                          [&](const Ellipsoid& r) -> PredictionRegion {
                              return Ellipsoid{map.apply(r.center), map.apply_covariance(r.shape), r.radius, r.empty};
                          },
                          [&](const GridMask& r) -> PredictionRegion {
                              return GridMask{r.geometry.transformed(map), r.included};
                          },
                      },
                      region);
}

GridMask bins_to_region(const GridGeometry& geometry, const std::vector<CellIndex>& bins)
{
    GridMask mask{geometry, std::vector<std::uint8_t>(static_cast<std::size_t>(geometry.cell_count()), 0)};
    for (const auto& b : bins) {
        for (int j = 0; j < geometry.dims(); ++j) {
            if (b[j] < 0 || b[j] >= geometry.shape[j]) {
                throw Error(ErrorCode::IndexOutOfRange, "bin index outside the grid");
            }
        }
        mask.included[static_cast<std::size_t>(geometry.flatten(b))] = 1;
    }
    return mask;
}

} // namespace lmcp
