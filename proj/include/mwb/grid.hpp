#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mwb {

/// Regular 2-D sample grid; `inside` masks points belonging to the domain.
struct FieldMap {
    double x0 = 0.0;
    double y0 = 0.0;
    double spacing = 1.0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> values;   // row-major, index iy * nx + ix
    std::vector<std::uint8_t> inside;

    FieldMap() = default;
    FieldMap(double x0_, double y0_, double spacing_, std::size_t nx_, std::size_t ny_)
        : x0(x0_), y0(y0_), spacing(spacing_), nx(nx_), ny(ny_),
          values(nx_ * ny_, 0.0), inside(nx_ * ny_, 1) {}

    [[nodiscard]] std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx + ix; }
    [[nodiscard]] double x(std::size_t ix) const { return x0 + spacing * static_cast<double>(ix); }
    [[nodiscard]] double y(std::size_t iy) const { return y0 + spacing * static_cast<double>(iy); }
    double& at(std::size_t ix, std::size_t iy) { return values[index(ix, iy)]; }
    [[nodiscard]] double at(std::size_t ix, std::size_t iy) const { return values[index(ix, iy)]; }
    [[nodiscard]] bool in_domain(std::size_t ix, std::size_t iy) const { return inside[index(ix, iy)] != 0; }
};

}  // namespace mwb
