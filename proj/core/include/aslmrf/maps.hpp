#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "aslmrf/params.hpp"

namespace aslmrf {

/// No-data marker for background voxels.
inline constexpr double kNoData = std::numeric_limits<double>::quiet_NaN();

inline bool is_no_data(double v) { return std::isnan(v); }

/// Row-major scalar image.
struct Map2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Map2D() = default;
    Map2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double &at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::size_t size() const { return values.size(); }
};

/// One co-registered map per model parameter plus the brain mask.
struct ParamMaps {
    std::array<Map2D, kNumParams> maps;
    std::vector<bool> mask;

    Map2D &operator[](Param p) { return maps[index(p)]; }
    const Map2D &operator[](Param p) const { return maps[index(p)]; }
    std::size_t rows() const { return maps[0].rows; }
    std::size_t cols() const { return maps[0].cols; }
};

} // namespace aslmrf
