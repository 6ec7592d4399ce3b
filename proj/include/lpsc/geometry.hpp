#pragma once

// Log-polar partition of a (2R+1) x (2R+1) window.
//
// Distances are squared: a cell at offset (dr, dc) from the center has
// d = dr^2 + dc^2 (or the squared elliptical norm when eccentricity > 0).
// Level thresholds follow R_l = g^(l-1) * R_1 with R_1 = max(2, R^2 / g^(L_r-1)),
// and a cell belongs to level l when R_(l-1) < d <= R_l. Cells with d > R^2
// lie outside the window's receptive field.
//
// Directions are measured counterclockwise in display orientation from the
// +column axis: theta = atan2(-dr, dc) - alpha, wrapped to [0, 2*pi). Bin m
// (1-based) covers [2*pi*(m-1)/L_theta, 2*pi*m/L_theta).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lpsc/tensor.hpp"

namespace lpsc {

enum class PoolingMode { Mean, Sum, Max };

std::string to_string(PoolingMode mode);
PoolingMode parse_pooling_mode(const std::string& name);

struct LpscConfig {
    std::size_t kernel_size = 5;    // 2R + 1
    std::size_t levels_r = 2;       // L_r
    std::size_t levels_theta = 8;   // L_theta
    double growth = 2.0;            // g
    double alpha = 0.0;             // initial angle, radians
    double eccentricity = 0.0;      // e in [0, 1)
    Size2 stride{1, 1};
    Size2 padding{0, 0};
    PoolingMode pooling = PoolingMode::Mean;
    bool center_conv = true;

    std::size_t radius() const { return kernel_size / 2; }
    std::size_t regions() const { return levels_r * levels_theta; }
    /// Weights per (input, output) channel pair: L_r * L_theta + 1.
    std::size_t params_per_pair() const { return regions() + 1; }

    /// Throws ValidationError naming the violated constraint.
    void validate() const;
};

struct LogPolarMask {
    std::size_t size = 0;
    std::size_t levels_r = 0;
    std::size_t levels_theta = 0;
    double alpha = 0.0;
    double eccentricity = 0.0;
    /// Row-major size x size grid: -1 center, 0 outside, k = (l-1)*L_theta + m otherwise.
    std::vector<int> index_grid;
    /// Cell count per region, indexed by k - 1.
    std::vector<std::size_t> counts;
    /// Squared-distance thresholds R_1 .. R_(L_r).
    std::vector<double> radii;
    /// Non-fatal geometry diagnostics (e.g. levels that no cell can reach).
    std::vector<std::string> warnings;

    std::size_t radius() const { return size / 2; }
    std::size_t regions() const { return levels_r * levels_theta; }
    int at(std::size_t row, std::size_t col) const { return index_grid[row * size + col]; }
    /// Region index at an offset from the center, offsets in [-R, R].
    int at_offset(int dr, int dc) const;
    std::size_t count(std::size_t level, std::size_t direction) const {
        return counts[(level - 1) * levels_theta + (direction - 1)];
    }
    /// Number of non-center cells inside the receptive field.
    std::size_t in_field_cells() const;
};

/// Region index from 1-based (level, direction).
constexpr int region_index(std::size_t level, std::size_t direction, std::size_t levels_theta) {
    return static_cast<int>((level - 1) * levels_theta + direction);
}

/// Squared thresholds R_1 .. R_(L_r) for a config.
std::vector<double> level_radii(const LpscConfig& config);

/// Squared distance of an offset under the config's (possibly elliptical) norm.
double squared_distance(const LpscConfig& config, int dr, int dc);
double squared_distance(double alpha, double eccentricity, int dr, int dc);
/// 1-based direction bin of an offset, honoring alpha.
std::size_t direction_bin(const LpscConfig& config, int dr, int dc);
std::size_t direction_bin(double alpha, std::size_t levels_theta, int dr, int dc);

LogPolarMask build_mask(const LpscConfig& config);
/// Same partition with the elliptical norm and rotated reference direction;
/// rejects eccentricity outside [0, 1). Identical to build_mask when alpha = e = 0.
LogPolarMask build_mask_elliptical(const LpscConfig& config);

/// One row per grid row: `C` center, `.` outside, region index otherwise.
std::string mask_to_text(const LogPolarMask& mask);

struct GrayImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

/// Outside 0, center 255, region k scaled to round(k * 254 / (L_r * L_theta)).
GrayImage mask_to_image(const LogPolarMask& mask);

}  // namespace lpsc
