#include "lpsc/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace lpsc {

namespace {

// Tolerance for landing exactly on a direction-bin edge; such cells go to the
// higher bin.
constexpr double kEdgeEps = 1e-12;

}  // namespace

std::string to_string(PoolingMode mode) {
    switch (mode) {
        case PoolingMode::Mean: return "mean";
        case PoolingMode::Sum: return "sum";
        case PoolingMode::Max: return "max";
    }
    return "?";
}

PoolingMode parse_pooling_mode(const std::string& name) {
    if (name == "mean") return PoolingMode::Mean;
    if (name == "sum") return PoolingMode::Sum;
    if (name == "max") return PoolingMode::Max;
    throw ValidationError("unknown pooling mode '" + name + "' (expected mean, sum or max)");
}

void LpscConfig::validate() const {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        throw ValidationError("kernel size must be odd and >= 3, got " + std::to_string(kernel_size));
    if (levels_r < 1) throw ValidationError("distance levels L_r must be >= 1");
    if (levels_theta < 2 || levels_theta % 2 != 0)
        throw ValidationError("direction levels L_theta must be even and >= 2, got " + std::to_string(levels_theta));
    if (!(growth > 1.0) || !std::isfinite(growth))
        throw ValidationError("growth rate g must be > 1, got " + std::to_string(growth));
    if (!std::isfinite(alpha)) throw ValidationError("initial angle alpha must be finite");
    if (!(eccentricity >= 0.0 && eccentricity < 1.0))
        throw ValidationError("eccentricity e must lie in [0, 1), got " + std::to_string(eccentricity));
    if (stride.rows < 1 || stride.cols < 1) throw ValidationError("stride must be positive");
}

int LogPolarMask::at_offset(int dr, int dc) const {
    const int r = static_cast<int>(radius());
    return at(static_cast<std::size_t>(dr + r), static_cast<std::size_t>(dc + r));
}

std::size_t LogPolarMask::in_field_cells() const {
    std::size_t n = 0;
    for (std::size_t c : counts) n += c;
    return n;
}

std::vector<double> level_radii(const LpscConfig& config) {
    const double r = static_cast<double>(config.radius());
    const double outer = r * r;
    const double first = std::max(2.0, outer / std::pow(config.growth, static_cast<double>(config.levels_r - 1)));
    std::vector<double> radii(config.levels_r);
    for (std::size_t l = 0; l < config.levels_r; ++l)
        radii[l] = first * std::pow(config.growth, static_cast<double>(l));
    return radii;
}

double squared_distance(double alpha, double eccentricity, int dr, int dc) {
    // Rotation preserves the circular norm; keep it exact on integer offsets.
    if (eccentricity == 0.0) return static_cast<double>(dr * dr + dc * dc);
    // (x, y) in display orientation, then rotated by -alpha onto the ellipse axes.
    const double x = dc, y = -dr;
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double u = x * ca + y * sa;
    const double v = -x * sa + y * ca;
    return u * u + v * v / (1.0 - eccentricity * eccentricity);
}

double squared_distance(const LpscConfig& config, int dr, int dc) {
    return squared_distance(config.alpha, config.eccentricity, dr, dc);
}

std::size_t direction_bin(const LpscConfig& config, int dr, int dc) {
    return direction_bin(config.alpha, config.levels_theta, dr, dc);
}

std::size_t direction_bin(double alpha, std::size_t levels_theta, int dr, int dc) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double theta = std::atan2(-static_cast<double>(dr), static_cast<double>(dc)) - alpha;
    theta = std::fmod(theta, two_pi);
    if (theta < 0.0) theta += two_pi;
    const double width = two_pi / static_cast<double>(levels_theta);
    auto bin = static_cast<std::size_t>(std::floor(theta / width + kEdgeEps));
    return bin % levels_theta + 1;
}

LogPolarMask build_mask(const LpscConfig& config) {
    config.validate();
    LogPolarMask mask;
    mask.size = config.kernel_size;
    mask.levels_r = config.levels_r;
    mask.levels_theta = config.levels_theta;
    mask.alpha = config.alpha;
    mask.eccentricity = config.eccentricity;
    mask.radii = level_radii(config);
    mask.index_grid.assign(mask.size * mask.size, 0);
    mask.counts.assign(config.regions(), 0);

    const int r = static_cast<int>(config.radius());
    const double field = static_cast<double>(r) * r;
    for (int dr = -r; dr <= r; ++dr) {
        for (int dc = -r; dc <= r; ++dc) {
            int& cell = mask.index_grid[static_cast<std::size_t>(dr + r) * mask.size + static_cast<std::size_t>(dc + r)];
            if (dr == 0 && dc == 0) {
                cell = -1;
                continue;
            }
            const double d = squared_distance(config, dr, dc);
            if (d > field) continue;
            std::size_t level = 1;
            while (level < config.levels_r && d > mask.radii[level - 1]) ++level;
            const int k = region_index(level, direction_bin(config, dr, dc), config.levels_theta);
            cell = k;
            ++mask.counts[static_cast<std::size_t>(k - 1)];
        }
    }

    // Levels whose inner threshold already reaches R^2 can never be populated.
    std::size_t unreachable = 0;
    for (std::size_t l = 1; l < config.levels_r; ++l)
        if (mask.radii[l - 1] >= field) ++unreachable;
    if (unreachable > 0) {
        std::ostringstream os;
        os << "degenerate geometry: R_1 is clamped to " << mask.radii[0] << " and " << unreachable
           << " outer distance level(s) lie beyond R^2 = " << field << " and stay empty";
        mask.warnings.push_back(os.str());
    }
    return mask;
}

LogPolarMask build_mask_elliptical(const LpscConfig& config) {
    if (!(config.eccentricity >= 0.0 && config.eccentricity < 1.0))
        throw ValidationError("eccentricity e must lie in [0, 1), got " + std::to_string(config.eccentricity));
    return build_mask(config);
}

std::string mask_to_text(const LogPolarMask& mask) {
    const std::size_t width = std::to_string(mask.regions()).size();
    std::ostringstream os;
    for (std::size_t row = 0; row < mask.size; ++row) {
        for (std::size_t col = 0; col < mask.size; ++col) {
            const int k = mask.at(row, col);
            std::string cell = k == -1 ? "C" : k == 0 ? "." : std::to_string(k);
            if (col) os << ' ';
            os << std::string(width - cell.size(), ' ') << cell;
        }
        os << '\n';
    }
    return os.str();
}

GrayImage mask_to_image(const LogPolarMask& mask) {
    GrayImage img{mask.size, mask.size, std::vector<std::uint8_t>(mask.size * mask.size, 0)};
    const double scale = 254.0 / static_cast<double>(mask.regions());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const int k = mask.index_grid[i];
        img.pixels[i] = k == -1 ? 255 : static_cast<std::uint8_t>(std::lround(k * scale));
    }
    return img;
}

}  // namespace lpsc
