#pragma once

// Per-layer cost accounting plus receptive-field and kernel inspection.
//
// Counting rules (exact, per layer, H' x W' output locations):
//   conv / dilated / square_share  k*k*C*C' multiplies and adds per location,
//                                  plus C' bias adds per location
//   lpsc   context conv   L_r*L_theta*C*C' multiplies and adds per location
//          center conv    C*C' multiplies and adds per location (if enabled)
//          pooling        one add per in-field cell and channel; mean mode adds
//                         one divide (counted as a multiply) per region and channel
//          pooled memory  L_r*L_theta*C cells per location
//   dense  n*m multiplies and adds, plus m bias adds
//   maxpool / meanpool    (w*w - 1) adds (comparisons) per output cell; meanpool
//                         adds one multiply per output cell
//   relu / flatten        free

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lpsc/geometry.hpp"
#include "lpsc/lpsc_op.hpp"
#include "lpsc/nn.hpp"

namespace lpsc {

struct LayerCost {
    std::size_t index = 0;
    std::string kind;
    Shape output_shape;
    std::size_t params = 0;
    std::size_t params_per_pair = 0;   // weights per (C_in, C_out) pair; 0 for non-convolutional layers
    std::size_t multiplies = 0;
    std::size_t adds = 0;
    std::size_t pooled_cells = 0;
    // lpsc breakdown (zero elsewhere)
    std::size_t context_multiplies = 0;
    std::size_t center_multiplies = 0;
    std::size_t pool_multiplies = 0;
    std::size_t pool_adds = 0;
};

struct CostReport {
    std::vector<LayerCost> layers;
    std::size_t total_params = 0;
    std::size_t total_multiplies = 0;
    std::size_t total_adds = 0;
    std::size_t total_pooled_cells = 0;
};

CostReport count_costs(const NetSpec& spec);
/// Same as count_costs with the spec's input shape replaced.
CostReport count_costs(const NetSpec& spec, const Shape& input_shape);

/// Cost of a single LPSC layer on an (H, W, C) input with C' outputs.
LayerCost lpsc_layer_cost(const LpscConfig& config, const Shape& input_shape, std::size_t out_channels,
                          bool bias = false);

void write_cost_table(std::ostream& out, const CostReport& report);
void write_cost_csv(std::ostream& out, const CostReport& report);

struct RfReport {
    Tensor gradient;                // (H, W): sum over channels of |d out / d x|
    std::vector<bool> support;      // H * W, |gradient| > threshold
    std::size_t support_cells = 0;
    std::size_t top = 0, left = 0, bottom = 0, right = 0;   // inclusive bounding box
    std::size_t height() const { return support_cells ? bottom - top + 1 : 0; }
    std::size_t width() const { return support_cells ? right - left + 1 : 0; }
};

inline constexpr double kRfThreshold = 1e-12;

/// Backpropagates a unit gradient placed on every channel of `location` in the
/// output of the network's spatial prefix (all layers up to the last one with a
/// rank-3 output), evaluated at a seeded random input in [-1, 1].
RfReport estimate_rf(const Network& network, Size2 location, std::uint64_t seed = 7);
/// The output location at the center of the spatial prefix's output grid.
Size2 center_location(const Network& network);

struct KernelImage {
    std::size_t size = 0;
    std::vector<double> values;   // row-major size x size
    std::vector<bool> painted;    // false where the sentinel applies
};

/// Paints each mask cell of pair (ci, co) with its region weight (center: w_00).
/// With fill_corners, out-of-field cells take the weight of the nearest in-field
/// cell's region; ties prefer the region in the corner's own direction bin, then
/// row-major order.
KernelImage visualize_kernel(const LpscWeights& weights, const LogPolarMask& mask, bool fill_corners,
                             std::size_t in_channel, std::size_t out_channel);
/// All (C_in x C_out) pairs, in_channel-major.
std::vector<KernelImage> visualize_kernels(const LpscWeights& weights, const LogPolarMask& mask, bool fill_corners);

/// Region (level, direction) whose weight fills out-of-field cell (row, col), or {0, 0} if in field.
Size2 nearest_region(const LogPolarMask& mask, std::size_t row, std::size_t col);

struct ColorImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> rgb;   // rows * cols * 3
};

/// Painted cells map linearly from [min, max] to [32, 255]; sentinel cells are 0.
GrayImage render_kernel(const KernelImage& image);
/// One kernel per channel of a 3-channel input; sentinel cells render magenta.
ColorImage render_kernel_rgb(const KernelImage& red, const KernelImage& green, const KernelImage& blue);
/// |gradient| scaled by its maximum to [0, 255].
GrayImage render_rf(const RfReport& report);

/// Nearest-neighbour upscaling by an integer factor.
GrayImage upscale(const GrayImage& image, std::size_t factor);
ColorImage upscale(const ColorImage& image, std::size_t factor);

void write_pgm(const std::string& path, const GrayImage& image);
void write_ppm(const std::string& path, const ColorImage& image);

}  // namespace lpsc
