#pragma once

// Log-polar space convolution.
//
// Each output location (i, j) reads the (2R+1)^2 window of the zero-padded
// input centered at padded coordinate (i*s + R, j*s + R). The response is
//
//   y = sum_c  w0[c] * x(center, c)
//     + sum_(l,m) sum_c  w[l][m][c] / N_lm * sum_{cells in bin(l,m)} x(cell, c)
//
// (mean mode; sum mode drops the 1/N_lm and max mode replaces the inner sum
// by a max). `lpsc_forward_reference` evaluates that directly. The fast path
// pools every region into one cell, tiles the pooled cells into a
// (2 L_r) x (L_theta / 2) block per location, and runs one ordinary
// convolution whose kernel and stride both equal the block size, plus a 1x1
// convolution on the center pixels.
//
// Block layout: column c holds the direction pair (m = c + 1, m' = L_theta - c).
// Rows 0 .. L_r-1 hold direction m from the outermost level down to level 1;
// rows L_r .. 2 L_r - 1 hold direction m' from level 1 out to level L_r.

#include <iosfwd>
#include <optional>
#include <string>

#include "lpsc/geometry.hpp"
#include "lpsc/tensor.hpp"

namespace lpsc {

struct LpscWeights {
    Tensor center;                 // (C_in, C_out)
    Tensor regions;                // (L_r, L_theta, C_in, C_out)
    std::optional<Tensor> bias;    // (C_out)

    LpscWeights() = default;
    LpscWeights(std::size_t levels_r, std::size_t levels_theta, std::size_t in_channels,
                std::size_t out_channels, bool with_bias = false);

    std::size_t levels_r() const { return regions.dim(0); }
    std::size_t levels_theta() const { return regions.dim(1); }
    std::size_t in_channels() const { return regions.dim(2); }
    std::size_t out_channels() const { return regions.dim(3); }
    std::size_t parameter_count() const;

    double& region(std::size_t level, std::size_t direction, std::size_t ci, std::size_t co) {
        return regions.at(level - 1, direction - 1, ci, co);
    }
    double region(std::size_t level, std::size_t direction, std::size_t ci, std::size_t co) const {
        return regions.at(level - 1, direction - 1, ci, co);
    }

    /// Checks shapes against a config; throws ValidationError.
    void validate_for(const LpscConfig& config) const;
};

/// Pooled context map X_p of shape (2 L_r H', L_theta/2 W', C).
struct PooledMap {
    Tensor values;
    std::size_t out_rows = 0;   // H'
    std::size_t out_cols = 0;   // W'
};

/// Output grid (H', W') of an LPSC layer on an H x W input.
Size2 lpsc_output_extent(const LpscConfig& config, std::size_t rows, std::size_t cols);

/// (row, col) inside the 2 L_r x L_theta/2 block for region (level, direction), both 1-based.
Size2 block_position(std::size_t level, std::size_t direction, std::size_t levels_r, std::size_t levels_theta);

PooledMap log_polar_pool(const Tensor& input, const LogPolarMask& mask, Size2 stride, Size2 padding,
                         PoolingMode mode);
/// Adjoint of log_polar_pool; max mode routes to the first maximal cell in row-major mask order.
Tensor log_polar_pool_backward(const Tensor& input, const LogPolarMask& mask, Size2 stride, Size2 padding,
                               PoolingMode mode, const Tensor& grad_pooled);

/// Region weights tiled into the (2 L_r, L_theta/2, C_in, C_out) block kernel.
Tensor block_kernel(const LpscWeights& weights);
/// Inverse of block_kernel for gradients.
Tensor fold_block_kernel(const Tensor& block, std::size_t levels_r, std::size_t levels_theta);

Tensor lpsc_forward_fast(const Tensor& input, const LpscConfig& config, const LpscWeights& weights);
Tensor lpsc_forward_fast(const Tensor& input, const LpscConfig& config, const LogPolarMask& mask,
                         const LpscWeights& weights);

Tensor lpsc_forward_reference(const Tensor& input, const LpscConfig& config, const LpscWeights& weights);
Tensor lpsc_forward_reference(const Tensor& input, const LpscConfig& config, const LogPolarMask& mask,
                              const LpscWeights& weights);

struct LpscGrads {
    Tensor input;
    LpscWeights weights;
};

LpscGrads lpsc_backward(const Tensor& input, const LpscConfig& config, const LpscWeights& weights,
                        const Tensor& grad_output);
LpscGrads lpsc_backward(const Tensor& input, const LpscConfig& config, const LogPolarMask& mask,
                        const LpscWeights& weights, const Tensor& grad_output);

// LPSCW v1 file: "LPSCW v1 <L_r> <L_theta> <C_in> <C_out> <0|1>\n" then little-endian
// float64: center (C_in, C_out), regions (L_r, L_theta, C_in, C_out), bias (C_out).
void write_lpsc_weights(std::ostream& out, const LpscWeights& weights);
LpscWeights read_lpsc_weights(std::istream& in);
void save_lpsc_weights(const std::string& path, const LpscWeights& weights);
LpscWeights load_lpsc_weights(const std::string& path);

}  // namespace lpsc
