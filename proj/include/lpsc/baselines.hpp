#pragma once

// Comparison operators: dilated convolution and square region-shared
// convolution. Both reduce to conv2d at dilation 1 / pool size 1.

#include "lpsc/tensor.hpp"

namespace lpsc {

struct DilatedConfig {
    std::size_t kernel_size = 3;
    std::size_t dilation = 1;
    Size2 stride{1, 1};
    Size2 padding{0, 0};

    /// (k - 1) * dilation + 1
    std::size_t extent() const { return (kernel_size - 1) * dilation + 1; }
    void validate() const;
};

Tensor dilated_conv2d(const Tensor& input, const ConvKernel& kernel, const DilatedConfig& config);
ConvGrads dilated_conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_output,
                                  const DilatedConfig& config);

/// A k x k kernel tiled into (k/p)^2 square blocks of side p; every cell of a
/// block shares one weight. No center weight and no 1/area normalization.
struct SquareShareConfig {
    std::size_t kernel_size = 9;
    std::size_t pool_size = 3;
    Size2 stride{1, 1};
    Size2 padding{0, 0};

    std::size_t grid() const { return kernel_size / pool_size; }
    void validate() const;
};

/// Region weights (k/p, k/p, C_in, C_out) expanded into the full (k, k, C_in, C_out) kernel.
Tensor expand_square_weights(const Tensor& region_weights, std::size_t pool_size);
/// Adjoint of expand_square_weights: sums each block.
Tensor fold_square_weights(const Tensor& full_weights, std::size_t pool_size);

Tensor square_share_conv2d(const Tensor& input, const ConvKernel& region_kernel, const SquareShareConfig& config);
/// grads.weights has the region-grid shape of region_kernel.weights.
ConvGrads square_share_conv2d_backward(const Tensor& input, const ConvKernel& region_kernel,
                                       const Tensor& grad_output, const SquareShareConfig& config);

}  // namespace lpsc
