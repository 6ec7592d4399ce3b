#include "lpsc/baselines.hpp"

namespace lpsc {

void DilatedConfig::validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ValidationError("dilated kernel size must be odd, got " + std::to_string(kernel_size));
    if (dilation < 1) throw ValidationError("dilation rate must be >= 1");
    if (stride.rows < 1 || stride.cols < 1) throw ValidationError("stride must be positive");
}

Tensor dilated_conv2d(const Tensor& input, const ConvKernel& kernel, const DilatedConfig& config) {
    config.validate();
    if (kernel.rows() != config.kernel_size || kernel.cols() != config.kernel_size)
        throw ValidationError("dilated_conv2d: kernel is " + std::to_string(kernel.rows()) + "x" +
                              std::to_string(kernel.cols()) + " but config says " + std::to_string(config.kernel_size));
    return conv2d_dilated(input, kernel, config.stride, config.padding, Size2::square(config.dilation));
}

ConvGrads dilated_conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_output,
                                  const DilatedConfig& config) {
    config.validate();
    return conv2d_dilated_backward(input, kernel, grad_output, config.stride, config.padding,
                                   Size2::square(config.dilation));
}

void SquareShareConfig::validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ValidationError("square-share kernel size must be odd, got " + std::to_string(kernel_size));
    if (pool_size < 1 || kernel_size % pool_size != 0)
        throw ValidationError("square-share pool size " + std::to_string(pool_size) + " must divide kernel size " +
                              std::to_string(kernel_size));
    if (stride.rows < 1 || stride.cols < 1) throw ValidationError("stride must be positive");
}

Tensor expand_square_weights(const Tensor& region_weights, std::size_t pool_size) {
    if (region_weights.rank() != 4) throw ValidationError("square-share weights must be rank-4");
    const std::size_t g = region_weights.dim(0), cin = region_weights.dim(2), cout = region_weights.dim(3);
    if (region_weights.dim(1) != g) throw ValidationError("square-share region grid must be square");
    const std::size_t k = g * pool_size;
    Tensor full({k, k, cin, cout});
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t co = 0; co < cout; ++co)
                    full.at(r, c, ci, co) = region_weights.at(r / pool_size, c / pool_size, ci, co);
    return full;
}

Tensor fold_square_weights(const Tensor& full_weights, std::size_t pool_size) {
    const std::size_t k = full_weights.dim(0), cin = full_weights.dim(2), cout = full_weights.dim(3);
    if (k % pool_size != 0) throw ValidationError("fold_square_weights: pool size does not divide kernel");
    const std::size_t g = k / pool_size;
    Tensor regions({g, g, cin, cout});
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t co = 0; co < cout; ++co)
                    regions.at(r / pool_size, c / pool_size, ci, co) += full_weights.at(r, c, ci, co);
    return regions;
}

namespace {

ConvKernel expanded_kernel(const ConvKernel& region_kernel, const SquareShareConfig& config) {
    config.validate();
    if (region_kernel.weights.rank() != 4 || region_kernel.weights.dim(0) != config.grid() ||
        region_kernel.weights.dim(1) != config.grid())
        throw ValidationError("square_share_conv2d: expected a " + std::to_string(config.grid()) + "x" +
                              std::to_string(config.grid()) + " region grid, got " +
                              shape_str(region_kernel.weights.shape()));
    return ConvKernel(expand_square_weights(region_kernel.weights, config.pool_size), region_kernel.bias);
}

}  // namespace

Tensor square_share_conv2d(const Tensor& input, const ConvKernel& region_kernel, const SquareShareConfig& config) {
    return conv2d(input, expanded_kernel(region_kernel, config), config.stride, config.padding);
}

ConvGrads square_share_conv2d_backward(const Tensor& input, const ConvKernel& region_kernel,
                                       const Tensor& grad_output, const SquareShareConfig& config) {
    ConvGrads g = conv2d_backward(input, expanded_kernel(region_kernel, config), grad_output, config.stride,
                                  config.padding);
    g.weights = fold_square_weights(g.weights, config.pool_size);
    return g;
}

}  // namespace lpsc
