#pragma once

// Dense float64 tensors and the conventional layers everything else builds on.
//
// Layout: row-major with the channel axis innermost. A rank-3 tensor of shape
// (H, W, C) stores element (r, c, ch) at ((r * W) + c) * C + ch. Batched
// tensors prepend the sample axis: (N, H, W, C). Convolution kernels are
// rank-4 (kh, kw, C_in, C_out) in the same row-major order.

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpsc {

/// Raised for invalid shapes or arguments.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a file cannot be read or does not follow its format.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// (rows, cols) pair for strides and window geometry.
struct Size2 {
    std::size_t rows = 0;
    std::size_t cols = 0;

    static constexpr Size2 square(std::size_t n) { return {n, n}; }
    friend bool operator==(const Size2&, const Size2&) = default;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    /// Builds a tensor from untrusted values; rejects NaN and Inf.
    static Tensor from_external(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Rank-3 (H, W, C) accessors.
    double& at(std::size_t r, std::size_t c, std::size_t ch) {
        return data_[(r * shape_[1] + c) * shape_[2] + ch];
    }
    double at(std::size_t r, std::size_t c, std::size_t ch) const {
        return data_[(r * shape_[1] + c) * shape_[2] + ch];
    }

    // Rank-4 accessors, e.g. (kh, kw, C_in, C_out) kernels.
    double& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    Tensor reshaped(Shape shape) const;
    /// Sample `n` of a batched tensor, with the leading axis dropped.
    Tensor slice(std::size_t n) const;
    void set_slice(std::size_t n, const Tensor& sample);

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

/// Largest absolute entry.
double max_abs(const Tensor& t);
/// max|a - b| / max(max|b|, floor). Shapes must match.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-300);

// ---------------------------------------------------------------------------
// Conventional convolution

struct ConvKernel {
    Tensor weights;                 // (kh, kw, C_in, C_out)
    std::optional<Tensor> bias;     // (C_out)

    ConvKernel() = default;
    ConvKernel(Tensor w, std::optional<Tensor> b = std::nullopt);
    /// Any spatial extent, even included; used for non-overlapping tiled convolutions.
    static ConvKernel tiled(Tensor w);

    std::size_t rows() const { return weights.dim(0); }
    std::size_t cols() const { return weights.dim(1); }
    std::size_t in_channels() const { return weights.dim(2); }
    std::size_t out_channels() const { return weights.dim(3); }
};

struct ConvGrads {
    Tensor input;
    Tensor weights;
    std::optional<Tensor> bias;
};

/// Output extent of a sliding window: (n + 2p - extent) / s + 1.
std::size_t conv_out_extent(std::size_t n, std::size_t pad, std::size_t extent, std::size_t stride);

/// Zero-padded 2-D convolution (cross-correlation) of an (H, W, C_in) map.
Tensor conv2d(const Tensor& input, const ConvKernel& kernel, Size2 stride, Size2 padding);
ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_output,
                          Size2 stride, Size2 padding);

/// Convolution with taps spaced `dilation` apart. dilation {1,1} is conv2d.
Tensor conv2d_dilated(const Tensor& input, const ConvKernel& kernel, Size2 stride, Size2 padding,
                      Size2 dilation);
ConvGrads conv2d_dilated_backward(const Tensor& input, const ConvKernel& kernel,
                                  const Tensor& grad_output, Size2 stride, Size2 padding,
                                  Size2 dilation);

// ---------------------------------------------------------------------------
// Pooling, activations, dense, loss

/// Max pooling over (window, stride) tiles without padding.
Tensor max_pool2d(const Tensor& input, Size2 window, Size2 stride);
/// Gradient goes to the first maximal cell in row-major window order.
Tensor max_pool2d_backward(const Tensor& input, const Tensor& grad_output, Size2 window, Size2 stride);

Tensor mean_pool2d(const Tensor& input, Size2 window, Size2 stride);
Tensor mean_pool2d_backward(const Tensor& input, const Tensor& grad_output, Size2 window, Size2 stride);

Tensor relu(const Tensor& input);
/// Subgradient 0 at x == 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

/// y = x W + b for flat x of length n, W of shape (n, m), b of length m.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor* bias);

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};
DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output);

struct LossResult {
    double loss = 0.0;
    Tensor grad;    // d loss / d logits, same shape as logits
};

/// Mean softmax cross-entropy over a (N, K) logit batch or a single (K) vector.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------
// TNSR v1 file format: "TNSR v1 <ndim> <d0> ... \n" then little-endian float64s.

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

namespace detail {
void write_f64_le(std::ostream& out, std::span<const double> values);
void read_f64_le(std::istream& in, std::span<double> values, const std::string& what);
}  // namespace detail

}  // namespace lpsc
