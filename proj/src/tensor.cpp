#include "lpsc/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace lpsc {

namespace {

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

void require_rank3(const Tensor& t, const char* what) {
    require(t.rank() == 3, std::string(what) + ": expected a rank-3 (H, W, C) tensor, got " +
                               shape_str(t.shape()));
}

// Row-major (rows x inner) * (inner x cols) accumulation with a fixed
// summation order per output element.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out,
          std::size_t rows, std::size_t inner, std::size_t cols) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double* o = out.data() + i * cols;
        for (std::size_t k = 0; k < inner; ++k) {
            const double av = a[i * inner + k];
            if (av == 0.0) continue;
            const double* brow = b.data() + k * cols;
            for (std::size_t j = 0; j < cols; ++j) o[j] += av * brow[j];
        }
    }
}

struct ConvGeometry {
    std::size_t in_h, in_w, in_c;
    std::size_t k_h, k_w, out_c;
    std::size_t out_h, out_w;
    Size2 stride, padding, dilation;

    std::size_t patch() const { return k_h * k_w * in_c; }
    std::size_t locations() const { return out_h * out_w; }
};

ConvGeometry make_geometry(const Tensor& input, const ConvKernel& kernel, Size2 stride,
                           Size2 padding, Size2 dilation, const char* op) {
    require_rank3(input, op);
    require(kernel.weights.rank() == 4, std::string(op) + ": kernel must be rank-4 (kh, kw, C_in, C_out)");
    require(stride.rows >= 1 && stride.cols >= 1, std::string(op) + ": stride must be positive");
    require(dilation.rows >= 1 && dilation.cols >= 1, std::string(op) + ": dilation must be positive");
    ConvGeometry g{};
    g.in_h = input.dim(0);
    g.in_w = input.dim(1);
    g.in_c = input.dim(2);
    g.k_h = kernel.rows();
    g.k_w = kernel.cols();
    g.out_c = kernel.out_channels();
    require(kernel.in_channels() == g.in_c,
            std::string(op) + ": input has " + std::to_string(g.in_c) + " channels but kernel expects " +
                std::to_string(kernel.in_channels()));
    const std::size_t ext_h = (g.k_h - 1) * dilation.rows + 1;
    const std::size_t ext_w = (g.k_w - 1) * dilation.cols + 1;
    require(g.in_h + 2 * padding.rows >= ext_h && g.in_w + 2 * padding.cols >= ext_w,
            std::string(op) + ": kernel extent " + std::to_string(ext_h) + "x" + std::to_string(ext_w) +
                " exceeds padded input " + std::to_string(g.in_h + 2 * padding.rows) + "x" +
                std::to_string(g.in_w + 2 * padding.cols));
    g.out_h = conv_out_extent(g.in_h, padding.rows, ext_h, stride.rows);
    g.out_w = conv_out_extent(g.in_w, padding.cols, ext_w, stride.cols);
    g.stride = stride;
    g.padding = padding;
    g.dilation = dilation;
    return g;
}

// Calls f(location, patch_index, input_index) for every in-bounds tap.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
    for (std::size_t oi = 0; oi < g.out_h; ++oi) {
        for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::size_t loc = oi * g.out_w + oj;
            for (std::size_t m = 0; m < g.k_h; ++m) {
                const auto r = static_cast<std::ptrdiff_t>(oi * g.stride.rows + m * g.dilation.rows) -
                               static_cast<std::ptrdiff_t>(g.padding.rows);
                if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                for (std::size_t n = 0; n < g.k_w; ++n) {
                    const auto c = static_cast<std::ptrdiff_t>(oj * g.stride.cols + n * g.dilation.cols) -
                                   static_cast<std::ptrdiff_t>(g.padding.cols);
                    if (c < 0 || c >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                    const std::size_t patch_base = (m * g.k_w + n) * g.in_c;
                    const std::size_t in_base =
                        (static_cast<std::size_t>(r) * g.in_w + static_cast<std::size_t>(c)) * g.in_c;
                    for (std::size_t ci = 0; ci < g.in_c; ++ci) f(loc, patch_base + ci, in_base + ci);
                }
            }
        }
    }
}

std::vector<double> im2col(const Tensor& input, const ConvGeometry& g) {
    std::vector<double> cols(g.locations() * g.patch(), 0.0);
    const auto x = input.data();
    for_each_tap(g, [&](std::size_t loc, std::size_t p, std::size_t idx) {
        cols[loc * g.patch() + p] = x[idx];
    });
    return cols;
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(shape_product(shape_) == data_.size(),
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::from_external(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    require(t.all_finite(), "tensor contains NaN or Inf");
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_product(shape) == data_.size(),
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice(std::size_t n) const {
    require(rank() >= 2 && n < shape_[0], "slice index out of range for " + shape_str(shape_));
    Shape inner(shape_.begin() + 1, shape_.end());
    const std::size_t len = shape_product(inner);
    return Tensor(std::move(inner),
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(n * len),
                                      data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * len)));
}

void Tensor::set_slice(std::size_t n, const Tensor& sample) {
    require(rank() >= 2 && n < shape_[0], "slice index out of range for " + shape_str(shape_));
    require(Shape(shape_.begin() + 1, shape_.end()) == sample.shape(),
            "slice shape " + shape_str(sample.shape()) + " does not fit " + shape_str(shape_));
    std::copy(sample.data_.begin(), sample.data_.end(),
              data_.begin() + static_cast<std::ptrdiff_t>(n * sample.size()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require(shape_ == other.shape_, "shape mismatch in +=: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    require(a.shape() == b.shape(), "max_relative_error: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    return diff / std::max(max_abs(b), floor);
}

// ---------------------------------------------------------------------------

ConvKernel::ConvKernel(Tensor w, std::optional<Tensor> b) : weights(std::move(w)), bias(std::move(b)) {
    require(weights.rank() == 4, "conv kernel must be rank-4 (kh, kw, C_in, C_out), got " + shape_str(weights.shape()));
    require(weights.dim(0) % 2 == 1 && weights.dim(1) % 2 == 1,
            "conv kernel spatial size must be odd, got " + std::to_string(weights.dim(0)) + "x" +
                std::to_string(weights.dim(1)));
    if (bias) {
        require(bias->rank() == 1 && bias->dim(0) == weights.dim(3),
                "conv bias must have one entry per output channel");
    }
}

ConvKernel ConvKernel::tiled(Tensor w) {
    require(w.rank() == 4, "conv kernel must be rank-4 (kh, kw, C_in, C_out), got " + shape_str(w.shape()));
    ConvKernel k;
    k.weights = std::move(w);
    return k;
}

std::size_t conv_out_extent(std::size_t n, std::size_t pad, std::size_t extent, std::size_t stride) {
    require(stride >= 1, "stride must be positive");
    if (n + 2 * pad < extent) throw ValidationError("window extent exceeds padded input: empty output");
    return (n + 2 * pad - extent) / stride + 1;
}

Tensor conv2d(const Tensor& input, const ConvKernel& kernel, Size2 stride, Size2 padding) {
    return conv2d_dilated(input, kernel, stride, padding, {1, 1});
}

ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_output,
                          Size2 stride, Size2 padding) {
    return conv2d_dilated_backward(input, kernel, grad_output, stride, padding, {1, 1});
}

Tensor conv2d_dilated(const Tensor& input, const ConvKernel& kernel, Size2 stride, Size2 padding,
                      Size2 dilation) {
    const ConvGeometry g = make_geometry(input, kernel, stride, padding, dilation, "conv2d");
    const std::vector<double> cols = im2col(input, g);
    Tensor out({g.out_h, g.out_w, g.out_c});
    gemm(cols, kernel.weights.data(), out.data(), g.locations(), g.patch(), g.out_c);
    if (kernel.bias) {
        for (std::size_t loc = 0; loc < g.locations(); ++loc)
            for (std::size_t co = 0; co < g.out_c; ++co) out[loc * g.out_c + co] += (*kernel.bias)[co];
    }
    return out;
}

ConvGrads conv2d_dilated_backward(const Tensor& input, const ConvKernel& kernel,
                                  const Tensor& grad_output, Size2 stride, Size2 padding,
                                  Size2 dilation) {
    const ConvGeometry g = make_geometry(input, kernel, stride, padding, dilation, "conv2d_backward");
    require(grad_output.shape() == Shape{g.out_h, g.out_w, g.out_c},
            "conv2d_backward: grad_output shape " + shape_str(grad_output.shape()) + " does not match output " +
                shape_str({g.out_h, g.out_w, g.out_c}));

    const std::vector<double> cols = im2col(input, g);
    const auto go = grad_output.data();
    const auto w = kernel.weights.data();

    ConvGrads grads{Tensor(input.shape()), Tensor(kernel.weights.shape()), std::nullopt};

    // d W = cols^T * G
    auto gw = grads.weights.data();
    for (std::size_t loc = 0; loc < g.locations(); ++loc) {
        for (std::size_t p = 0; p < g.patch(); ++p) {
            const double cv = cols[loc * g.patch() + p];
            if (cv == 0.0) continue;
            for (std::size_t co = 0; co < g.out_c; ++co) gw[p * g.out_c + co] += cv * go[loc * g.out_c + co];
        }
    }

    // d cols = G * W^T, scattered back through the tap map.
    auto gx = grads.input.data();
    for_each_tap(g, [&](std::size_t loc, std::size_t p, std::size_t idx) {
        double acc = 0.0;
        for (std::size_t co = 0; co < g.out_c; ++co) acc += go[loc * g.out_c + co] * w[p * g.out_c + co];
        gx[idx] += acc;
    });

    if (kernel.bias) {
        Tensor gb({g.out_c});
        for (std::size_t loc = 0; loc < g.locations(); ++loc)
            for (std::size_t co = 0; co < g.out_c; ++co) gb[co] += go[loc * g.out_c + co];
        grads.bias = std::move(gb);
    }
    return grads;
}

// ---------------------------------------------------------------------------

namespace {

struct PoolGeometry {
    std::size_t in_h, in_w, ch, out_h, out_w;
};

PoolGeometry pool_geometry(const Tensor& input, Size2 window, Size2 stride, const char* op) {
    require_rank3(input, op);
    require(window.rows >= 1 && window.cols >= 1, std::string(op) + ": window must be positive");
    require(input.dim(0) >= window.rows && input.dim(1) >= window.cols,
            std::string(op) + ": window larger than input " + shape_str(input.shape()));
    return {input.dim(0), input.dim(1), input.dim(2), conv_out_extent(input.dim(0), 0, window.rows, stride.rows),
            conv_out_extent(input.dim(1), 0, window.cols, stride.cols)};
}

void require_grad_shape(const Tensor& grad, const Shape& expected, const char* op) {
    require(grad.shape() == expected, std::string(op) + ": grad_output shape " + shape_str(grad.shape()) +
                                          " does not match " + shape_str(expected));
}

}  // namespace

Tensor max_pool2d(const Tensor& input, Size2 window, Size2 stride) {
    const auto g = pool_geometry(input, window, stride, "max_pool2d");
    Tensor out({g.out_h, g.out_w, g.ch});
    for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j)
            for (std::size_t c = 0; c < g.ch; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t m = 0; m < window.rows; ++m)
                    for (std::size_t n = 0; n < window.cols; ++n)
                        best = std::max(best, input.at(i * stride.rows + m, j * stride.cols + n, c));
                out.at(i, j, c) = best;
            }
    return out;
}

Tensor max_pool2d_backward(const Tensor& input, const Tensor& grad_output, Size2 window, Size2 stride) {
    const auto g = pool_geometry(input, window, stride, "max_pool2d_backward");
    require_grad_shape(grad_output, {g.out_h, g.out_w, g.ch}, "max_pool2d_backward");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j)
            for (std::size_t c = 0; c < g.ch; ++c) {
                std::size_t br = i * stride.rows, bc = j * stride.cols;
                double best = input.at(br, bc, c);
                for (std::size_t m = 0; m < window.rows; ++m)
                    for (std::size_t n = 0; n < window.cols; ++n) {
                        const double v = input.at(i * stride.rows + m, j * stride.cols + n, c);
                        if (v > best) {
                            best = v;
                            br = i * stride.rows + m;
                            bc = j * stride.cols + n;
                        }
                    }
                grad.at(br, bc, c) += grad_output.at(i, j, c);
            }
    return grad;
}

Tensor mean_pool2d(const Tensor& input, Size2 window, Size2 stride) {
    const auto g = pool_geometry(input, window, stride, "mean_pool2d");
    const double scale = 1.0 / static_cast<double>(window.rows * window.cols);
    Tensor out({g.out_h, g.out_w, g.ch});
    for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j)
            for (std::size_t c = 0; c < g.ch; ++c) {
                double sum = 0.0;
                for (std::size_t m = 0; m < window.rows; ++m)
                    for (std::size_t n = 0; n < window.cols; ++n)
                        sum += input.at(i * stride.rows + m, j * stride.cols + n, c);
                out.at(i, j, c) = sum * scale;
            }
    return out;
}

Tensor mean_pool2d_backward(const Tensor& input, const Tensor& grad_output, Size2 window, Size2 stride) {
    const auto g = pool_geometry(input, window, stride, "mean_pool2d_backward");
    require_grad_shape(grad_output, {g.out_h, g.out_w, g.ch}, "mean_pool2d_backward");
    const double scale = 1.0 / static_cast<double>(window.rows * window.cols);
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j)
            for (std::size_t c = 0; c < g.ch; ++c) {
                const double v = grad_output.at(i, j, c) * scale;
                for (std::size_t m = 0; m < window.rows; ++m)
                    for (std::size_t n = 0; n < window.cols; ++n)
                        grad.at(i * stride.rows + m, j * stride.cols + n, c) += v;
            }
    return grad;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
    require_grad_shape(grad_output, input.shape(), "relu_backward");
    Tensor grad = grad_output;
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(input[i] > 0.0)) grad[i] = 0.0;
    return grad;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor* bias) {
    require(weights.rank() == 2, "dense: weights must be rank-2 (in, out)");
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    require(input.size() == n, "dense: input has " + std::to_string(input.size()) + " values, layer expects " +
                                   std::to_string(n));
    if (bias) require(bias->size() == m, "dense: bias length does not match output size");
    Tensor out({m});
    gemm(input.data(), weights.data(), out.data(), 1, n, m);
    if (bias)
        for (std::size_t j = 0; j < m; ++j) out[j] += (*bias)[j];
    return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output) {
    require(weights.rank() == 2, "dense_backward: weights must be rank-2 (in, out)");
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    require(input.size() == n, "dense_backward: input size mismatch");
    require(grad_output.size() == m, "dense_backward: grad_output size mismatch");
    DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), grad_output.reshaped({m})};
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            g.weights[i * m + j] = input[i] * grad_output[j];
            acc += weights[i * m + j] * grad_output[j];
        }
        g.input[i] = acc;
    }
    return g;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
    require(logits.rank() == 1 || logits.rank() == 2, "softmax_cross_entropy: logits must be (K) or (N, K)");
    const std::size_t batch = logits.rank() == 2 ? logits.dim(0) : 1;
    const std::size_t k = logits.rank() == 2 ? logits.dim(1) : logits.dim(0);
    require(labels.size() == batch, "softmax_cross_entropy: expected " + std::to_string(batch) + " labels, got " +
                                        std::to_string(labels.size()));
    require(batch >= 1 && k >= 1, "softmax_cross_entropy: empty logits");
    LossResult res{0.0, Tensor(logits.shape())};
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        require(labels[s] < k, "softmax_cross_entropy: label out of range");
        const double* z = logits.data().data() + s * k;
        const double zmax = *std::max_element(z, z + k);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
        const double log_denom = std::log(denom);
        res.loss += (log_denom - (z[labels[s]] - zmax)) * inv_batch;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(z[j] - zmax - log_denom);
            res.grad[s * k + j] = (p - (j == labels[s] ? 1.0 : 0.0)) * inv_batch;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

namespace detail {

void write_f64_le(std::ostream& out, std::span<const double> values) {
    std::vector<char> buf(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_f64_le(std::istream& in, std::span<double> values, const std::string& what) {
    std::vector<unsigned char> buf(values.size() * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw FormatError(what + ": truncated payload (expected " + std::to_string(buf.size()) + " bytes, got " +
                          std::to_string(in.gcount()) + ")");
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
}

}  // namespace detail

void write_tensor(std::ostream& out, const Tensor& t) {
    out << "TNSR v1 " << t.rank();
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    detail::write_f64_le(out, t.data());
}

Tensor read_tensor(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("tensor: missing header line");
    std::istringstream hs(header);
    std::string magic, version;
    std::size_t ndim = 0;
    if (!(hs >> magic >> version >> ndim) || magic != "TNSR" || version != "v1")
        throw FormatError("tensor: bad header '" + header + "'");
    if (ndim > 8) throw FormatError("tensor: unsupported rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& d : shape)
        if (!(hs >> d)) throw FormatError("tensor: header lists fewer than " + std::to_string(ndim) + " dimensions");
    std::string extra;
    if (hs >> extra) throw FormatError("tensor: trailing tokens in header");
    std::vector<double> data(shape_product(shape));
    detail::read_f64_le(in, data, "tensor");
    try {
        return Tensor::from_external(std::move(shape), std::move(data));
    } catch (const ValidationError& e) {
        throw FormatError(std::string("tensor: ") + e.what());
    }
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    write_tensor(out, t);
    if (!out) throw FormatError("failed writing '" + path + "'");
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    try {
        return read_tensor(in);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

}  // namespace lpsc
