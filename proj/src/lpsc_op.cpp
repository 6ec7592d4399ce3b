#include "lpsc/lpsc_op.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lpsc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

// Mask cells grouped by region, each list in row-major mask order.
struct RegionCells {
    std::vector<std::vector<Size2>> cells;   // indexed by k - 1; (row, col) within the mask
};

RegionCells region_cells(const LogPolarMask& mask) {
    RegionCells rc;
    rc.cells.resize(mask.regions());
    for (std::size_t r = 0; r < mask.size; ++r)
        for (std::size_t c = 0; c < mask.size; ++c)
            if (const int k = mask.at(r, c); k > 0) rc.cells[static_cast<std::size_t>(k - 1)].push_back({r, c});
    return rc;
}

struct Window {
    std::size_t in_h, in_w, ch;
    std::size_t out_h, out_w;
    Size2 stride, padding;

    // Input coordinate of mask cell (mr, mc) at location (i, j); false if it falls in padding.
    bool locate(std::size_t i, std::size_t j, std::size_t mr, std::size_t mc, std::size_t& r, std::size_t& c) const {
        const auto rr = static_cast<std::ptrdiff_t>(i * stride.rows + mr) - static_cast<std::ptrdiff_t>(padding.rows);
        const auto cc = static_cast<std::ptrdiff_t>(j * stride.cols + mc) - static_cast<std::ptrdiff_t>(padding.cols);
        if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(in_h) || cc >= static_cast<std::ptrdiff_t>(in_w))
            return false;
        r = static_cast<std::size_t>(rr);
        c = static_cast<std::size_t>(cc);
        return true;
    }
};

Window make_window(const Tensor& input, std::size_t mask_size, Size2 stride, Size2 padding, const char* op) {
    require(input.rank() == 3, std::string(op) + ": expected a rank-3 (H, W, C) input, got " + shape_str(input.shape()));
    require(stride.rows >= 1 && stride.cols >= 1, std::string(op) + ": stride must be positive");
    const std::size_t h = input.dim(0), w = input.dim(1);
    require(h + 2 * padding.rows >= mask_size && w + 2 * padding.cols >= mask_size,
            std::string(op) + ": mask of size " + std::to_string(mask_size) + " exceeds padded input " +
                std::to_string(h + 2 * padding.rows) + "x" + std::to_string(w + 2 * padding.cols));
    return {h, w, input.dim(2), conv_out_extent(h, padding.rows, mask_size, stride.rows),
            conv_out_extent(w, padding.cols, mask_size, stride.cols), stride, padding};
}

double region_scale(PoolingMode mode, std::size_t count) {
    if (mode != PoolingMode::Mean) return 1.0;
    return 1.0 / static_cast<double>(count == 0 ? 1 : count);
}

// Center pixels of every window: (H', W', C).
Tensor gather_centers(const Tensor& input, const Window& win, std::size_t radius) {
    Tensor centers({win.out_h, win.out_w, win.ch});
    for (std::size_t i = 0; i < win.out_h; ++i)
        for (std::size_t j = 0; j < win.out_w; ++j) {
            std::size_t r, c;
            if (!win.locate(i, j, radius, radius, r, c)) continue;
            for (std::size_t ch = 0; ch < win.ch; ++ch) centers.at(i, j, ch) = input.at(r, c, ch);
        }
    return centers;
}

void scatter_centers(Tensor& grad_input, const Tensor& grad_centers, const Window& win, std::size_t radius) {
    for (std::size_t i = 0; i < win.out_h; ++i)
        for (std::size_t j = 0; j < win.out_w; ++j) {
            std::size_t r, c;
            if (!win.locate(i, j, radius, radius, r, c)) continue;
            for (std::size_t ch = 0; ch < win.ch; ++ch) grad_input.at(r, c, ch) += grad_centers.at(i, j, ch);
        }
}

ConvKernel center_kernel(const LpscWeights& weights) {
    return ConvKernel(weights.center.reshaped({1, 1, weights.in_channels(), weights.out_channels()}));
}

void check_mask_matches(const LpscConfig& config, const LogPolarMask& mask) {
    require(mask.size == config.kernel_size && mask.levels_r == config.levels_r &&
                mask.levels_theta == config.levels_theta,
            "mask geometry does not match the LPSC config");
}

}  // namespace

// ---------------------------------------------------------------------------

LpscWeights::LpscWeights(std::size_t levels_r, std::size_t levels_theta, std::size_t in_channels,
                         std::size_t out_channels, bool with_bias)
    : center({in_channels, out_channels}), regions({levels_r, levels_theta, in_channels, out_channels}) {
    if (with_bias) bias = Tensor({out_channels});
}

std::size_t LpscWeights::parameter_count() const {
    return center.size() + regions.size() + (bias ? bias->size() : 0);
}

void LpscWeights::validate_for(const LpscConfig& config) const {
    require(regions.rank() == 4 && center.rank() == 2, "LPSC weights: malformed tensors");
    require(levels_r() == config.levels_r && levels_theta() == config.levels_theta,
            "LPSC weights have " + std::to_string(levels_r()) + "x" + std::to_string(levels_theta()) +
                " regions but config expects " + std::to_string(config.levels_r) + "x" +
                std::to_string(config.levels_theta));
    require(center.dim(0) == in_channels() && center.dim(1) == out_channels(),
            "LPSC weights: center block shape does not match region block");
    if (bias) require(bias->rank() == 1 && bias->dim(0) == out_channels(), "LPSC weights: bias length mismatch");
}

Size2 lpsc_output_extent(const LpscConfig& config, std::size_t rows, std::size_t cols) {
    return {conv_out_extent(rows, config.padding.rows, config.kernel_size, config.stride.rows),
            conv_out_extent(cols, config.padding.cols, config.kernel_size, config.stride.cols)};
}

Size2 block_position(std::size_t level, std::size_t direction, std::size_t levels_r, std::size_t levels_theta) {
    const std::size_t half = levels_theta / 2;
    if (direction <= half) return {levels_r - level, direction - 1};
    return {levels_r + level - 1, levels_theta - direction};
}

PooledMap log_polar_pool(const Tensor& input, const LogPolarMask& mask, Size2 stride, Size2 padding,
                         PoolingMode mode) {
    const Window win = make_window(input, mask.size, stride, padding, "log_polar_pool");
    const RegionCells rc = region_cells(mask);
    const std::size_t lr = mask.levels_r, lt = mask.levels_theta;
    const std::size_t block_h = 2 * lr, block_w = lt / 2;

    PooledMap pm{Tensor({win.out_h * block_h, win.out_w * block_w, win.ch}), win.out_h, win.out_w};
    std::vector<double> acc(win.ch);
    for (std::size_t i = 0; i < win.out_h; ++i) {
        for (std::size_t j = 0; j < win.out_w; ++j) {
            for (std::size_t l = 1; l <= lr; ++l) {
                for (std::size_t m = 1; m <= lt; ++m) {
                    const auto& cells = rc.cells[(l - 1) * lt + (m - 1)];
                    const Size2 pos = block_position(l, m, lr, lt);
                    if (cells.empty()) continue;
                    const bool is_max = mode == PoolingMode::Max;
                    bool first = true;
                    std::fill(acc.begin(), acc.end(), 0.0);
                    for (const Size2 cell : cells) {
                        std::size_t r = 0, c = 0;
                        const bool inside = win.locate(i, j, cell.rows, cell.cols, r, c);
                        for (std::size_t ch = 0; ch < win.ch; ++ch) {
                            const double v = inside ? input.at(r, c, ch) : 0.0;
                            if (is_max) acc[ch] = first ? v : std::max(acc[ch], v);
                            else acc[ch] += v;
                        }
                        first = false;
                    }
                    const double scale = region_scale(mode, cells.size());
                    for (std::size_t ch = 0; ch < win.ch; ++ch)
                        pm.values.at(i * block_h + pos.rows, j * block_w + pos.cols, ch) = acc[ch] * scale;
                }
            }
        }
    }
    return pm;
}

Tensor log_polar_pool_backward(const Tensor& input, const LogPolarMask& mask, Size2 stride, Size2 padding,
                               PoolingMode mode, const Tensor& grad_pooled) {
    const Window win = make_window(input, mask.size, stride, padding, "log_polar_pool_backward");
    const RegionCells rc = region_cells(mask);
    const std::size_t lr = mask.levels_r, lt = mask.levels_theta;
    const std::size_t block_h = 2 * lr, block_w = lt / 2;
    require(grad_pooled.shape() == Shape{win.out_h * block_h, win.out_w * block_w, win.ch},
            "log_polar_pool_backward: grad shape " + shape_str(grad_pooled.shape()) + " does not match pooled map");

    Tensor grad(input.shape());
    for (std::size_t i = 0; i < win.out_h; ++i) {
        for (std::size_t j = 0; j < win.out_w; ++j) {
            for (std::size_t l = 1; l <= lr; ++l) {
                for (std::size_t m = 1; m <= lt; ++m) {
                    const auto& cells = rc.cells[(l - 1) * lt + (m - 1)];
                    if (cells.empty()) continue;
                    const Size2 pos = block_position(l, m, lr, lt);
                    const std::size_t pr = i * block_h + pos.rows, pc = j * block_w + pos.cols;
                    if (mode == PoolingMode::Max) {
                        for (std::size_t ch = 0; ch < win.ch; ++ch) {
                            double best = 0.0;
                            bool best_inside = false, first = true;
                            std::size_t br = 0, bc = 0;
                            for (const Size2 cell : cells) {
                                std::size_t r = 0, c = 0;
                                const bool inside = win.locate(i, j, cell.rows, cell.cols, r, c);
                                const double v = inside ? input.at(r, c, ch) : 0.0;
                                if (first || v > best) {
                                    best = v;
                                    best_inside = inside;
                                    br = r;
                                    bc = c;
                                    first = false;
                                }
                            }
                            if (best_inside) grad.at(br, bc, ch) += grad_pooled.at(pr, pc, ch);
                        }
                        continue;
                    }
                    const double scale = region_scale(mode, cells.size());
                    for (const Size2 cell : cells) {
                        std::size_t r = 0, c = 0;
                        if (!win.locate(i, j, cell.rows, cell.cols, r, c)) continue;
                        for (std::size_t ch = 0; ch < win.ch; ++ch)
                            grad.at(r, c, ch) += grad_pooled.at(pr, pc, ch) * scale;
                    }
                }
            }
        }
    }
    return grad;
}

Tensor block_kernel(const LpscWeights& weights) {
    const std::size_t lr = weights.levels_r(), lt = weights.levels_theta();
    const std::size_t cin = weights.in_channels(), cout = weights.out_channels();
    Tensor block({2 * lr, lt / 2, cin, cout});
    for (std::size_t l = 1; l <= lr; ++l)
        for (std::size_t m = 1; m <= lt; ++m) {
            const Size2 pos = block_position(l, m, lr, lt);
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t co = 0; co < cout; ++co)
                    block.at(pos.rows, pos.cols, ci, co) = weights.region(l, m, ci, co);
        }
    return block;
}

Tensor fold_block_kernel(const Tensor& block, std::size_t levels_r, std::size_t levels_theta) {
    require(block.rank() == 4 && block.dim(0) == 2 * levels_r && block.dim(1) == levels_theta / 2,
            "fold_block_kernel: block shape " + shape_str(block.shape()) + " does not match the region layout");
    const std::size_t cin = block.dim(2), cout = block.dim(3);
    Tensor regions({levels_r, levels_theta, cin, cout});
    for (std::size_t l = 1; l <= levels_r; ++l)
        for (std::size_t m = 1; m <= levels_theta; ++m) {
            const Size2 pos = block_position(l, m, levels_r, levels_theta);
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t co = 0; co < cout; ++co)
                    regions.at(l - 1, m - 1, ci, co) = block.at(pos.rows, pos.cols, ci, co);
        }
    return regions;
}

// ---------------------------------------------------------------------------

Tensor lpsc_forward_fast(const Tensor& input, const LpscConfig& config, const LpscWeights& weights) {
    return lpsc_forward_fast(input, config, build_mask(config), weights);
}

Tensor lpsc_forward_fast(const Tensor& input, const LpscConfig& config, const LogPolarMask& mask,
                         const LpscWeights& weights) {
    config.validate();
    check_mask_matches(config, mask);
    weights.validate_for(config);
    require(input.rank() == 3 && input.dim(2) == weights.in_channels(),
            "lpsc_forward: input " + shape_str(input.shape()) + " does not have " +
                std::to_string(weights.in_channels()) + " channels");

    const PooledMap pooled = log_polar_pool(input, mask, config.stride, config.padding, config.pooling);
    const Size2 block{2 * config.levels_r, config.levels_theta / 2};
    Tensor out = conv2d(pooled.values, ConvKernel::tiled(block_kernel(weights)), block, {0, 0});

    if (config.center_conv) {
        const Window win = make_window(input, config.kernel_size, config.stride, config.padding, "lpsc_forward");
        out += conv2d(gather_centers(input, win, config.radius()), center_kernel(weights), {1, 1}, {0, 0});
    }
    if (weights.bias) {
        const std::size_t cout = weights.out_channels();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*weights.bias)[i % cout];
    }
    return out;
}

Tensor lpsc_forward_reference(const Tensor& input, const LpscConfig& config, const LpscWeights& weights) {
    return lpsc_forward_reference(input, config, build_mask(config), weights);
}

Tensor lpsc_forward_reference(const Tensor& input, const LpscConfig& config, const LogPolarMask& mask,
                              const LpscWeights& weights) {
    config.validate();
    check_mask_matches(config, mask);
    weights.validate_for(config);
    require(input.rank() == 3 && input.dim(2) == weights.in_channels(),
            "lpsc_forward: input " + shape_str(input.shape()) + " does not have " +
                std::to_string(weights.in_channels()) + " channels");
    const Window win = make_window(input, mask.size, config.stride, config.padding, "lpsc_forward_reference");
    const std::size_t cin = win.ch, cout = weights.out_channels();
    const std::size_t radius = config.radius();
    const auto padded = [&](std::size_t i, std::size_t j, std::size_t mr, std::size_t mc, std::size_t ch) {
        std::size_t r = 0, c = 0;
        return win.locate(i, j, mr, mc, r, c) ? input.at(r, c, ch) : 0.0;
    };

    Tensor out({win.out_h, win.out_w, cout});
    for (std::size_t i = 0; i < win.out_h; ++i) {
        for (std::size_t j = 0; j < win.out_w; ++j) {
            for (std::size_t co = 0; co < cout; ++co) {
                double y = 0.0;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    if (config.center_conv)
                        y += weights.center[ci * cout + co] * padded(i, j, radius, radius, ci);
                    for (std::size_t l = 1; l <= config.levels_r; ++l) {
                        for (std::size_t m = 1; m <= config.levels_theta; ++m) {
                            const int k = region_index(l, m, config.levels_theta);
                            const std::size_t n = mask.counts[static_cast<std::size_t>(k - 1)];
                            if (n == 0) continue;
                            double agg = 0.0;
                            bool first = true;
                            for (std::size_t mr = 0; mr < mask.size; ++mr)
                                for (std::size_t mc = 0; mc < mask.size; ++mc) {
                                    if (mask.at(mr, mc) != k) continue;
                                    const double v = padded(i, j, mr, mc, ci);
                                    if (config.pooling == PoolingMode::Max) agg = first ? v : std::max(agg, v);
                                    else agg += v;
                                    first = false;
                                }
                            const double w = weights.region(l, m, ci, co);
                            y += config.pooling == PoolingMode::Mean ? w * agg / static_cast<double>(n) : w * agg;
                        }
                    }
                }
                if (weights.bias) y += (*weights.bias)[co];
                out.at(i, j, co) = y;
            }
        }
    }
    return out;
}

LpscGrads lpsc_backward(const Tensor& input, const LpscConfig& config, const LpscWeights& weights,
                        const Tensor& grad_output) {
    return lpsc_backward(input, config, build_mask(config), weights, grad_output);
}

LpscGrads lpsc_backward(const Tensor& input, const LpscConfig& config, const LogPolarMask& mask,
                        const LpscWeights& weights, const Tensor& grad_output) {
    config.validate();
    check_mask_matches(config, mask);
    weights.validate_for(config);
    require(input.rank() == 3 && input.dim(2) == weights.in_channels(),
            "lpsc_backward: input channel count does not match weights");
    const Window win = make_window(input, mask.size, config.stride, config.padding, "lpsc_backward");
    const std::size_t cout = weights.out_channels();
    require(grad_output.shape() == Shape{win.out_h, win.out_w, cout},
            "lpsc_backward: grad_output shape " + shape_str(grad_output.shape()) + " does not match output " +
                shape_str({win.out_h, win.out_w, cout}));

    LpscGrads grads{Tensor(input.shape()),
                    LpscWeights(config.levels_r, config.levels_theta, win.ch, cout, weights.bias.has_value())};

    const PooledMap pooled = log_polar_pool(input, mask, config.stride, config.padding, config.pooling);
    const Size2 block{2 * config.levels_r, config.levels_theta / 2};
    const ConvGrads context = conv2d_backward(pooled.values, ConvKernel::tiled(block_kernel(weights)), grad_output, block,
                                              {0, 0});
    grads.weights.regions = fold_block_kernel(context.weights, config.levels_r, config.levels_theta);
    grads.input = log_polar_pool_backward(input, mask, config.stride, config.padding, config.pooling, context.input);

    if (config.center_conv) {
        const Tensor centers = gather_centers(input, win, config.radius());
        const ConvGrads cg = conv2d_backward(centers, center_kernel(weights), grad_output, {1, 1}, {0, 0});
        grads.weights.center = cg.weights.reshaped({win.ch, cout});
        scatter_centers(grads.input, cg.input, win, config.radius());
    }
    if (weights.bias) {
        Tensor& gb = *grads.weights.bias;
        for (std::size_t i = 0; i < grad_output.size(); ++i) gb[i % cout] += grad_output[i];
    }
    return grads;
}

// ---------------------------------------------------------------------------

void write_lpsc_weights(std::ostream& out, const LpscWeights& weights) {
    out << "LPSCW v1 " << weights.levels_r() << ' ' << weights.levels_theta() << ' ' << weights.in_channels() << ' '
        << weights.out_channels() << ' ' << (weights.bias ? 1 : 0) << '\n';
    detail::write_f64_le(out, weights.center.data());
    detail::write_f64_le(out, weights.regions.data());
    if (weights.bias) detail::write_f64_le(out, weights.bias->data());
}

LpscWeights read_lpsc_weights(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("LPSC weights: missing header line");
    std::istringstream hs(header);
    std::string magic, version, extra;
    std::size_t lr = 0, lt = 0, cin = 0, cout = 0;
    int has_bias = -1;
    if (!(hs >> magic >> version >> lr >> lt >> cin >> cout >> has_bias) || magic != "LPSCW" || version != "v1" ||
        (has_bias != 0 && has_bias != 1) || (hs >> extra))
        throw FormatError("LPSC weights: bad header '" + header + "'");
    if (lr == 0 || lt < 2 || lt % 2 != 0 || cin == 0 || cout == 0 || lr * lt * cin * cout > (std::size_t{1} << 30))
        throw FormatError("LPSC weights: implausible dimensions in header '" + header + "'");
    LpscWeights w(lr, lt, cin, cout, has_bias == 1);
    detail::read_f64_le(in, w.center.data(), "LPSC weights");
    detail::read_f64_le(in, w.regions.data(), "LPSC weights");
    if (w.bias) detail::read_f64_le(in, w.bias->data(), "LPSC weights");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("LPSC weights: trailing bytes after payload");
    if (!w.center.all_finite() || !w.regions.all_finite() || (w.bias && !w.bias->all_finite()))
        throw FormatError("LPSC weights: payload contains NaN or Inf");
    return w;
}

void save_lpsc_weights(const std::string& path, const LpscWeights& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    write_lpsc_weights(out, weights);
    if (!out) throw FormatError("failed writing '" + path + "'");
}

LpscWeights load_lpsc_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    try {
        return read_lpsc_weights(in);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

}  // namespace lpsc
