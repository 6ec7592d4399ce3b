#include "lpsc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

namespace lpsc {

namespace {

std::size_t spatial(const Shape& s) { return s.size() == 3 ? s[0] * s[1] : 1; }

}  // namespace

LayerCost lpsc_layer_cost(const LpscConfig& config, const Shape& input_shape, std::size_t out_channels, bool bias) {
    if (input_shape.size() != 3) throw ValidationError("lpsc cost needs an (H, W, C) input");
    const LogPolarMask mask = build_mask(config);
    const Size2 ext = lpsc_output_extent(config, input_shape[0], input_shape[1]);
    const std::size_t loc = ext.rows * ext.cols, c = input_shape[2], cp = out_channels;
    const std::size_t regions = config.regions();

    LayerCost lc;
    lc.kind = "lpsc";
    lc.output_shape = {ext.rows, ext.cols, cp};
    lc.params_per_pair = config.params_per_pair();
    lc.params = lc.params_per_pair * c * cp + (bias ? cp : 0);
    lc.context_multiplies = loc * regions * c * cp;
    lc.center_multiplies = config.center_conv ? loc * c * cp : 0;
    lc.pool_adds = loc * c * mask.in_field_cells();
    lc.pool_multiplies = config.pooling == PoolingMode::Mean ? loc * c * regions : 0;
    lc.pooled_cells = loc * regions * c;
    lc.multiplies = lc.context_multiplies + lc.center_multiplies + lc.pool_multiplies;
    lc.adds = lc.context_multiplies + lc.center_multiplies + lc.pool_adds + (bias ? loc * cp : 0);
    return lc;
}

CostReport count_costs(const NetSpec& spec) {
    const Network net(spec, 0);
    CostReport report;
    Shape in = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& ls = spec.layers[i];
        const Shape out = net.layer(i).output_shape();
        LayerCost lc;
        switch (ls.kind) {
            case LayerKind::Lpsc: lc = lpsc_layer_cost(ls.lpsc, in, ls.out_channels, ls.bias); break;
            case LayerKind::Conv:
            case LayerKind::Dilated:
            case LayerKind::SquareShare: {
                const std::size_t k = ls.kernel_size, c = in[2], cp = ls.out_channels;
                const std::size_t grid = ls.kind == LayerKind::SquareShare ? k / ls.pool_size : k;
                lc.params_per_pair = grid * grid;
                lc.params = grid * grid * c * cp + (ls.bias ? cp : 0);
                lc.multiplies = spatial(out) * k * k * c * cp;
                lc.adds = lc.multiplies + (ls.bias ? spatial(out) * cp : 0);
                break;
            }
            case LayerKind::Dense: {
                const std::size_t n = in[0], m = ls.out_channels;
                lc.params = n * m + m;
                lc.multiplies = n * m;
                lc.adds = n * m + m;
                break;
            }
            case LayerKind::MaxPool:
            case LayerKind::MeanPool: {
                const std::size_t cells = spatial(out) * out[2];
                lc.adds = cells * (ls.window * ls.window - 1);
                lc.multiplies = ls.kind == LayerKind::MeanPool ? cells : 0;
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Flatten: break;
        }
        lc.index = i;
        lc.kind = to_string(ls.kind);
        lc.output_shape = out;
        report.total_params += lc.params;
        report.total_multiplies += lc.multiplies;
        report.total_adds += lc.adds;
        report.total_pooled_cells += lc.pooled_cells;
        report.layers.push_back(lc);
        in = out;
    }
    return report;
}

CostReport count_costs(const NetSpec& spec, const Shape& input_shape) {
    NetSpec copy = spec;
    copy.input_shape = input_shape;
    return count_costs(copy);
}

void write_cost_table(std::ostream& out, const CostReport& report) {
    const auto row = [&](const std::string& idx, const std::string& kind, const std::string& shape,
                         const std::string& params, const std::string& per_pair, const std::string& mul,
                         const std::string& add, const std::string& pooled) {
        out << std::left << std::setw(6) << idx << std::setw(14) << kind << std::setw(16) << shape << std::right
            << std::setw(12) << params << std::setw(10) << per_pair << std::setw(14) << mul << std::setw(14) << add
            << std::setw(14) << pooled << '\n';
    };
    row("layer", "kind", "output", "params", "per_pair", "multiplies", "adds", "pooled");
    for (const auto& l : report.layers)
        row(std::to_string(l.index), l.kind, shape_str(l.output_shape), std::to_string(l.params),
            l.params_per_pair ? std::to_string(l.params_per_pair) : "-", std::to_string(l.multiplies),
            std::to_string(l.adds), std::to_string(l.pooled_cells));
    row("total", "", "", std::to_string(report.total_params), "", std::to_string(report.total_multiplies),
        std::to_string(report.total_adds), std::to_string(report.total_pooled_cells));
}

void write_cost_csv(std::ostream& out, const CostReport& report) {
    out << "layer,kind,output,params,params_per_pair,multiplies,adds,pooled_cells,context_multiplies,"
           "center_multiplies,pool_multiplies,pool_adds\n";
    for (const auto& l : report.layers) {
        std::string shape;
        for (std::size_t i = 0; i < l.output_shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(l.output_shape[i]);
        out << l.index << ',' << l.kind << ',' << shape << ',' << l.params << ',' << l.params_per_pair << ','
            << l.multiplies << ',' << l.adds << ',' << l.pooled_cells << ',' << l.context_multiplies << ','
            << l.center_multiplies << ',' << l.pool_multiplies << ',' << l.pool_adds << '\n';
    }
}

// ---------------------------------------------------------------------------

namespace {

std::size_t spatial_prefix(const Network& network) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < network.layer_count(); ++i)
        if (network.layer(i).output_shape().size() == 3) n = i + 1;
        else break;
    if (n == 0) throw ValidationError("receptive-field estimation needs at least one spatial layer");
    return n;
}

}  // namespace

Size2 center_location(const Network& network) {
    const Shape& out = network.layer(spatial_prefix(network) - 1).output_shape();
    return {out[0] / 2, out[1] / 2};
}

RfReport estimate_rf(const Network& network, Size2 location, std::uint64_t seed) {
    const std::size_t n = spatial_prefix(network);
    const Shape& out = network.layer(n - 1).output_shape();
    if (location.rows >= out[0] || location.cols >= out[1])
        throw ValidationError("output location (" + std::to_string(location.rows) + ", " +
                              std::to_string(location.cols) + ") outside the " + shape_str(out) + " output grid");

    const Shape& in_shape = network.spec().input_shape;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor x(in_shape);
    for (double& v : x.data()) v = dist(rng);

    const auto acts = network.trace(x, n);
    Tensor grad(out);
    for (std::size_t c = 0; c < out[2]; ++c) grad.at(location.rows, location.cols, c) = 1.0;
    const Tensor gx = network.backtrace(acts, grad, n, nullptr);

    RfReport rep;
    const std::size_t h = in_shape[0], w = in_shape[1];
    rep.gradient = Tensor({h, w});
    rep.support.assign(h * w, false);
    rep.top = h;
    rep.left = w;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (std::size_t ch = 0; ch < in_shape[2]; ++ch) s += std::abs(gx.at(r, c, ch));
            rep.gradient[r * w + c] = s;
            if (s > kRfThreshold) {
                rep.support[r * w + c] = true;
                ++rep.support_cells;
                rep.top = std::min(rep.top, r);
                rep.bottom = std::max(rep.bottom, r);
                rep.left = std::min(rep.left, c);
                rep.right = std::max(rep.right, c);
            }
        }
    if (rep.support_cells == 0) rep.top = rep.left = 0;
    return rep;
}

// ---------------------------------------------------------------------------

Size2 nearest_region(const LogPolarMask& mask, std::size_t row, std::size_t col) {
    if (mask.at(row, col) != 0) return {0, 0};
    const int rad = static_cast<int>(mask.radius());
    const int dr = static_cast<int>(row) - rad, dc = static_cast<int>(col) - rad;
    const std::size_t own_bin = direction_bin(mask.alpha, mask.levels_theta, dr, dc);

    double best = std::numeric_limits<double>::infinity();
    int chosen = 0;
    bool chosen_in_own_bin = false;
    for (std::size_t r = 0; r < mask.size; ++r)
        for (std::size_t c = 0; c < mask.size; ++c) {
            const int k = mask.at(r, c);
            if (k <= 0) continue;
            const double d = squared_distance(mask.alpha, mask.eccentricity, static_cast<int>(r) - static_cast<int>(row),
                                              static_cast<int>(c) - static_cast<int>(col));
            const bool own = static_cast<std::size_t>((k - 1) % static_cast<int>(mask.levels_theta)) + 1 == own_bin;
            if (d < best || (d == best && own && !chosen_in_own_bin)) {
                best = d;
                chosen = k;
                chosen_in_own_bin = own;
            }
        }
    if (chosen == 0) return {0, 0};
    const auto k = static_cast<std::size_t>(chosen - 1);
    return {k / mask.levels_theta + 1, k % mask.levels_theta + 1};
}

KernelImage visualize_kernel(const LpscWeights& weights, const LogPolarMask& mask, bool fill_corners,
                             std::size_t in_channel, std::size_t out_channel) {
    if (weights.levels_r() != mask.levels_r || weights.levels_theta() != mask.levels_theta)
        throw ValidationError("visualize_kernel: weights and mask disagree on the region layout");
    if (in_channel >= weights.in_channels() || out_channel >= weights.out_channels())
        throw ValidationError("visualize_kernel: channel pair out of range");
    KernelImage img{mask.size, std::vector<double>(mask.size * mask.size, 0.0),
                    std::vector<bool>(mask.size * mask.size, false)};
    for (std::size_t r = 0; r < mask.size; ++r)
        for (std::size_t c = 0; c < mask.size; ++c) {
            const int k = mask.at(r, c);
            const std::size_t i = r * mask.size + c;
            if (k == -1) {
                img.values[i] = weights.center[in_channel * weights.out_channels() + out_channel];
                img.painted[i] = true;
            } else if (k > 0) {
                const auto kk = static_cast<std::size_t>(k - 1);
                img.values[i] = weights.region(kk / mask.levels_theta + 1, kk % mask.levels_theta + 1, in_channel,
                                               out_channel);
                img.painted[i] = true;
            } else if (fill_corners) {
                const Size2 reg = nearest_region(mask, r, c);
                if (reg.rows == 0) continue;
                img.values[i] = weights.region(reg.rows, reg.cols, in_channel, out_channel);
                img.painted[i] = true;
            }
        }
    return img;
}

std::vector<KernelImage> visualize_kernels(const LpscWeights& weights, const LogPolarMask& mask, bool fill_corners) {
    std::vector<KernelImage> out;
    for (std::size_t ci = 0; ci < weights.in_channels(); ++ci)
        for (std::size_t co = 0; co < weights.out_channels(); ++co)
            out.push_back(visualize_kernel(weights, mask, fill_corners, ci, co));
    return out;
}

namespace {

std::pair<double, double> painted_range(const std::vector<const KernelImage*>& images) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* img : images)
        for (std::size_t i = 0; i < img->values.size(); ++i)
            if (img->painted[i]) {
                lo = std::min(lo, img->values[i]);
                hi = std::max(hi, img->values[i]);
            }
    return {lo, hi};
}

std::uint8_t scale_level(double v, double lo, double hi) {
    if (!(hi > lo)) return 143;
    return static_cast<std::uint8_t>(std::lround(32.0 + 223.0 * (v - lo) / (hi - lo)));
}

}  // namespace

GrayImage render_kernel(const KernelImage& image) {
    const auto [lo, hi] = painted_range({&image});
    GrayImage out{image.size, image.size, std::vector<std::uint8_t>(image.values.size(), 0)};
    for (std::size_t i = 0; i < image.values.size(); ++i)
        if (image.painted[i]) out.pixels[i] = scale_level(image.values[i], lo, hi);
    return out;
}

ColorImage render_kernel_rgb(const KernelImage& red, const KernelImage& green, const KernelImage& blue) {
    if (red.size != green.size || red.size != blue.size)
        throw ValidationError("render_kernel_rgb: kernel sizes differ");
    const auto [lo, hi] = painted_range({&red, &green, &blue});
    ColorImage out{red.size, red.size, std::vector<std::uint8_t>(red.values.size() * 3, 0)};
    const KernelImage* planes[3] = {&red, &green, &blue};
    for (std::size_t i = 0; i < red.values.size(); ++i) {
        if (!red.painted[i]) {
            out.rgb[i * 3] = 255;
            out.rgb[i * 3 + 1] = 0;
            out.rgb[i * 3 + 2] = 255;
            continue;
        }
        for (int p = 0; p < 3; ++p) out.rgb[i * 3 + p] = scale_level(planes[p]->values[i], lo, hi);
    }
    return out;
}

GrayImage render_rf(const RfReport& report) {
    const std::size_t h = report.gradient.dim(0), w = report.gradient.dim(1);
    const double m = max_abs(report.gradient);
    GrayImage out{h, w, std::vector<std::uint8_t>(h * w, 0)};
    if (m > 0.0)
        for (std::size_t i = 0; i < h * w; ++i)
            out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * report.gradient[i] / m));
    return out;
}

GrayImage upscale(const GrayImage& image, std::size_t factor) {
    GrayImage out{image.rows * factor, image.cols * factor, {}};
    out.pixels.resize(out.rows * out.cols);
    for (std::size_t r = 0; r < out.rows; ++r)
        for (std::size_t c = 0; c < out.cols; ++c)
            out.pixels[r * out.cols + c] = image.pixels[(r / factor) * image.cols + c / factor];
    return out;
}

ColorImage upscale(const ColorImage& image, std::size_t factor) {
    ColorImage out{image.rows * factor, image.cols * factor, {}};
    out.rgb.resize(out.rows * out.cols * 3);
    for (std::size_t r = 0; r < out.rows; ++r)
        for (std::size_t c = 0; c < out.cols; ++c)
            for (int p = 0; p < 3; ++p)
                out.rgb[(r * out.cols + c) * 3 + p] = image.rgb[((r / factor) * image.cols + c / factor) * 3 + p];
    return out;
}

void write_pgm(const std::string& path, const GrayImage& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << "P5\n" << image.cols << ' ' << image.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw FormatError("failed writing '" + path + "'");
}

void write_ppm(const std::string& path, const ColorImage& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << "P6\n" << image.cols << ' ' << image.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw FormatError("failed writing '" + path + "'");
}

}  // namespace lpsc
