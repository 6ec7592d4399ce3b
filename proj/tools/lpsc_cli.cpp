// lpsc: command-line front end.
//
//   lpsc mask     --size 5 --lr 2 --lt 8 --g 2 [--alpha A --e E] [--out DIR]
//   lpsc check    [--seed S] [--mode mean|sum|max|all] [--inputs N] [--weights FILE]
//   lpsc train    --net CFG --out DIR [--data edges|idx ...] [--epochs N --lr X --batch N --seed S]
//   lpsc eval     --net CFG --checkpoint DIR [--data ...]
//   lpsc erf      --net CFG [--checkpoint DIR] [--loc center|R,C] [--out DIR]
//   lpsc viz      --net CFG --checkpoint DIR --out DIR [--layer I] [--fill]
//   lpsc count    --net CFG [--input "H W C"] [--out DIR]
//   lpsc gen-data --out DIR [--n-per-class N --size S --seed S]
//
// Exit codes: 0 success, 1 invalid input, 2 runtime or numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "lpsc/analysis.hpp"
#include "lpsc/data.hpp"
#include "lpsc/geometry.hpp"
#include "lpsc/lpsc_op.hpp"
#include "lpsc/nn.hpp"

namespace fs = std::filesystem;
using namespace lpsc;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailure = 2;

// A numerical check that ran to completion but missed its tolerance.
struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path out_dir(const std::string& dir) {
    if (dir.empty()) throw ValidationError("--out is required for this command");
    fs::create_directories(dir);
    return dir;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// mask

struct MaskArgs {
    std::size_t size = 5, lr = 2, lt = 8;
    double g = 2.0, alpha = 0.0, e = 0.0;
    std::size_t scale = 16;
    std::string out;
};

int cmd_mask(const MaskArgs& a) {
    LpscConfig c;
    c.kernel_size = a.size;
    c.levels_r = a.lr;
    c.levels_theta = a.lt;
    c.growth = a.g;
    c.alpha = a.alpha;
    c.eccentricity = a.e;
    const LogPolarMask m = build_mask_elliptical(c);

    std::cout << mask_to_text(m);
    for (std::size_t l = 0; l < m.radii.size(); ++l) std::cout << (l ? " " : "") << 'R' << l + 1 << '=' << fmt(m.radii[l]);
    std::cout << '\n';
    for (std::size_t l = 1; l <= m.levels_r; ++l) {
        std::cout << "level " << l << " counts:";
        for (std::size_t d = 1; d <= m.levels_theta; ++d) std::cout << ' ' << m.count(l, d);
        std::cout << '\n';
    }
    std::cout << "in-field cells: " << m.in_field_cells() << ", parameters per channel pair: " << c.params_per_pair()
              << '\n';
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';

    if (!a.out.empty()) {
        const fs::path dir = out_dir(a.out);
        std::ofstream(dir / "mask.txt") << mask_to_text(m);
        write_pgm((dir / "mask.pgm").string(), upscale(mask_to_image(m), a.scale));
        std::cout << "wrote " << (dir / "mask.txt").string() << " and " << (dir / "mask.pgm").string() << '\n';
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// check

struct CheckArgs {
    std::uint64_t seed = 1;
    std::string mode = "all";
    std::size_t inputs = 3;
    std::string weights;
    std::size_t size = 0;
};

Tensor uniform(const Shape& shape, std::mt19937_64& rng) {
    Tensor t(shape);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : t.data()) v = d(rng);
    return t;
}

LpscWeights random_weights(std::size_t lr, std::size_t lt, std::size_t cin, std::size_t cout, bool bias,
                           std::mt19937_64& rng) {
    LpscWeights w(lr, lt, cin, cout, bias);
    w.center = uniform(w.center.shape(), rng);
    w.regions = uniform(w.regions.shape(), rng);
    if (bias) w.bias = uniform({cout}, rng);
    return w;
}

Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        x[i] = v + 1e-5;
        const double up = f(x);
        x[i] = v - 1e-5;
        const double down = f(x);
        x[i] = v;
        g[i] = (up - down) / 2e-5;
    }
    return g;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<PoolingMode> modes_for(const std::string& mode, bool with_max) {
    if (mode == "all") {
        std::vector<PoolingMode> m{PoolingMode::Mean, PoolingMode::Sum};
        if (with_max) m.push_back(PoolingMode::Max);
        return m;
    }
    return {parse_pooling_mode(mode)};
}

int cmd_check(const CheckArgs& a) {
    std::mt19937_64 rng(a.seed);
    bool ok = true;
    const auto report = [&](const std::string& name, double err, double tol, std::size_t cases) {
        const bool pass = err <= tol;
        ok = ok && pass;
        std::cout << (pass ? "ok   " : "FAIL ") << name << ": max relative error " << sci(err) << " (tol " << sci(tol)
                  << ", " << cases << " cases)\n";
    };

    // Fast path against the direct sum.
    for (PoolingMode mode : modes_for(a.mode, true)) {
        double worst = 0.0;
        std::size_t cases = 0;
        for (std::size_t r : {2u, 3u, 5u})
            for (std::size_t lr : {1u, 2u, 3u})
                for (std::size_t lt : {4u, 6u, 8u})
                    for (double g : {2.0, 3.0})
                        for (bool center : {true, false})
                            for (std::size_t stride : {1u, 2u}) {
                                LpscConfig c;
                                c.kernel_size = 2 * r + 1;
                                c.levels_r = lr;
                                c.levels_theta = lt;
                                c.growth = g;
                                c.pooling = mode;
                                c.center_conv = center;
                                c.stride = Size2::square(stride);
                                c.padding = Size2::square(r);
                                const LogPolarMask m = build_mask(c);
                                const LpscWeights w = random_weights(lr, lt, 3, 2, true, rng);
                                for (std::size_t i = 0; i < a.inputs; ++i) {
                                    const Tensor x = uniform({16, 16, 3}, rng);
                                    worst = std::max(worst, max_relative_error(lpsc_forward_fast(x, c, m, w),
                                                                               lpsc_forward_reference(x, c, m, w)));
                                    ++cases;
                                }
                            }
        report("equivalence (" + to_string(mode) + ")", worst, 1e-10, cases);
    }

    // Sum mode against mean mode with N-scaled weights.
    if (a.mode == "all" || a.mode == "sum") {
        double worst = 0.0;
        std::size_t cases = 0;
        for (std::size_t r : {2u, 3u, 5u})
            for (std::size_t lr : {1u, 2u, 3u})
                for (std::size_t lt : {4u, 6u, 8u}) {
                    LpscConfig c;
                    c.kernel_size = 2 * r + 1;
                    c.levels_r = lr;
                    c.levels_theta = lt;
                    c.padding = Size2::square(r);
                    c.pooling = PoolingMode::Sum;
                    const LogPolarMask m = build_mask(c);
                    const LpscWeights w = random_weights(lr, lt, 3, 2, false, rng);
                    LpscWeights scaled = w;
                    for (std::size_t l = 1; l <= lr; ++l)
                        for (std::size_t d = 1; d <= lt; ++d)
                            for (std::size_t ci = 0; ci < 3; ++ci)
                                for (std::size_t co = 0; co < 2; ++co)
                                    scaled.region(l, d, ci, co) *= static_cast<double>(std::max<std::size_t>(1, m.count(l, d)));
                    LpscConfig mean = c;
                    mean.pooling = PoolingMode::Mean;
                    const Tensor x = uniform({16, 16, 3}, rng);
                    worst = std::max(worst, max_relative_error(lpsc_forward_reference(x, c, m, w),
                                                               lpsc_forward_reference(x, mean, m, scaled)));
                    ++cases;
                }
        report("sum = mean * N", worst, 1e-12, cases);
    }

    // Gradients against central differences.
    for (PoolingMode mode : modes_for(a.mode, true)) {
        double worst = 0.0;
        std::size_t cases = 0;
        for (std::size_t stride : {1u, 2u})
            for (bool center : {true, false}) {
                LpscConfig c;
                c.kernel_size = 5;
                c.levels_r = 2;
                c.levels_theta = 6;
                c.pooling = mode;
                c.center_conv = center;
                c.stride = Size2::square(stride);
                c.padding = {2, 2};
                const LogPolarMask m = build_mask(c);
                const Tensor x = uniform({8, 8, 3}, rng);
                const LpscWeights w = random_weights(2, 6, 3, 2, true, rng);
                const Tensor probe = uniform(lpsc_forward_fast(x, c, m, w).shape(), rng);
                const LpscGrads g = lpsc_backward(x, c, m, w, probe);
                worst = std::max(worst, max_relative_error(g.input, numeric_gradient([&](const Tensor& v) {
                                                               return dot(lpsc_forward_reference(v, c, m, w), probe);
                                                           }, x)));
                worst = std::max(worst, max_relative_error(g.weights.regions, numeric_gradient([&](const Tensor& v) {
                                                               LpscWeights t = w;
                                                               t.regions = v;
                                                               return dot(lpsc_forward_reference(x, c, m, t), probe);
                                                           }, w.regions)));
                if (center)
                    worst = std::max(worst, max_relative_error(g.weights.center, numeric_gradient([&](const Tensor& v) {
                                                                   LpscWeights t = w;
                                                                   t.center = v;
                                                                   return dot(lpsc_forward_reference(x, c, m, t), probe);
                                                               }, w.center)));
                ++cases;
            }
        report("gradient (" + to_string(mode) + ")", worst, 1e-4, cases);
    }

    // A user-supplied weight file, exercised on a mask with matching levels.
    if (!a.weights.empty()) {
        const LpscWeights w = load_lpsc_weights(a.weights);
        LpscConfig c;
        c.levels_r = w.levels_r();
        c.levels_theta = w.levels_theta();
        c.kernel_size = a.size ? a.size : 7;
        c.padding = Size2::square(c.radius());
        const Tensor x = uniform({12, 12, w.in_channels()}, rng);
        report("equivalence (" + a.weights + ")",
               max_relative_error(lpsc_forward_fast(x, c, w), lpsc_forward_reference(x, c, w)), 1e-10, 1);
    }

    if (!ok) throw CheckFailed("one or more checks exceeded their tolerance");
    std::cout << "all checks passed\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// data sources shared by train / eval

struct DataArgs {
    std::string source = "edges";
    std::size_t n_per_class = 64;
    std::size_t size = 16;
    std::string images, labels;
    std::uint64_t data_seed = 0;   // 0: use --seed
};

void add_data_flags(CLI::App* cmd, DataArgs& d) {
    cmd->add_option("--data", d.source, "edges (synthetic) or idx")->check(CLI::IsMember({"edges", "idx"}));
    cmd->add_option("--n-per-class", d.n_per_class, "synthetic samples per class");
    cmd->add_option("--size", d.size, "synthetic image side");
    cmd->add_option("--data-seed", d.data_seed, "synthetic data seed (default: --seed)");
    cmd->add_option("--images", d.images, "IDX image file");
    cmd->add_option("--labels", d.labels, "IDX label file");
}

Dataset load_data(const DataArgs& d, std::uint64_t seed) {
    if (d.source == "edges") return make_oriented_edges(d.n_per_class, d.size, d.data_seed ? d.data_seed : seed);
    if (d.images.empty() || d.labels.empty()) throw ValidationError("--data idx needs --images and --labels");
    return load_idx(d.images, d.labels);
}

// First `count` samples, and the rest.
std::pair<Dataset, Dataset> split(const Dataset& d, std::size_t count) {
    const Shape s = d.sample_shape();
    const auto take = [&](std::size_t from, std::size_t n) {
        Dataset out;
        out.classes = d.classes;
        out.images = Tensor({n, s[0], s[1], s[2]});
        for (std::size_t i = 0; i < n; ++i) {
            out.images.set_slice(i, d.images.slice(from + i));
            out.labels.push_back(d.labels[from + i]);
        }
        return out;
    };
    return {take(0, count), take(count, d.size() - count)};
}

// ---------------------------------------------------------------------------
// train / eval

struct TrainArgs {
    std::string net, out;
    DataArgs data;
    std::optional<std::size_t> epochs, batch;
    std::optional<double> lr, momentum, weight_decay;
    std::optional<std::uint64_t> seed;
    double val_ratio = 0.0;
};

int cmd_train(const TrainArgs& a) {
    NetConfigFile cfg = load_net_config(a.net);
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.batch) cfg.train.batch_size = *a.batch;
    if (a.lr) cfg.train.learning_rate = *a.lr;
    if (a.momentum) cfg.train.momentum = *a.momentum;
    if (a.weight_decay) cfg.train.weight_decay = *a.weight_decay;
    if (a.seed) cfg.train.seed = *a.seed;
    cfg.train.validate();
    if (a.val_ratio < 0.0 || a.val_ratio >= 1.0) throw ValidationError("--val-ratio must lie in [0, 1)");
    const fs::path dir = out_dir(a.out);

    const Dataset all = load_data(a.data, cfg.train.seed);
    const std::size_t n_val = static_cast<std::size_t>(a.val_ratio * static_cast<double>(all.size()));
    const auto [train_set, val_set] = split(all, all.size() - n_val);

    Network net(cfg.net, cfg.train.seed);
    const auto history = train(net, train_set, cfg.train, n_val ? &val_set : nullptr);
    std::ofstream csv(dir / "history.csv");
    write_history_csv(csv, history);
    save_checkpoint(net, (dir / "checkpoint").string());

    const EpochStats& last = history.back();
    std::cout << "epochs " << history.size() << ", parameters " << net.parameter_count() << '\n'
              << "final loss " << fmt(last.loss) << ", train accuracy " << fmt(last.train_accuracy);
    if (last.val_accuracy >= 0.0) std::cout << ", validation accuracy " << fmt(last.val_accuracy);
    std::cout << "\nwrote " << (dir / "history.csv").string() << " and " << (dir / "checkpoint").string() << '\n';
    return kOk;
}

struct EvalArgs {
    std::string net, checkpoint, out;
    DataArgs data;
    std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
    const NetConfigFile cfg = load_net_config(a.net);
    Network net(cfg.net, 0);
    load_checkpoint(net, a.checkpoint);
    const Dataset d = load_data(a.data, a.seed);
    const Evaluation ev = evaluate(net, d);
    std::cout << "samples " << d.size() << ", loss " << fmt(ev.loss) << ", accuracy " << fmt(ev.accuracy) << '\n';
    if (!a.out.empty()) {
        std::ofstream(out_dir(a.out) / "eval.csv") << "samples,loss,accuracy\n"
                                                   << d.size() << ',' << ev.loss << ',' << ev.accuracy << '\n';
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// erf / viz / count

struct ErfArgs {
    std::string net, checkpoint, loc = "center", out;
    std::uint64_t seed = 7;
    std::size_t scale = 8;
};

int cmd_erf(const ErfArgs& a) {
    const NetConfigFile cfg = load_net_config(a.net);
    Network net(cfg.net, 1);
    if (!a.checkpoint.empty()) load_checkpoint(net, a.checkpoint);
    Size2 loc = center_location(net);
    if (a.loc != "center") {
        const auto comma = a.loc.find(',');
        if (comma == std::string::npos) throw ValidationError("--loc must be 'center' or ROW,COL");
        try {
            loc = {std::stoul(a.loc.substr(0, comma)), std::stoul(a.loc.substr(comma + 1))};
        } catch (const std::logic_error&) {
            throw ValidationError("--loc must be 'center' or ROW,COL, got '" + a.loc + "'");
        }
    }
    const RfReport rf = estimate_rf(net, loc, a.seed);
    std::cout << "location " << loc.rows << ',' << loc.cols << '\n'
              << "support " << rf.height() << 'x' << rf.width() << '\n'
              << "cells " << rf.support_cells << '\n'
              << "bbox rows " << rf.top << ".." << rf.bottom << " cols " << rf.left << ".." << rf.right << '\n';
    if (!a.out.empty()) {
        const fs::path dir = out_dir(a.out);
        write_pgm((dir / "rf.pgm").string(), upscale(render_rf(rf), a.scale));
        std::cout << "wrote " << (dir / "rf.pgm").string() << '\n';
    }
    return kOk;
}

struct VizArgs {
    std::string net, checkpoint, out;
    std::optional<std::size_t> layer;
    bool fill = false;
    std::size_t scale = 16;
};

int cmd_viz(const VizArgs& a) {
    const NetConfigFile cfg = load_net_config(a.net);
    Network net(cfg.net, 1);
    if (!a.checkpoint.empty()) load_checkpoint(net, a.checkpoint);
    const fs::path dir = out_dir(a.out);

    std::size_t written = 0;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (net.layer(i).kind() != LayerKind::Lpsc || (a.layer && *a.layer != i)) continue;
        const LpscConfig& c = cfg.net.layers[i].lpsc;
        const auto& p = net.layer(i).params();
        LpscWeights w;
        w.center = p[0];
        w.regions = p[1];
        const LogPolarMask m = build_mask(c);
        const auto kernels = visualize_kernels(w, m, a.fill);
        const std::size_t cin = w.in_channels(), cout = w.out_channels();
        const std::string stem = "layer" + std::to_string(i);
        for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t co = 0; co < cout; ++co) {
                write_pgm((dir / (stem + "_in" + std::to_string(ci) + "_out" + std::to_string(co) + ".pgm")).string(),
                          upscale(render_kernel(kernels[ci * cout + co]), a.scale));
                ++written;
            }
        if (cin == 3)
            for (std::size_t co = 0; co < cout; ++co) {
                write_ppm((dir / (stem + "_out" + std::to_string(co) + ".ppm")).string(),
                          upscale(render_kernel_rgb(kernels[co], kernels[cout + co], kernels[2 * cout + co]), a.scale));
                ++written;
            }
    }
    if (written == 0) throw ValidationError(a.layer ? "layer " + std::to_string(*a.layer) + " is not an lpsc layer"
                                                    : "network has no lpsc layer");
    std::cout << "wrote " << written << " images to " << dir.string() << '\n';
    return kOk;
}

struct CountArgs {
    std::string net, input, out;
};

int cmd_count(const CountArgs& a) {
    const NetConfigFile cfg = load_net_config(a.net);
    Shape in = cfg.net.input_shape;
    if (!a.input.empty()) {
        std::istringstream s(a.input);
        in.clear();
        std::size_t v = 0;
        while (s >> v) in.push_back(v);
        if (in.size() != 3 || !s.eof()) throw ValidationError("--input must be \"H W C\"");
    }
    const CostReport r = count_costs(cfg.net, in);
    write_cost_table(std::cout, r);
    if (!a.out.empty()) {
        const fs::path dir = out_dir(a.out);
        std::ofstream csv(dir / "costs.csv");
        write_cost_csv(csv, r);
        std::cout << "wrote " << (dir / "costs.csv").string() << '\n';
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
    std::size_t n_per_class = 64, size = 16;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_gen_data(const GenArgs& a) {
    const fs::path dir = out_dir(a.out);
    const Dataset d = make_oriented_edges(a.n_per_class, a.size, a.seed);
    write_idx((dir / "images.idx").string(), (dir / "labels.idx").string(), to_idx(d));
    std::cout << "wrote " << d.size() << " samples of " << a.size << 'x' << a.size << " to " << dir.string() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Log-polar space convolution toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::function<int()> run;

    MaskArgs mask;
    auto* m = app.add_subcommand("mask", "Print the log-polar region grid of a kernel");
    m->add_option("--size", mask.size, "kernel size 2R+1 (odd)");
    m->add_option("--lr", mask.lr, "distance levels L_r");
    m->add_option("--lt", mask.lt, "direction levels L_theta (even)");
    m->add_option("--g", mask.g, "radius growth ratio (> 1)");
    m->add_option("--alpha", mask.alpha, "initial angle in radians");
    m->add_option("--e", mask.e, "eccentricity in [0, 1)");
    m->add_option("--scale", mask.scale, "PGM upscaling factor")->check(CLI::PositiveNumber);
    m->add_option("--out", mask.out, "also write mask.txt and mask.pgm here");
    m->callback([&] { run = [&] { return cmd_mask(mask); }; });

    CheckArgs check;
    auto* c = app.add_subcommand("check", "Run the fast/reference equivalence and gradient checks");
    c->add_option("--seed", check.seed, "random seed");
    c->add_option("--mode", check.mode, "pooling mode to check")->check(CLI::IsMember({"all", "mean", "sum", "max"}));
    c->add_option("--inputs", check.inputs, "random inputs per configuration")->check(CLI::PositiveNumber);
    c->add_option("--weights", check.weights, "LPSCW weight file to exercise as well");
    c->add_option("--size", check.size, "kernel size used with --weights (default 7)");
    c->callback([&] { run = [&] { return cmd_check(check); }; });

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a network from a config file");
    t->add_option("--net", tr.net, "network config file")->required();
    t->add_option("--out", tr.out, "output directory for history.csv and checkpoint/")->required();
    t->add_option("--epochs", tr.epochs, "override epochs");
    t->add_option("--batch", tr.batch, "override batch size");
    t->add_option("--lr", tr.lr, "override learning rate");
    t->add_option("--momentum", tr.momentum, "override momentum");
    t->add_option("--weight-decay", tr.weight_decay, "override weight decay");
    t->add_option("--seed", tr.seed, "override the run seed");
    t->add_option("--val-ratio", tr.val_ratio, "fraction of samples held out (taken from the end)");
    add_data_flags(t, tr.data);
    t->callback([&] { run = [&] { return cmd_train(tr); }; });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("--net", ev.net, "network config file")->required();
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required();
    e->add_option("--seed", ev.seed, "synthetic data seed");
    e->add_option("--out", ev.out, "also write eval.csv here");
    add_data_flags(e, ev.data);
    e->callback([&] { run = [&] { return cmd_eval(ev); }; });

    ErfArgs erf;
    auto* r = app.add_subcommand("erf", "Estimate the gradient receptive field of one output location");
    r->add_option("--net", erf.net, "network config file")->required();
    r->add_option("--checkpoint", erf.checkpoint, "checkpoint directory (default: seeded init)");
    r->add_option("--loc", erf.loc, "'center' or ROW,COL");
    r->add_option("--seed", erf.seed, "random input seed");
    r->add_option("--scale", erf.scale, "PGM upscaling factor")->check(CLI::PositiveNumber);
    r->add_option("--out", erf.out, "also write rf.pgm here");
    r->callback([&] { run = [&] { return cmd_erf(erf); }; });

    VizArgs viz;
    auto* v = app.add_subcommand("viz", "Render LPSC kernels as images");
    v->add_option("--net", viz.net, "network config file")->required();
    v->add_option("--checkpoint", viz.checkpoint, "checkpoint directory (default: seeded init)");
    v->add_option("--out", viz.out, "output directory")->required();
    v->add_option("--layer", viz.layer, "only this layer index");
    v->add_flag("--fill", viz.fill, "fill corners with the nearest region's weight");
    v->add_option("--scale", viz.scale, "upscaling factor")->check(CLI::PositiveNumber);
    v->callback([&] { run = [&] { return cmd_viz(viz); }; });

    CountArgs count;
    auto* k = app.add_subcommand("count", "Report per-layer parameter and operation counts");
    k->add_option("--net", count.net, "network config file")->required();
    k->add_option("--input", count.input, "override input shape \"H W C\"");
    k->add_option("--out", count.out, "also write costs.csv here");
    k->callback([&] { run = [&] { return cmd_count(count); }; });

    GenArgs gen;
    auto* gd = app.add_subcommand("gen-data", "Write the oriented-edges dataset as IDX files");
    gd->add_option("--n-per-class", gen.n_per_class, "samples per class");
    gd->add_option("--size", gen.size, "image side");
    gd->add_option("--seed", gen.seed, "random seed");
    gd->add_option("--out", gen.out, "output directory")->required();
    gd->callback([&] { run = [&] { return cmd_gen_data(gen); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kInvalid;
    }

    try {
        return run();
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kInvalid;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kFailure;
    }
}
