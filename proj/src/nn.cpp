#include "lpsc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace lpsc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

void require_spatial(const Shape& in, const char* what) {
    require(in.size() == 3, std::string(what) + " needs a rank-3 (H, W, C) input, got " + shape_str(in));
}

void init_uniform(Tensor& t, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.data()) v = dist(rng);
}

std::optional<Tensor> optional_bias(const std::vector<Tensor>& params, std::size_t index) {
    if (params.size() > index) return params[index];
    return std::nullopt;
}

// conv / dilated / square_share share everything but the kernel expansion.
class ConvLikeLayer : public Layer {
public:
    ConvLikeLayer(const LayerSpec& spec, const Shape& in, std::mt19937_64& rng) : spec_(spec) {
        const char* what = spec.kind == LayerKind::Conv      ? "conv"
                           : spec.kind == LayerKind::Dilated ? "dilated"
                                                             : "square_share";
        require_spatial(in, what);
        require(spec.out_channels >= 1, std::string(what) + " needs out >= 1");
        require(spec.kernel_size % 2 == 1, std::string(what) + " kernel size must be odd");
        const std::size_t cin = in[2], cout = spec.out_channels;
        std::size_t grid = spec.kernel_size, extent = spec.kernel_size;
        if (spec.kind == LayerKind::Dilated) {
            dilated_ = DilatedConfig{spec.kernel_size, spec.dilation, spec.stride, spec.padding};
            dilated_.validate();
            extent = dilated_.extent();
        } else if (spec.kind == LayerKind::SquareShare) {
            square_ = SquareShareConfig{spec.kernel_size, spec.pool_size, spec.stride, spec.padding};
            square_.validate();
            grid = square_.grid();
        }
        input_shape_ = in;
        output_shape_ = {conv_out_extent(in[0], spec.padding.rows, extent, spec.stride.rows),
                         conv_out_extent(in[1], spec.padding.cols, extent, spec.stride.cols), cout};
        Tensor w({grid, grid, cin, cout});
        init_uniform(w, static_cast<double>(grid * grid * cin), static_cast<double>(grid * grid * cout), rng);
        params_.push_back(std::move(w));
        if (spec.bias) params_.emplace_back(Shape{cout});
    }

    LayerKind kind() const override { return spec_.kind; }

    Tensor forward(const Tensor& x) const override {
        const ConvKernel k(params_[0], optional_bias(params_, 1));
        switch (spec_.kind) {
            case LayerKind::Dilated: return dilated_conv2d(x, k, dilated_);
            case LayerKind::SquareShare: return square_share_conv2d(x, k, square_);
            default: return conv2d(x, k, spec_.stride, spec_.padding);
        }
    }

    Tensor backward(const Tensor& x, const Tensor& grad_output, std::vector<Tensor>& param_grads) const override {
        const ConvKernel k(params_[0], optional_bias(params_, 1));
        ConvGrads g = spec_.kind == LayerKind::Dilated       ? dilated_conv2d_backward(x, k, grad_output, dilated_)
                      : spec_.kind == LayerKind::SquareShare ? square_share_conv2d_backward(x, k, grad_output, square_)
                                                             : conv2d_backward(x, k, grad_output, spec_.stride,
                                                                               spec_.padding);
        param_grads[0] += g.weights;
        if (g.bias) param_grads[1] += *g.bias;
        return std::move(g.input);
    }

private:
    LayerSpec spec_;
    DilatedConfig dilated_;
    SquareShareConfig square_;
};

class LpscLayer : public Layer {
public:
    LpscLayer(const LayerSpec& spec, const Shape& in, std::mt19937_64& rng)
        : config_(spec.lpsc), mask_(build_mask(spec.lpsc)) {
        require_spatial(in, "lpsc");
        require(spec.out_channels >= 1, "lpsc needs out >= 1");
        const std::size_t cin = in[2], cout = spec.out_channels;
        input_shape_ = in;
        const Size2 ext = lpsc_output_extent(config_, in[0], in[1]);
        output_shape_ = {ext.rows, ext.cols, cout};
        const auto per_pair = static_cast<double>(config_.params_per_pair());
        LpscWeights w(config_.levels_r, config_.levels_theta, cin, cout, spec.bias);
        init_uniform(w.center, per_pair * static_cast<double>(cin), per_pair * static_cast<double>(cout), rng);
        init_uniform(w.regions, per_pair * static_cast<double>(cin), per_pair * static_cast<double>(cout), rng);
        params_.push_back(std::move(w.center));
        params_.push_back(std::move(w.regions));
        if (w.bias) params_.push_back(std::move(*w.bias));
    }

    LayerKind kind() const override { return LayerKind::Lpsc; }

    LpscWeights weights() const {
        LpscWeights w;
        w.center = params_[0];
        w.regions = params_[1];
        w.bias = optional_bias(params_, 2);
        return w;
    }

    Tensor forward(const Tensor& x) const override { return lpsc_forward_fast(x, config_, mask_, weights()); }

    Tensor backward(const Tensor& x, const Tensor& grad_output, std::vector<Tensor>& param_grads) const override {
        LpscGrads g = lpsc_backward(x, config_, mask_, weights(), grad_output);
        param_grads[0] += g.weights.center;
        param_grads[1] += g.weights.regions;
        if (g.weights.bias) param_grads[2] += *g.weights.bias;
        return std::move(g.input);
    }

private:
    LpscConfig config_;
    LogPolarMask mask_;
};

class ReluLayer : public Layer {
public:
    explicit ReluLayer(const Shape& in) {
        input_shape_ = in;
        output_shape_ = in;
    }
    LayerKind kind() const override { return LayerKind::Relu; }
    Tensor forward(const Tensor& x) const override { return relu(x); }
    Tensor backward(const Tensor& x, const Tensor& g, std::vector<Tensor>&) const override {
        return relu_backward(x, g);
    }
};

class PoolLayer : public Layer {
public:
    PoolLayer(LayerKind kind, std::size_t window, const Shape& in) : kind_(kind), window_(Size2::square(window)) {
        require_spatial(in, kind == LayerKind::MaxPool ? "maxpool" : "meanpool");
        require(window >= 1 && in[0] >= window && in[1] >= window,
                "pool window " + std::to_string(window) + " does not fit input " + shape_str(in));
        input_shape_ = in;
        output_shape_ = {conv_out_extent(in[0], 0, window, window), conv_out_extent(in[1], 0, window, window), in[2]};
    }
    LayerKind kind() const override { return kind_; }
    Tensor forward(const Tensor& x) const override {
        return kind_ == LayerKind::MaxPool ? max_pool2d(x, window_, window_) : mean_pool2d(x, window_, window_);
    }
    Tensor backward(const Tensor& x, const Tensor& g, std::vector<Tensor>&) const override {
        return kind_ == LayerKind::MaxPool ? max_pool2d_backward(x, g, window_, window_)
                                           : mean_pool2d_backward(x, g, window_, window_);
    }

private:
    LayerKind kind_;
    Size2 window_;
};

class FlattenLayer : public Layer {
public:
    explicit FlattenLayer(const Shape& in) {
        input_shape_ = in;
        output_shape_ = {std::accumulate(in.begin(), in.end(), std::size_t{1}, std::multiplies<>())};
    }
    LayerKind kind() const override { return LayerKind::Flatten; }
    Tensor forward(const Tensor& x) const override { return x.reshaped(output_shape_); }
    Tensor backward(const Tensor&, const Tensor& g, std::vector<Tensor>&) const override {
        return g.reshaped(input_shape_);
    }
};

class DenseLayer : public Layer {
public:
    DenseLayer(const LayerSpec& spec, const Shape& in, std::mt19937_64& rng) {
        require(in.size() == 1, "dense needs a flat input; add a flatten layer before it (got " + shape_str(in) + ")");
        require(spec.out_channels >= 1, "dense needs units >= 1");
        require(spec.in_features == 0 || spec.in_features == in[0],
                "dense expects " + std::to_string(spec.in_features) + " input features but receives " +
                    std::to_string(in[0]));
        input_shape_ = in;
        output_shape_ = {spec.out_channels};
        Tensor w({in[0], spec.out_channels});
        init_uniform(w, static_cast<double>(in[0]), static_cast<double>(spec.out_channels), rng);
        params_.push_back(std::move(w));
        params_.emplace_back(Shape{spec.out_channels});
    }
    LayerKind kind() const override { return LayerKind::Dense; }
    Tensor forward(const Tensor& x) const override { return dense(x, params_[0], &params_[1]); }
    Tensor backward(const Tensor& x, const Tensor& g, std::vector<Tensor>& param_grads) const override {
        DenseGrads d = dense_backward(x, params_[0], g);
        param_grads[0] += d.weights;
        param_grads[1] += d.bias;
        return std::move(d.input);
    }
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, std::mt19937_64& rng) {
    switch (spec.kind) {
        case LayerKind::Conv:
        case LayerKind::Dilated:
        case LayerKind::SquareShare: return std::make_unique<ConvLikeLayer>(spec, in, rng);
        case LayerKind::Lpsc: return std::make_unique<LpscLayer>(spec, in, rng);
        case LayerKind::Relu: return std::make_unique<ReluLayer>(in);
        case LayerKind::MaxPool:
        case LayerKind::MeanPool: return std::make_unique<PoolLayer>(spec.kind, spec.window, in);
        case LayerKind::Flatten: return std::make_unique<FlattenLayer>(in);
        case LayerKind::Dense: return std::make_unique<DenseLayer>(spec, in, rng);
    }
    throw ValidationError("unknown layer kind");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Lpsc: return "lpsc";
        case LayerKind::Dilated: return "dilated";
        case LayerKind::SquareShare: return "square_share";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::MeanPool: return "meanpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
    static const std::map<std::string, LayerKind> kinds{
        {"conv", LayerKind::Conv},         {"lpsc", LayerKind::Lpsc},       {"dilated", LayerKind::Dilated},
        {"square_share", LayerKind::SquareShare}, {"relu", LayerKind::Relu}, {"maxpool", LayerKind::MaxPool},
        {"meanpool", LayerKind::MeanPool}, {"flatten", LayerKind::Flatten}, {"dense", LayerKind::Dense}};
    const auto it = kinds.find(name);
    if (it == kinds.end()) throw ValidationError("unknown layer type '" + name + "'");
    return it->second;
}

LayerSpec LayerSpec::conv(std::size_t out, std::size_t k, std::size_t pad, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.out_channels = out;
    s.kernel_size = k;
    s.padding = Size2::square(pad);
    s.stride = Size2::square(stride);
    return s;
}

LayerSpec LayerSpec::lpsc_layer(std::size_t out, const LpscConfig& config) {
    LayerSpec s;
    s.kind = LayerKind::Lpsc;
    s.out_channels = out;
    s.lpsc = config;
    s.kernel_size = config.kernel_size;
    s.stride = config.stride;
    s.padding = config.padding;
    return s;
}

LayerSpec LayerSpec::dilated(std::size_t out, std::size_t k, std::size_t rate, std::size_t pad) {
    LayerSpec s = conv(out, k, pad);
    s.kind = LayerKind::Dilated;
    s.dilation = rate;
    return s;
}

LayerSpec LayerSpec::square_share(std::size_t out, std::size_t k, std::size_t pool, std::size_t pad) {
    LayerSpec s = conv(out, k, pad);
    s.kind = LayerKind::SquareShare;
    s.pool_size = pool;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.out_channels = units;
    return s;
}

LayerSpec LayerSpec::simple(LayerKind kind, std::size_t window) {
    LayerSpec s;
    s.kind = kind;
    s.window = window;
    return s;
}

void TrainConfig::validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning rate must be >= 0");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, "weight decay must be >= 0");
    require(batch_size >= 1, "batch size must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
}

std::size_t Layer::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

// ---------------------------------------------------------------------------

Network::Network(NetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    require(spec_.input_shape.size() == 3, "network input shape must be (H, W, C), got " + shape_str(spec_.input_shape));
    std::mt19937_64 rng(seed);
    Shape shape = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        try {
            layers_.push_back(make_layer(spec_.layers[i], shape, rng));
        } catch (const ValidationError& e) {
            throw ValidationError("layer " + std::to_string(i) + " (" + to_string(spec_.layers[i].kind) +
                                  "): " + e.what());
        }
        shape = layers_.back()->output_shape();
    }
    if (spec_.classes > 0)
        require(shape == Shape{spec_.classes}, "network produces " + shape_str(shape) + " but " +
                                                   std::to_string(spec_.classes) + " class logits are required");
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->parameter_count();
    return n;
}

std::vector<Tensor> Network::trace(const Tensor& sample, std::size_t n_layers) const {
    require(n_layers <= layers_.size(), "trace: layer count out of range");
    require(sample.shape() == spec_.input_shape,
            "sample shape " + shape_str(sample.shape()) + " does not match network input " + shape_str(spec_.input_shape));
    std::vector<Tensor> acts;
    acts.reserve(n_layers + 1);
    acts.push_back(sample);
    for (std::size_t i = 0; i < n_layers; ++i) acts.push_back(layers_[i]->forward(acts.back()));
    return acts;
}

Tensor Network::backtrace(const std::vector<Tensor>& activations, Tensor grad, std::size_t n_layers,
                          Gradients* grads) const {
    require(activations.size() == n_layers + 1, "backtrace: trace length does not match layer count");
    Gradients scratch;
    Gradients& target = grads ? *grads : scratch;
    if (!grads) target = zero_gradients();
    for (std::size_t i = n_layers; i-- > 0;) grad = layers_[i]->backward(activations[i], grad, target[i]);
    return grad;
}

Tensor Network::predict(const Tensor& sample) const { return trace(sample, layers_.size()).back(); }

Tensor Network::forward(const Tensor& batch) {
    require(batch.rank() == 4, "forward expects a (N, H, W, C) batch");
    require(spec_.classes > 0, "forward needs a classifier network (classes > 0)");
    const std::size_t n = batch.dim(0);
    traces_.clear();
    Tensor logits({n, spec_.classes});
    for (std::size_t s = 0; s < n; ++s) {
        traces_.push_back(trace(batch.slice(s), layers_.size()));
        logits.set_slice(s, traces_.back().back());
    }
    return logits;
}

Gradients Network::backward(const Tensor& grad_logits) const {
    require(grad_logits.rank() == 2 && grad_logits.dim(0) == traces_.size() && grad_logits.dim(1) == spec_.classes,
            "backward: gradient shape " + shape_str(grad_logits.shape()) + " does not match the last forward batch");
    Gradients grads = zero_gradients();
    for (std::size_t s = 0; s < traces_.size(); ++s) backtrace(traces_[s], grad_logits.slice(s), layers_.size(), &grads);
    return grads;
}

Gradients Network::zero_gradients() const {
    Gradients g(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (const auto& p : layers_[i]->params()) g[i].emplace_back(p.shape());
    return g;
}

// ---------------------------------------------------------------------------

void SgdMomentum::step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads) {
    require(params.size() == grads.size(), "sgd: parameter and gradient counts differ");
    if (velocity_.empty())
        for (const Tensor* p : params) velocity_.emplace_back(p->shape());
    require(velocity_.size() == params.size(), "sgd: parameter set changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i];
        const Tensor& g = *grads[i];
        Tensor& v = velocity_[i];
        require(g.shape() == w.shape() && v.shape() == w.shape(), "sgd: gradient shape mismatch");
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = config_.momentum * v[j] + g[j] + config_.weight_decay * w[j];
            w[j] -= config_.learning_rate * v[j];
        }
    }
}

void SgdMomentum::step(Network& network, const Gradients& grads) {
    require(grads.size() == network.layer_count(), "sgd: gradient set does not match network");
    std::vector<Tensor*> params;
    std::vector<const Tensor*> gs;
    for (std::size_t i = 0; i < network.layer_count(); ++i) {
        auto& lp = network.layer(i).params();
        require(grads[i].size() == lp.size(), "sgd: gradient set does not match layer " + std::to_string(i));
        for (std::size_t j = 0; j < lp.size(); ++j) {
            params.push_back(&lp[j]);
            gs.push_back(&grads[i][j]);
        }
    }
    step(std::move(params), gs);
}

Evaluation evaluate(const Network& network, const Dataset& data) {
    data.validate();
    const std::size_t k = network.spec().classes;
    require(k == data.classes || (k >= data.classes && k > 0),
            "dataset has " + std::to_string(data.classes) + " classes but network emits " + std::to_string(k));
    Evaluation ev;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const Tensor logits = network.predict(data.images.slice(s));
        const std::size_t label = data.labels[s];
        const LossResult lr = softmax_cross_entropy(logits, std::span<const std::size_t>(&label, 1));
        ev.loss += lr.loss;
        const auto best = static_cast<std::size_t>(
            std::max_element(logits.data().begin(), logits.data().end()) - logits.data().begin());
        if (best == label) ++correct;
    }
    ev.loss /= static_cast<double>(data.size());
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return ev;
}

std::vector<EpochStats> train(Network& network, const Dataset& data, const TrainConfig& config,
                              const Dataset* validation) {
    config.validate();
    data.validate();
    require(data.sample_shape() == network.spec().input_shape,
            "dataset samples " + shape_str(data.sample_shape()) + " do not match network input " +
                shape_str(network.spec().input_shape));
    require(network.spec().classes >= data.classes, "network has fewer logits than the dataset has classes");

    std::mt19937_64 rng(config.seed);
    SgdMomentum opt(config);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Shape sample = data.sample_shape();

    std::vector<EpochStats> history;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, order.size() - start);
            Tensor batch({b, sample[0], sample[1], sample[2]});
            std::vector<std::size_t> labels(b);
            for (std::size_t s = 0; s < b; ++s) {
                batch.set_slice(s, data.images.slice(order[start + s]));
                labels[s] = data.labels[order[start + s]];
            }
            const Tensor logits = network.forward(batch);
            const LossResult loss = softmax_cross_entropy(logits, labels);
            opt.step(network, network.backward(loss.grad));
        }
        const Evaluation ev = evaluate(network, data);
        EpochStats st{epoch, ev.loss, ev.accuracy, -1.0};
        if (validation) st.val_accuracy = evaluate(network, *validation).accuracy;
        history.push_back(st);
    }
    return history;
}

void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history) {
    const bool with_val = !history.empty() && history.front().val_accuracy >= 0.0;
    out << "epoch,loss,train_acc" << (with_val ? ",val_acc" : "") << '\n';
    for (const auto& h : history) {
        std::ostringstream row;
        row.precision(17);
        row << h.epoch << ',' << h.loss << ',' << h.train_accuracy;
        if (with_val) row << ',' << h.val_accuracy;
        out << row.str() << '\n';
    }
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Section {
    std::string name;
    std::size_t line = 0;
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<std::size_t> lines;
};

class KeyReader {
public:
    KeyReader(const Section& s, std::string where) : section_(s), where_(std::move(where)) {}

    bool has(const std::string& key) const { return find(key) != nullptr; }

    std::string str(const std::string& key, const std::string& def) {
        const auto* v = find(key);
        return v ? *v : def;
    }
    std::size_t uint(const std::string& key, std::size_t def) {
        const auto* v = find(key);
        return v ? parse_uint(*v, key) : def;
    }
    double real(const std::string& key, double def) {
        const auto* v = find(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const double d = std::stod(*v, &used);
            if (used != v->size() || !std::isfinite(d)) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            throw ValidationError(where_ + ": key '" + key + "' expects a number, got '" + *v + "'");
        }
    }
    bool boolean(const std::string& key, bool def) {
        const auto* v = find(key);
        if (!v) return def;
        if (*v == "true" || *v == "1" || *v == "on") return true;
        if (*v == "false" || *v == "0" || *v == "off") return false;
        throw ValidationError(where_ + ": key '" + key + "' expects true/false, got '" + *v + "'");
    }
    Size2 pair(const std::string& key, Size2 def) {
        const auto* v = find(key);
        if (!v) return def;
        std::istringstream is(*v);
        std::string a, b, extra;
        is >> a >> b >> extra;
        if (a.empty() || !extra.empty()) throw ValidationError(where_ + ": key '" + key + "' expects 1 or 2 integers");
        const std::size_t r = parse_uint(a, key);
        return {r, b.empty() ? r : parse_uint(b, key)};
    }
    std::vector<std::size_t> list(const std::string& key) {
        const auto* v = find(key);
        std::vector<std::size_t> out;
        if (!v) return out;
        std::istringstream is(*v);
        std::string tok;
        while (is >> tok) out.push_back(parse_uint(tok, key));
        return out;
    }
    void reject_unused() const {
        for (const auto& [k, v] : section_.entries)
            if (!used_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
    }

private:
    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : section_.entries)
            if (k == key) {
                used_.insert(k);
                return &v;
            }
        return nullptr;
    }
    std::size_t parse_uint(const std::string& v, const std::string& key) const {
        if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char ch) { return std::isdigit(ch); }))
            throw ValidationError(where_ + ": key '" + key + "' expects a non-negative integer, got '" + v + "'");
        return static_cast<std::size_t>(std::stoull(v));
    }

    const Section& section_;
    std::string where_;
    mutable std::set<std::string> used_;
};

LayerSpec parse_layer(const Section& s, const std::string& where) {
    KeyReader kr(s, where);
    if (!kr.has("type")) throw ValidationError(where + ": layer is missing 'type'");
    LayerSpec spec;
    spec.kind = parse_layer_kind(kr.str("type", ""));
    switch (spec.kind) {
        case LayerKind::Conv:
        case LayerKind::Dilated:
        case LayerKind::SquareShare:
            spec.out_channels = kr.uint("out", 0);
            spec.kernel_size = kr.uint("size", 3);
            spec.stride = kr.pair("stride", {1, 1});
            spec.padding = kr.pair("padding", {0, 0});
            spec.bias = kr.boolean("bias", true);
            if (spec.kind == LayerKind::Dilated) spec.dilation = kr.uint("dilation", 1);
            if (spec.kind == LayerKind::SquareShare) spec.pool_size = kr.uint("pool", 1);
            break;
        case LayerKind::Lpsc: {
            spec.out_channels = kr.uint("out", 0);
            LpscConfig c;
            c.kernel_size = kr.uint("size", 5);
            c.levels_r = kr.uint("lr", 2);
            c.levels_theta = kr.uint("lt", 8);
            c.growth = kr.real("g", 2.0);
            c.alpha = kr.real("alpha", 0.0);
            c.eccentricity = kr.real("e", 0.0);
            c.stride = kr.pair("stride", {1, 1});
            c.padding = kr.pair("padding", {0, 0});
            c.pooling = parse_pooling_mode(kr.str("mode", "mean"));
            c.center_conv = kr.boolean("center", true);
            const bool bias = kr.boolean("bias", true);
            c.validate();
            spec = LayerSpec::lpsc_layer(spec.out_channels, c);
            spec.bias = bias;
            break;
        }
        case LayerKind::MaxPool:
        case LayerKind::MeanPool: spec.window = kr.uint("window", 2); break;
        case LayerKind::Dense:
            spec.out_channels = kr.uint("out", 0);
            spec.in_features = kr.uint("in", 0);
            break;
        case LayerKind::Relu:
        case LayerKind::Flatten: break;
    }
    kr.reject_unused();
    return spec;
}

}  // namespace

NetConfigFile parse_net_config(std::istream& in, const std::string& source) {
    std::vector<Section> sections;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ValidationError(source + ":" + std::to_string(lineno) + ": malformed section header");
            sections.push_back({trim(line.substr(1, line.size() - 2)), lineno, {}, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError(source + ":" + std::to_string(lineno) + ": expected key = value");
        if (sections.empty()) throw ValidationError(source + ":" + std::to_string(lineno) + ": key outside any section");
        sections.back().entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        sections.back().lines.push_back(lineno);
    }

    NetConfigFile cfg;
    bool saw_net = false;
    for (const auto& s : sections) {
        const std::string where = source + ":" + std::to_string(s.line) + " [" + s.name + "]";
        if (s.name == "net") {
            KeyReader kr(s, where);
            cfg.net.input_shape = kr.list("input");
            if (cfg.net.input_shape.size() != 3) throw ValidationError(where + ": 'input' must list H W C");
            cfg.net.classes = kr.uint("classes", 0);
            kr.reject_unused();
            saw_net = true;
        } else if (s.name == "layer") {
            cfg.net.layers.push_back(parse_layer(s, where));
        } else if (s.name == "train") {
            KeyReader kr(s, where);
            cfg.train.learning_rate = kr.real("learning_rate", cfg.train.learning_rate);
            cfg.train.momentum = kr.real("momentum", cfg.train.momentum);
            cfg.train.weight_decay = kr.real("weight_decay", cfg.train.weight_decay);
            cfg.train.batch_size = kr.uint("batch_size", cfg.train.batch_size);
            cfg.train.epochs = kr.uint("epochs", cfg.train.epochs);
            cfg.train.seed = kr.uint("seed", cfg.train.seed);
            kr.reject_unused();
            cfg.train.validate();
        } else {
            throw ValidationError(where + ": unknown section");
        }
    }
    if (!saw_net) throw ValidationError(source + ": missing [net] section");
    return cfg;
}

NetConfigFile load_net_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return parse_net_config(in, path);
}

// ---------------------------------------------------------------------------

namespace fs = std::filesystem;

void save_checkpoint(const Network& network, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw FormatError("cannot write manifest in '" + dir + "'");
    manifest << "LPSCNET v1 " << network.layer_count() << '\n';
    for (std::size_t i = 0; i < network.layer_count(); ++i) {
        const Layer& l = network.layer(i);
        manifest << i << ' ' << to_string(l.kind());
        if (l.kind() == LayerKind::Lpsc) {
            LpscWeights w;
            w.center = l.params()[0];
            w.regions = l.params()[1];
            if (l.params().size() > 2) w.bias = l.params()[2];
            const std::string name = "layer" + std::to_string(i) + ".lpscw";
            save_lpsc_weights((fs::path(dir) / name).string(), w);
            manifest << ' ' << name;
        } else {
            for (std::size_t p = 0; p < l.params().size(); ++p) {
                const std::string name = "layer" + std::to_string(i) + "_p" + std::to_string(p) + ".tnsr";
                save_tensor((fs::path(dir) / name).string(), l.params()[p]);
                manifest << ' ' << name;
            }
        }
        manifest << '\n';
    }
}

void load_checkpoint(Network& network, const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.txt";
    std::ifstream manifest(mpath);
    if (!manifest) throw FormatError("cannot open '" + mpath.string() + "'");
    std::string magic, version;
    std::size_t count = 0;
    if (!(manifest >> magic >> version >> count) || magic != "LPSCNET" || version != "v1")
        throw FormatError(mpath.string() + ": bad manifest header");
    if (count != network.layer_count())
        throw FormatError(mpath.string() + ": checkpoint has " + std::to_string(count) + " layers, network has " +
                          std::to_string(network.layer_count()));
    std::string line;
    std::getline(manifest, line);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(manifest, line)) throw FormatError(mpath.string() + ": truncated manifest");
        std::istringstream ls(line);
        std::size_t idx = 0;
        std::string kind;
        ls >> idx >> kind;
        Layer& l = network.layer(i);
        if (idx != i || kind != to_string(l.kind()))
            throw FormatError(mpath.string() + ": layer " + std::to_string(i) + " is '" + kind + "', network has '" +
                              to_string(l.kind()) + "'");
        std::vector<Tensor> loaded;
        std::string file;
        if (l.kind() == LayerKind::Lpsc) {
            if (!(ls >> file)) throw FormatError(mpath.string() + ": missing LPSC weight file for layer " + std::to_string(i));
            LpscWeights w = load_lpsc_weights((fs::path(dir) / file).string());
            loaded.push_back(std::move(w.center));
            loaded.push_back(std::move(w.regions));
            if (w.bias) loaded.push_back(std::move(*w.bias));
        } else {
            while (ls >> file) loaded.push_back(load_tensor((fs::path(dir) / file).string()));
        }
        if (loaded.size() != l.params().size())
            throw FormatError(mpath.string() + ": layer " + std::to_string(i) + " parameter count mismatch");
        for (std::size_t p = 0; p < loaded.size(); ++p) {
            if (loaded[p].shape() != l.params()[p].shape())
                throw FormatError(mpath.string() + ": layer " + std::to_string(i) + " parameter " + std::to_string(p) +
                                  " has shape " + shape_str(loaded[p].shape()) + ", expected " +
                                  shape_str(l.params()[p].shape()));
            l.params()[p] = std::move(loaded[p]);
        }
    }
}

}  // namespace lpsc
