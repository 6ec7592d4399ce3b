#pragma once

// Small sequential networks with hand-written backprop, SGD with momentum and
// a deterministic training loop.
//
// Samples flow through layers one at a time as rank-3 (H, W, C) tensors until
// a flatten layer turns them into rank-1 vectors for dense layers. Batches are
// (N, H, W, C); gradients are accumulated in sample-index order.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "lpsc/baselines.hpp"
#include "lpsc/data.hpp"
#include "lpsc/geometry.hpp"
#include "lpsc/lpsc_op.hpp"
#include "lpsc/tensor.hpp"

namespace lpsc {

enum class LayerKind { Conv, Lpsc, Dilated, SquareShare, Relu, MaxPool, MeanPool, Flatten, Dense };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t out_channels = 0;   // conv-like layers: output channels; dense: units
    std::size_t kernel_size = 3;    // conv, dilated, square_share
    std::size_t dilation = 1;       // dilated
    std::size_t pool_size = 1;      // square_share block side
    std::size_t window = 2;         // maxpool / meanpool (stride = window)
    std::size_t in_features = 0;    // dense: expected input size, 0 = inferred
    Size2 stride{1, 1};
    Size2 padding{0, 0};
    bool bias = true;
    LpscConfig lpsc;                // kind == Lpsc; stride/padding live here

    static LayerSpec conv(std::size_t out, std::size_t k, std::size_t pad = 0, std::size_t stride = 1);
    static LayerSpec lpsc_layer(std::size_t out, const LpscConfig& config);
    static LayerSpec dilated(std::size_t out, std::size_t k, std::size_t rate, std::size_t pad = 0);
    static LayerSpec square_share(std::size_t out, std::size_t k, std::size_t pool, std::size_t pad = 0);
    static LayerSpec dense(std::size_t units);
    static LayerSpec simple(LayerKind kind, std::size_t window = 2);
};

struct NetSpec {
    std::vector<LayerSpec> layers;
    Shape input_shape;          // (H, W, C)
    std::size_t classes = 0;    // 0: feature network, no logit check
};

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t batch_size = 16;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;

    void validate() const;
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Tensor forward(const Tensor& x) const = 0;
    /// Returns d loss / d x; adds parameter gradients into `param_grads`.
    virtual Tensor backward(const Tensor& x, const Tensor& grad_output, std::vector<Tensor>& param_grads) const = 0;

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::size_t parameter_count() const;

protected:
    Shape input_shape_;
    Shape output_shape_;
    std::vector<Tensor> params_;
};

/// Per-layer parameter gradients, mirroring Network::layer(i).params().
using Gradients = std::vector<std::vector<Tensor>>;

class Network {
public:
    /// Validates shapes layer by layer and initializes parameters
    /// uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
    Network(NetSpec spec, std::uint64_t seed);

    const NetSpec& spec() const { return spec_; }
    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }
    std::size_t parameter_count() const;

    /// Activations [x, f1(x), ..., f_n(x)] of one sample through the first n layers.
    std::vector<Tensor> trace(const Tensor& sample, std::size_t n_layers) const;
    /// Backprop through the first n layers given the trace; accumulates into grads if non-null.
    Tensor backtrace(const std::vector<Tensor>& activations, Tensor grad, std::size_t n_layers,
                     Gradients* grads) const;

    Tensor predict(const Tensor& sample) const;

    /// Logits (N, K) for a batch (N, H, W, C); keeps the per-sample traces for backward.
    Tensor forward(const Tensor& batch);
    /// Parameter gradients for d loss / d logits of the last forward batch.
    Gradients backward(const Tensor& grad_logits) const;

    Gradients zero_gradients() const;

private:
    NetSpec spec_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<std::vector<Tensor>> traces_;
};

/// SGD with momentum and L2 weight decay: v = mu v + g + lambda w; w -= lr v.
class SgdMomentum {
public:
    explicit SgdMomentum(TrainConfig config) : config_(config) {}
    void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads);
    void step(Network& network, const Gradients& grads);

private:
    TrainConfig config_;
    std::vector<Tensor> velocity_;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = -1.0;   // negative when no validation set
};

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate(const Network& network, const Dataset& data);

/// Shuffled minibatch SGD; the shuffle RNG is seeded from config.seed.
std::vector<EpochStats> train(Network& network, const Dataset& data, const TrainConfig& config,
                              const Dataset* validation = nullptr);

/// `epoch,loss,train_acc[,val_acc]` with a header line.
void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history);

// ---------------------------------------------------------------------------
// Network config files: INI-style sections
//
//   [net]    input = H W C, classes = K
//   [layer]  type = conv|lpsc|dilated|square_share|relu|maxpool|meanpool|flatten|dense plus per-kind keys
//   [train]  learning_rate, momentum, weight_decay, batch_size, epochs, seed
//
// '#' starts a comment. Unknown sections or keys are errors.

struct NetConfigFile {
    NetSpec net;
    TrainConfig train;
};

NetConfigFile parse_net_config(std::istream& in, const std::string& source = "<config>");
NetConfigFile load_net_config(const std::string& path);

/// Writes per-layer parameter files plus manifest.txt into `dir`.
void save_checkpoint(const Network& network, const std::string& dir);
void load_checkpoint(Network& network, const std::string& dir);

}  // namespace lpsc
