#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "deskml/autograd.hpp"
#include "deskml/rng.hpp"

namespace deskml {

/// A trainable tensor owned by some layer, addressed by a dotted name.
struct NamedParam {
    std::string name;
    Tensor* tensor = nullptr;
};
using ParamList = std::vector<NamedParam>;

std::vector<Tensor*> tensors_of(const ParamList& params);

enum class Init {
    xavier,  // U(±sqrt(6 / (fan_in + fan_out)))
    he,      // U(±sqrt(6 / fan_in)), for ReLU stacks
};

Tensor init_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out, Init init = Init::xavier);

// ---------------------------------------------------------------------------

class Linear {
  public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, Init init = Init::xavier);
    Linear(Tensor weight, Tensor bias);

    /// Wx + b for x [in] or a batch [rows x in].
    Var forward(Tape& tape, Var x) const;
    /// Same, with W and b recorded as constants.
    Var forward_frozen(Tape& tape, Var x) const;

    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }
    void collect(ParamList& out, const std::string& prefix);

    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
};

enum class Activation { sigmoid, tanh, relu, leaky_relu, softmax };

/// Pointwise activation; softmax acts on the last axis.
Var activation(Var x, Activation kind, double leaky_slope = 0.01);

// ---------------------------------------------------------------------------
// Convolution family. Inputs are [channels x height x width].

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

/// floor((n + 2·padding − k) / stride) + 1
std::size_t conv_output_size(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Grouped 2-D cross-correlation. filters [N x M/groups x k x k], bias [N].
Var conv2d(Var x, Var filters, Var bias, const Conv2dOptions& opts);

class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Conv2dOptions opts, Rng& rng,
           Init init = Init::he);
    Conv2d(Tensor filters, Tensor bias, Conv2dOptions opts);

    Var forward(Tape& tape, Var x) const;
    std::size_t in_channels() const { return filters.dim(1) * opts.groups; }
    std::size_t out_channels() const { return filters.dim(0); }
    std::size_t kernel() const { return filters.dim(2); }
    /// Filter weights only (biases excluded).
    std::size_t weight_count() const { return filters.numel(); }
    void collect(ParamList& out, const std::string& prefix);

    Tensor filters;
    Tensor bias;
    Conv2dOptions opts;
};

/// Per-channel k×k depthwise convolution followed by a 1×1 pointwise mix.
class DepthwiseSeparableConv {
  public:
    DepthwiseSeparableConv() = default;
    DepthwiseSeparableConv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                           std::size_t padding, Rng& rng);
    DepthwiseSeparableConv(Conv2d depthwise, Conv2d pointwise);

    Var forward(Tape& tape, Var x) const;
    /// M·k² + M·N
    std::size_t weight_count() const { return depthwise.weight_count() + pointwise.weight_count(); }
    void collect(ParamList& out, const std::string& prefix);

    Conv2d depthwise;
    Conv2d pointwise;
};

/// Max over window×window blocks. Along an axis shorter than the window the
/// block spans the whole axis, so a 1×4 row pools in 1×2 blocks. Gradient goes
/// to the first maximal element of each block in row-major order.
Var max_pool2d(Var x, std::size_t window, std::size_t stride);

// ---------------------------------------------------------------------------

enum class NormMode { batch, layer };

/// Batch norm normalises each feature over the batch axis of [batch x C];
/// layer norm normalises each row over its last axis.
class Norm {
  public:
    static constexpr double kDefaultEps = 1e-5;
    static constexpr double kDefaultMomentum = 0.1;

    Norm() = default;
    Norm(std::size_t features, NormMode mode, double eps = kDefaultEps, double momentum = kDefaultMomentum);

    /// In batch mode with training=true, batch statistics are used and the
    /// running averages updated; with training=false the running averages are used.
    Var forward(Tape& tape, Var x, bool training = true);
    /// Forward pass that never touches running statistics (layer mode, or
    /// batch mode in inference).
    Var apply(Tape& tape, Var x) const;
    void collect(ParamList& out, const std::string& prefix);

    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    NormMode mode = NormMode::layer;
    double eps = kDefaultEps;
    double momentum = kDefaultMomentum;
};

/// Inverted dropout: survivors are scaled by 1/(1−p) in training; identity otherwise.
Var dropout(Var x, double p, bool training, Rng& rng);

/// x + f(x).
Var residual(Var x, const std::function<Var(Var)>& f);

/// Scales channel c of x [C x H x W] by sigmoid(gate(avgpool(x)))_c.
Var se_recalibrate(Var x, const std::function<Var(Var)>& gate);

/// Bottleneck gate C -> C/reduction -> C with a ReLU in between.
class SqueezeExcite {
  public:
    SqueezeExcite() = default;
    SqueezeExcite(std::size_t channels, std::size_t reduction, Rng& rng);

    Var forward(Tape& tape, Var x) const;
    void collect(ParamList& out, const std::string& prefix);

    Linear reduce;
    Linear expand;
};

/// Channel order produced by shuffling C channels in g groups:
/// result[new_index] = old_index.
std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t groups);
std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm);
/// Reorders channels of [C x H x W] so output channel i is input channel perm[i].
Var permute_channels(Var x, std::span<const std::size_t> perm);
Var shuffle_channels(Var x, std::size_t groups);

// ---------------------------------------------------------------------------

class LoraAdapter {
  public:
    LoraAdapter() = default;
    /// A ~ Xavier, B = 0, so a fresh adapter leaves the base layer unchanged.
    LoraAdapter(std::size_t in, std::size_t out, std::size_t rank, double scale, Rng& rng);
    LoraAdapter(Tensor a, Tensor b, double scale);

    std::size_t rank() const { return a.dim(0); }
    void collect(ParamList& out, const std::string& prefix);

    Tensor a;  // [r x in]
    Tensor b;  // [out x r]
    double scale = 1.0;
};

/// Wx + b + scale·B(Ax). With freeze_base the base weights are constants so
/// only the adapter receives gradients.
Var lora_forward(Tape& tape, const Linear& base, const LoraAdapter& adapter, Var x, bool freeze_base = true);

class RnnCell {
  public:
    RnnCell() = default;
    RnnCell(std::size_t input, std::size_t hidden, Rng& rng);
    RnnCell(Tensor w_x, Tensor w_h, Tensor b);

    /// h_t = tanh(W_x x_t + W_h h_prev + b)
    Var step(Tape& tape, Var h_prev, Var x_t) const;
    /// Runs step() over xs and returns every hidden state. A non-zero
    /// truncation cuts the gradient path through h every `truncation` steps.
    std::vector<Var> unroll(Tape& tape, Var h0, std::span<const Var> xs, std::size_t truncation = 0) const;
    std::size_t hidden_size() const { return w_h.dim(0); }
    void collect(ParamList& out, const std::string& prefix);

    Tensor w_x;  // [h x in]
    Tensor w_h;  // [h x h]
    Tensor b;    // [h]
};

}  // namespace deskml
