#include "deskml/layers.hpp"

#include <cmath>

#include <fmt/format.h>

namespace deskml {

std::vector<Tensor*> tensors_of(const ParamList& params) {
    std::vector<Tensor*> out;
    out.reserve(params.size());
    for (const NamedParam& p : params) {
        out.push_back(p.tensor);
    }
    return out;
}

Tensor init_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out, Init init) {
    const double denom = init == Init::xavier ? static_cast<double>(fan_in + fan_out) : static_cast<double>(fan_in);
    const double limit = std::sqrt(6.0 / denom);
    return rng.uniform_tensor(shape, -limit, limit);
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, Init init)
    : weight(init_uniform(rng, {out, in}, in, out, init)), bias(Shape{out}, 0.0) {}

Linear::Linear(Tensor w, Tensor b) : weight(std::move(w)), bias(std::move(b)) {
    if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw DimensionError(fmt::format("linear layer weight {} and bias {} are inconsistent",
                                         shape_str(weight.shape()), shape_str(bias.shape())));
    }
}

Var Linear::forward(Tape& tape, Var x) const { return linear(x, tape.param(weight), tape.param(bias)); }

Var Linear::forward_frozen(Tape& tape, Var x) const { return linear(x, tape.frozen(weight), tape.frozen(bias)); }

void Linear::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
}

Var activation(Var x, Activation kind, double leaky_slope) {
    switch (kind) {
        case Activation::sigmoid:
            return sigmoid(x);
        case Activation::tanh:
            return tanh(x);
        case Activation::relu:
            return relu(x);
        case Activation::leaky_relu:
            return leaky_relu(x, leaky_slope);
        case Activation::softmax:
            return softmax(x);
    }
    throw DomainError("unknown activation");
}

// ---------------------------------------------------------------------------
// Convolution

std::size_t conv_output_size(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0 || kernel == 0) {
        throw DomainError("kernel and stride must be positive");
    }
    if (n + 2 * padding < kernel) {
        throw DimensionError(fmt::format("padded extent {} is smaller than kernel {}", n + 2 * padding, kernel));
    }
    return (n + 2 * padding - kernel) / stride + 1;
}

Var conv2d(Var x, Var filters, Var bias, const Conv2dOptions& opts) {
    const Tensor& in = x.value();
    const Tensor& f = filters.value();
    if (in.rank() != 3 || f.rank() != 4) {
        throw DimensionError(fmt::format("conv2d expects input [C x H x W] and filters [N x C/g x k x k], got {} and {}",
                                         shape_str(in.shape()), shape_str(f.shape())));
    }
    const std::size_t groups = opts.groups;
    const std::size_t m = in.dim(0);
    const std::size_t n = f.dim(0);
    if (groups == 0 || m % groups != 0 || n % groups != 0) {
        throw DomainError(fmt::format("groups={} must divide input channels {} and output channels {}", groups, m, n));
    }
    const std::size_t mg = m / groups;
    const std::size_t ng = n / groups;
    if (f.dim(1) != mg) {
        throw DimensionError(fmt::format("conv2d channel mismatch: input has {} channels, filters expect {}", m,
                                         f.dim(1) * groups));
    }
    const std::size_t k = f.dim(2);
    if (f.dim(3) != k) {
        throw DimensionError("conv2d filters must be square");
    }
    if (bias.value().rank() != 1 || bias.value().dim(0) != n) {
        throw DimensionError(fmt::format("conv2d bias {} does not match {} filters", shape_str(bias.shape()), n));
    }
    const std::size_t h = in.dim(1);
    const std::size_t w = in.dim(2);
    const std::size_t s = opts.stride;
    const std::size_t p = opts.padding;
    const std::size_t oh = conv_output_size(h, k, s, p);
    const std::size_t ow = conv_output_size(w, k, s, p);

    // Visits every (output, filter tap, input) triple that lands inside the image.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t oc = 0; oc < n; ++oc) {
            const std::size_t grp = oc / ng;
            for (std::size_t cl = 0; cl < mg; ++cl) {
                const std::size_t ic = grp * mg + cl;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t fi = ((oc * mg + cl) * k + ky) * k + kx;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) -
                                                      static_cast<std::ptrdiff_t>(p);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) -
                                                          static_cast<std::ptrdiff_t>(p);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) {
                                    continue;
                                }
                                const std::size_t oi = (oc * oh + oy) * ow + ox;
                                const std::size_t ii = (ic * h + static_cast<std::size_t>(iy)) * w +
                                                       static_cast<std::size_t>(ix);
                                fn(oi, fi, ii);
                            }
                        }
                    }
                }
            }
        }
    };

    Tensor out(Shape{n, oh, ow});
    const Tensor& b = bias.value();
    for (std::size_t oc = 0; oc < n; ++oc) {
        for (std::size_t i = 0; i < oh * ow; ++i) {
            out[oc * oh * ow + i] = b[oc];
        }
    }
    for_each_tap([&](std::size_t oi, std::size_t fi, std::size_t ii) { out[oi] += f[fi] * in[ii]; });

    return x.tape().record(std::move(out), {x, filters, bias},
                           [x, filters, for_each_tap, n, oh, ow](const Tensor& g, std::span<Tensor* const> pg) {
                               const Tensor& in = x.value();
                               const Tensor& f = filters.value();
                               for_each_tap([&](std::size_t oi, std::size_t fi, std::size_t ii) {
                                   if (pg[0] != nullptr) {
                                       (*pg[0])[ii] += g[oi] * f[fi];
                                   }
                                   if (pg[1] != nullptr) {
                                       (*pg[1])[fi] += g[oi] * in[ii];
                                   }
                               });
                               if (pg[2] != nullptr) {
                                   for (std::size_t oc = 0; oc < n; ++oc) {
                                       for (std::size_t i = 0; i < oh * ow; ++i) {
                                           (*pg[2])[oc] += g[oc * oh * ow + i];
                                       }
                                   }
                               }
                           });
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Conv2dOptions o, Rng& rng,
               Init init)
    : opts(o) {
    if (o.groups == 0 || in_channels % o.groups != 0 || out_channels % o.groups != 0) {
        throw DomainError(fmt::format("groups={} must divide {} and {}", o.groups, in_channels, out_channels));
    }
    if (kernel == 0) {
        throw DomainError("kernel size must be at least 1");
    }
    const std::size_t mg = in_channels / o.groups;
    const std::size_t fan_in = mg * kernel * kernel;
    const std::size_t fan_out = (out_channels / o.groups) * kernel * kernel;
    filters = init_uniform(rng, {out_channels, mg, kernel, kernel}, fan_in, fan_out, init);
    bias = Tensor(Shape{out_channels}, 0.0);
}

Conv2d::Conv2d(Tensor f, Tensor b, Conv2dOptions o) : filters(std::move(f)), bias(std::move(b)), opts(o) {
    if (filters.rank() != 4 || filters.dim(2) != filters.dim(3) || bias.rank() != 1 ||
        bias.dim(0) != filters.dim(0)) {
        throw DimensionError(fmt::format("conv filters {} / bias {} inconsistent", shape_str(filters.shape()),
                                         shape_str(bias.shape())));
    }
    if (o.groups == 0 || filters.dim(0) % o.groups != 0) {
        throw DomainError(fmt::format("groups={} must divide {} output channels", o.groups, filters.dim(0)));
    }
}

Var Conv2d::forward(Tape& tape, Var x) const { return conv2d(x, tape.param(filters), tape.param(bias), opts); }

void Conv2d::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".filters", &filters});
    out.push_back({prefix + ".bias", &bias});
}

DepthwiseSeparableConv::DepthwiseSeparableConv(std::size_t in_channels, std::size_t out_channels,
                                               std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng)
    : depthwise(in_channels, in_channels, kernel, Conv2dOptions{stride, padding, in_channels}, rng),
      pointwise(in_channels, out_channels, 1, Conv2dOptions{}, rng) {}

DepthwiseSeparableConv::DepthwiseSeparableConv(Conv2d dw, Conv2d pw) : depthwise(std::move(dw)), pointwise(std::move(pw)) {
    const std::size_t m = depthwise.out_channels();
    if (depthwise.opts.groups != m || depthwise.filters.dim(1) != 1) {
        throw DimensionError(fmt::format("depthwise stage needs exactly one k x k filter per channel ({} channels)", m));
    }
    if (pointwise.kernel() != 1 || pointwise.in_channels() != m) {
        throw DimensionError("pointwise stage must be a 1x1 convolution over the depthwise channels");
    }
}

Var DepthwiseSeparableConv::forward(Tape& tape, Var x) const {
    return pointwise.forward(tape, depthwise.forward(tape, x));
}

void DepthwiseSeparableConv::collect(ParamList& out, const std::string& prefix) {
    depthwise.collect(out, prefix + ".depthwise");
    pointwise.collect(out, prefix + ".pointwise");
}

Var max_pool2d(Var x, std::size_t window, std::size_t stride) {
    const Tensor& in = x.value();
    if (in.rank() != 3) {
        throw DimensionError("max_pool2d expects [C x H x W], got " + shape_str(in.shape()));
    }
    const std::size_t c = in.dim(0);
    const std::size_t h = in.dim(1);
    const std::size_t w = in.dim(2);
    if (window == 0) {
        throw DomainError("pool window must be positive");
    }
    const std::size_t wh = std::min(window, h);
    const std::size_t ww = std::min(window, w);
    const std::size_t oh = conv_output_size(h, wh, stride, 0);
    const std::size_t ow = conv_output_size(w, ww, stride, 0);
    Tensor out(Shape{c, oh, ow});
    std::vector<std::size_t> argmax(out.numel());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (ch * h + oy * stride) * w + ox * stride;
                for (std::size_t ky = 0; ky < wh; ++ky) {
                    for (std::size_t kx = 0; kx < ww; ++kx) {
                        const std::size_t ii = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                        if (in[ii] > in[best]) {
                            best = ii;
                        }
                    }
                }
                const std::size_t oi = (ch * oh + oy) * ow + ox;
                out[oi] = in[best];
                argmax[oi] = best;
            }
        }
    }
    return x.tape().record(std::move(out), {x}, [argmax = std::move(argmax)](const Tensor& g, std::span<Tensor* const> pg) {
        for (std::size_t i = 0; i < argmax.size(); ++i) {
            (*pg[0])[argmax[i]] += g[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Normalisation

Norm::Norm(std::size_t features, NormMode m, double e, double mom)
    : gamma(Shape{features}, 1.0),
      beta(Shape{features}, 0.0),
      running_mean(Shape{features}, 0.0),
      running_var(Shape{features}, 1.0),
      mode(m),
      eps(e),
      momentum(mom) {
    if (!(eps > 0.0)) {
        throw DomainError("norm eps must be positive");
    }
}

namespace {
void check_norm_input(const Tensor& xv, std::size_t features) {
    if (xv.rank() == 0 || xv.shape().back() != features) {
        throw DimensionError(fmt::format("norm over {} features got input {}", features, shape_str(xv.shape())));
    }
}
}  // namespace

Var Norm::apply(Tape& tape, Var x) const {
    const Tensor& xv = x.value();
    check_norm_input(xv, gamma.dim(0));
    Var g = tape.param(gamma);
    Var b = tape.param(beta);
    if (mode == NormMode::layer) {
        const std::size_t axis = xv.rank() - 1;
        Var mu = mean(x, axis, true);
        Var centered = x - mu;
        Var var = mean(square(centered), axis, true);
        return centered / sqrt(var + eps) * g + b;
    }
    if (xv.rank() != 2) {
        throw DimensionError("batch norm expects [batch x C], got " + shape_str(xv.shape()));
    }
    Var mu = tape.constant(running_mean);
    Var var = tape.constant(running_var);
    return (x - mu) / sqrt(var + eps) * g + b;
}

Var Norm::forward(Tape& tape, Var x, bool training) {
    if (mode == NormMode::layer || !training) {
        return apply(tape, x);
    }
    const Tensor& xv = x.value();
    const std::size_t features = gamma.dim(0);
    check_norm_input(xv, features);
    if (xv.rank() != 2) {
        throw DimensionError("batch norm expects [batch x C], got " + shape_str(xv.shape()));
    }
    if (xv.dim(0) < 2) {
        throw DomainError("batch norm in training mode needs a batch of at least 2");
    }
    Var g = tape.param(gamma);
    Var b = tape.param(beta);
    Var mu = mean(x, 0, true);
    Var centered = x - mu;
    Var var = mean(square(centered), 0, true);
    for (std::size_t j = 0; j < features; ++j) {
        running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mu.value()[j];
        running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var.value()[j];
    }
    return centered / sqrt(var + eps) * g + b;
}

void Norm::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
}

// ---------------------------------------------------------------------------

Var dropout(Var x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw DomainError(fmt::format("dropout probability must lie in [0,1), got {}", p));
    }
    if (!training || p == 0.0) {
        return x;
    }
    Tensor mask(x.shape());
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& m : mask.data()) {
        m = rng.bernoulli(p) ? 0.0 : keep_scale;
    }
    return x * x.tape().constant(std::move(mask));
}

Var residual(Var x, const std::function<Var(Var)>& f) {
    Var fx = f(x);
    if (fx.shape() != x.shape()) {
        throw DimensionError(fmt::format("residual branch output {} does not match input {}", shape_str(fx.shape()),
                                         shape_str(x.shape())));
    }
    return x + fx;
}

Var se_recalibrate(Var x, const std::function<Var(Var)>& gate) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) {
        throw DimensionError("SE block expects [C x H x W], got " + shape_str(xv.shape()));
    }
    const std::size_t c = xv.dim(0);
    const std::size_t hw = xv.dim(1) * xv.dim(2);
    Var flat = reshape(x, {c, hw});
    Var pooled = mean(flat, 1);
    Var logits = gate(pooled);
    if (logits.shape() != Shape{c}) {
        throw DimensionError(fmt::format("SE gate must map {} channels to {}, got {}", c, c, shape_str(logits.shape())));
    }
    Var scale = reshape(sigmoid(logits), {c, 1});
    return reshape(flat * scale, xv.shape());
}

SqueezeExcite::SqueezeExcite(std::size_t channels, std::size_t reduction, Rng& rng) {
    const std::size_t hidden = std::max<std::size_t>(1, channels / std::max<std::size_t>(1, reduction));
    reduce = Linear(channels, hidden, rng, Init::he);
    expand = Linear(hidden, channels, rng);
}

Var SqueezeExcite::forward(Tape& tape, Var x) const {
    return se_recalibrate(x, [&](Var pooled) { return expand.forward(tape, relu(reduce.forward(tape, pooled))); });
}

void SqueezeExcite::collect(ParamList& out, const std::string& prefix) {
    reduce.collect(out, prefix + ".reduce");
    expand.collect(out, prefix + ".expand");
}

std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t groups) {
    if (groups == 0 || channels % groups != 0) {
        throw DomainError(fmt::format("groups={} does not divide {} channels", groups, channels));
    }
    // View channels as (groups, per_group), transpose to (per_group, groups), flatten.
    const std::size_t per_group = channels / groups;
    std::vector<std::size_t> perm(channels);
    for (std::size_t j = 0; j < per_group; ++j) {
        for (std::size_t i = 0; i < groups; ++i) {
            perm[j * groups + i] = i * per_group + j;
        }
    }
    return perm;
}

std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size(), perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= perm.size() || inv[perm[i]] != perm.size()) {
            throw DomainError("not a permutation");
        }
        inv[perm[i]] = i;
    }
    return inv;
}

Var permute_channels(Var x, std::span<const std::size_t> perm) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || perm.size() != xv.dim(0)) {
        throw DimensionError(fmt::format("channel permutation of length {} does not fit {}", perm.size(),
                                         shape_str(xv.shape())));
    }
    invert_permutation(perm);
    Var flat = reshape(x, {xv.dim(0), xv.dim(1) * xv.dim(2)});
    return reshape(gather_rows(flat, perm), xv.shape());
}

Var shuffle_channels(Var x, std::size_t groups) {
    if (x.value().rank() != 3) {
        throw DimensionError("channel shuffle expects [C x H x W], got " + shape_str(x.shape()));
    }
    const auto perm = channel_shuffle_permutation(x.value().dim(0), groups);
    return permute_channels(x, perm);
}

// ---------------------------------------------------------------------------
// LoRA

namespace {
void check_lora(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || b.dim(1) != a.dim(0)) {
        throw DimensionError(fmt::format("LoRA factors A {} and B {} are inconsistent", shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
    const std::size_t r = a.dim(0);
    if (r == 0 || r >= std::min(a.dim(1), b.dim(0))) {
        throw DomainError(fmt::format("LoRA rank {} must be below min(in={}, out={})", r, a.dim(1), b.dim(0)));
    }
}
}  // namespace

LoraAdapter::LoraAdapter(std::size_t in, std::size_t out, std::size_t rank, double s, Rng& rng) : scale(s) {
    if (rank == 0 || rank >= std::min(in, out)) {
        throw DomainError(fmt::format("LoRA rank {} must be below min(in={}, out={})", rank, in, out));
    }
    a = init_uniform(rng, {rank, in}, in, rank);
    b = Tensor(Shape{out, rank}, 0.0);
}

LoraAdapter::LoraAdapter(Tensor a_, Tensor b_, double s) : a(std::move(a_)), b(std::move(b_)), scale(s) {
    check_lora(a, b);
}

void LoraAdapter::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".lora_a", &a});
    out.push_back({prefix + ".lora_b", &b});
}

Var lora_forward(Tape& tape, const Linear& base, const LoraAdapter& adapter, Var x, bool freeze_base) {
    check_lora(adapter.a, adapter.b);
    if (adapter.a.dim(1) != base.in_features() || adapter.b.dim(0) != base.out_features()) {
        throw DimensionError(fmt::format("LoRA adapter {}x{} does not fit base layer {}", shape_str(adapter.b.shape()),
                                         shape_str(adapter.a.shape()), shape_str(base.weight.shape())));
    }
    Var y = freeze_base ? base.forward_frozen(tape, x) : base.forward(tape, x);
    Var low = linear(linear(x, tape.param(adapter.a)), tape.param(adapter.b));
    return y + low * adapter.scale;
}

// ---------------------------------------------------------------------------
// RNN

RnnCell::RnnCell(std::size_t input, std::size_t hidden, Rng& rng)
    : w_x(init_uniform(rng, {hidden, input}, input, hidden)),
      w_h(init_uniform(rng, {hidden, hidden}, hidden, hidden)),
      b(Shape{hidden}, 0.0) {}

RnnCell::RnnCell(Tensor wx, Tensor wh, Tensor bias) : w_x(std::move(wx)), w_h(std::move(wh)), b(std::move(bias)) {
    if (w_h.rank() != 2 || w_h.dim(0) != w_h.dim(1)) {
        throw DimensionError("recurrent matrix must be square, got " + shape_str(w_h.shape()));
    }
    if (w_x.rank() != 2 || w_x.dim(0) != w_h.dim(0) || b.rank() != 1 || b.dim(0) != w_h.dim(0)) {
        throw DimensionError("RNN cell weights are inconsistent");
    }
}

Var RnnCell::step(Tape& tape, Var h_prev, Var x_t) const {
    if (h_prev.shape() != Shape{hidden_size()}) {
        throw DimensionError(fmt::format("hidden state {} does not match cell size {}", shape_str(h_prev.shape()),
                                         hidden_size()));
    }
    Var pre = linear(x_t, tape.param(w_x), tape.param(b)) + linear(h_prev, tape.param(w_h));
    return tanh(pre);
}

std::vector<Var> RnnCell::unroll(Tape& tape, Var h0, std::span<const Var> xs, std::size_t truncation) const {
    std::vector<Var> states;
    states.reserve(xs.size());
    Var h = h0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        if (truncation != 0 && t != 0 && t % truncation == 0) {
            h = stop_gradient(h);
        }
        h = step(tape, h, xs[t]);
        states.push_back(h);
    }
    return states;
}

void RnnCell::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".w_x", &w_x});
    out.push_back({prefix + ".w_h", &w_h});
    out.push_back({prefix + ".b", &b});
}

}  // namespace deskml
