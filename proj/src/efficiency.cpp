#include "deskml/efficiency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace deskml {

MlpParamCount mlp_param_count(std::uint64_t inputs, std::uint64_t hidden) {
    if (inputs == 0 || hidden == 0) {
        throw DomainError("layer sizes must be positive");
    }
    return {inputs * hidden, hidden};
}

std::uint64_t conv_param_count(std::uint64_t m, std::uint64_t n, std::uint64_t k, bool separable) {
    if (m == 0 || n == 0 || k == 0) {
        throw DomainError("channel counts and kernel size must be positive");
    }
    return separable ? m * k * k + m * n : m * n * k * k;
}

double vanishing_factor(double alpha, std::uint64_t layers) {
    if (!(alpha > 0.0)) {
        throw DomainError(fmt::format("per-layer derivative must be positive, got {}", alpha));
    }
    return std::pow(alpha, static_cast<double>(layers));
}

void ScalingCoefficients::validate() const {
    if (!(alpha > 1.0 && beta > 1.0 && gamma > 1.0)) {
        throw DomainError(fmt::format("scaling coefficients must exceed 1, got ({}, {}, {})", alpha, beta, gamma));
    }
    if (!(phi >= 0.0)) {
        throw DomainError(fmt::format("phi must be non-negative, got {}", phi));
    }
}

ScaleFactors compound_factors(const ScalingCoefficients& c) {
    c.validate();
    return {std::pow(c.alpha, c.phi), std::pow(c.beta, c.phi), std::pow(c.gamma, c.phi)};
}

NetworkDims compound_scale(const NetworkDims& base, const ScalingCoefficients& c) {
    const ScaleFactors f = compound_factors(c);
    auto at_least_one = [](double v) { return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(v))); };
    NetworkDims out;
    out.depth = at_least_one(static_cast<double>(base.depth) * f.depth);
    out.width = at_least_one(static_cast<double>(base.width) * f.width);
    out.resolution = 8 * at_least_one(static_cast<double>(base.resolution) * f.resolution / 8.0);
    return out;
}

double chinchilla_tokens(double params, double ratio) {
    if (!(params > 0.0 && ratio > 0.0)) {
        throw DomainError("parameter count and token ratio must be positive");
    }
    return params * ratio;
}

Tensor moe_gate(const Tensor& logits, std::size_t k) {
    if (logits.rank() != 1) {
        throw DimensionError("gate logits must be a vector, got " + shape_str(logits.shape()));
    }
    const std::size_t e = logits.numel();
    if (k == 0 || k > e) {
        throw DomainError(fmt::format("top-k must lie in [1,{}], got {}", e, k));
    }
    std::vector<std::size_t> order(e);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    const double top = logits[order[0]];
    Tensor out(Shape{e}, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out[order[i]] = std::exp(logits[order[i]] - top);
        total += out[order[i]];
    }
    for (std::size_t i = 0; i < k; ++i) {
        out[order[i]] /= total;
    }
    return out;
}

PruneResult prune_by_magnitude(const Tensor& w, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw DomainError(fmt::format("prune fraction must lie in [0,1], got {}", fraction));
    }
    const std::size_t n = w.numel();
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(w[a]) < std::abs(w[b]); });
    PruneResult r{Tensor(w.shape(), 1.0), w};
    for (std::size_t i = 0; i < count; ++i) {
        r.mask[order[i]] = 0.0;
        r.pruned[order[i]] = 0.0;
    }
    return r;
}

// ---------------------------------------------------------------------------

namespace {

void check_bits(int bits) {
    if (bits < 2 || bits > 32) {
        throw DomainError(fmt::format("bit width must lie in [2,32], got {}", bits));
    }
}

}  // namespace

void QuantParams::validate() const {
    check_bits(bits);
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DomainError(fmt::format("quantization scale must be positive, got {}", scale));
    }
    if (qmin >= qmax || zero_point < qmin || zero_point > qmax) {
        throw DomainError(fmt::format("invalid integer range [{},{}] with zero point {}", qmin, qmax, zero_point));
    }
}

QuantParams calibrate_affine(double min, double max, int bits) {
    check_bits(bits);
    if (!(min < max)) {
        throw DomainError(fmt::format("cannot derive a scale from the degenerate range [{}, {}]", min, max));
    }
    const double lo = std::min(min, 0.0);
    const double hi = std::max(max, 0.0);
    QuantParams qp;
    qp.bits = bits;
    qp.mode = QuantMode::affine;
    qp.qmin = -(std::int64_t{1} << (bits - 1));
    qp.qmax = (std::int64_t{1} << (bits - 1)) - 1;
    qp.scale = (hi - lo) / static_cast<double>(qp.qmax - qp.qmin);
    qp.zero_point = std::clamp<std::int64_t>(qp.qmin - std::llround(lo / qp.scale), qp.qmin, qp.qmax);
    return qp;
}

QuantParams calibrate_symmetric(double max_abs, int bits) {
    check_bits(bits);
    if (!(max_abs > 0.0)) {
        throw DomainError(fmt::format("cannot derive a scale from max |x| = {}", max_abs));
    }
    QuantParams qp;
    qp.bits = bits;
    qp.mode = QuantMode::symmetric;
    qp.qmax = (std::int64_t{1} << (bits - 1)) - 1;
    qp.qmin = -qp.qmax;
    qp.scale = max_abs / static_cast<double>(qp.qmax);
    qp.zero_point = 0;
    return qp;
}

QuantParams calibrate(const Tensor& x, QuantMode mode, int bits) {
    const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    if (mode == QuantMode::affine) {
        return calibrate_affine(*lo, *hi, bits);
    }
    return calibrate_symmetric(std::max(std::abs(*lo), std::abs(*hi)), bits);
}

std::int64_t quantize(double x, const QuantParams& qp) {
    const double q = std::round(x / qp.scale) + static_cast<double>(qp.zero_point);
    return static_cast<std::int64_t>(std::clamp(q, static_cast<double>(qp.qmin), static_cast<double>(qp.qmax)));
}

std::vector<std::int64_t> quantize(const Tensor& x, const QuantParams& qp) {
    qp.validate();
    std::vector<std::int64_t> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = quantize(x[i], qp);
    }
    return out;
}

Tensor dequantize(const std::vector<std::int64_t>& q, const Shape& shape, const QuantParams& qp) {
    qp.validate();
    Tensor out(shape);
    if (out.numel() != q.size()) {
        throw DimensionError(fmt::format("{} codes do not fill shape {}", q.size(), shape_str(shape)));
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = static_cast<double>(q[i] - qp.zero_point) * qp.scale;
    }
    return out;
}

Var fake_quantize(Var x, const QuantParams& qp) {
    const Tensor& xv = x.value();
    Tensor y = dequantize(quantize(xv, qp), xv.shape(), qp);
    const double lo = qp.range_lo();
    const double hi = qp.range_hi();
    return x.tape().record(std::move(y), {x}, [x, lo, hi](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& xv = x.value();
        Tensor& gx = *pg[0];
        for (std::size_t i = 0; i < xv.numel(); ++i) {
            if (xv[i] >= lo && xv[i] <= hi) {
                gx[i] += g[i];
            }
        }
    });
}

}  // namespace deskml
