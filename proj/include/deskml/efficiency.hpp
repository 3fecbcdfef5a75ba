#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deskml/autograd.hpp"

namespace deskml {

struct MlpParamCount {
    std::uint64_t weights = 0;
    std::uint64_t biases = 0;
    std::uint64_t total() const { return weights + biases; }
};

/// One dense layer of `hidden` units over `inputs` features.
MlpParamCount mlp_param_count(std::uint64_t inputs, std::uint64_t hidden);

/// Standard M·N·k², or depthwise separable M·k² + M·N. Biases excluded.
std::uint64_t conv_param_count(std::uint64_t in_channels, std::uint64_t out_channels, std::uint64_t kernel,
                               bool separable);

/// α^L
double vanishing_factor(double per_layer_derivative, std::uint64_t layers);

struct ScalingCoefficients {
    double alpha = 1.2;   // depth
    double beta = 1.1;    // width
    double gamma = 1.15;  // resolution
    double phi = 1.0;

    void validate() const;
};

struct ScaleFactors {
    double depth = 1.0;
    double width = 1.0;
    double resolution = 1.0;
};

struct NetworkDims {
    std::uint64_t depth = 1;
    std::uint64_t width = 1;
    std::uint64_t resolution = 8;

    friend bool operator==(const NetworkDims&, const NetworkDims&) = default;
};

/// (α^φ, β^φ, γ^φ)
ScaleFactors compound_factors(const ScalingCoefficients& c);
/// Depth and width rounded to the nearest integer >= 1, resolution to the
/// nearest multiple of 8 (at least 8).
NetworkDims compound_scale(const NetworkDims& base, const ScalingCoefficients& c);

inline constexpr double kChinchillaTokensPerParam = 20.0;
double chinchilla_tokens(double params, double tokens_per_param = kChinchillaTokensPerParam);

/// Softmax over the k largest logits (ties: lowest index), zero elsewhere.
Tensor moe_gate(const Tensor& gate_logits, std::size_t k);

struct PruneResult {
    Tensor mask;    // 1 for survivors, 0 for pruned
    Tensor pruned;  // weights ⊙ mask
};

/// Zeroes the ⌊f·n⌋ smallest-magnitude entries; ties prune the lowest flat index first.
PruneResult prune_by_magnitude(const Tensor& weights, double fraction);

// ---------------------------------------------------------------------------

enum class QuantMode { affine, symmetric };

struct QuantParams {
    int bits = 8;
    QuantMode mode = QuantMode::symmetric;
    std::int64_t qmin = -127;
    std::int64_t qmax = 127;
    double scale = 1.0;
    std::int64_t zero_point = 0;

    /// Real interval that maps inside [qmin, qmax] without clamping.
    double range_lo() const { return static_cast<double>(qmin - zero_point) * scale; }
    double range_hi() const { return static_cast<double>(qmax - zero_point) * scale; }
    void validate() const;
};

/// Full signed range [−2^(b−1), 2^(b−1)−1] over [min, max] widened to include 0.
QuantParams calibrate_affine(double min, double max, int bits = 8);
/// ±(2^(b−1)−1) over [−max_abs, max_abs], zero point 0.
QuantParams calibrate_symmetric(double max_abs, int bits = 8);
/// Calibrates from the observed range of x.
QuantParams calibrate(const Tensor& x, QuantMode mode, int bits = 8);

/// clamp(round(x/scale) + zero_point, qmin, qmax)
std::vector<std::int64_t> quantize(const Tensor& x, const QuantParams& qp);
std::int64_t quantize(double x, const QuantParams& qp);
/// (q − zero_point)·scale
Tensor dequantize(const std::vector<std::int64_t>& q, const Shape& shape, const QuantParams& qp);

/// Forward dequantize(quantize(x)); backward passes the gradient where x lies
/// in [range_lo, range_hi] and blocks it elsewhere.
Var fake_quantize(Var x, const QuantParams& qp);

}  // namespace deskml
