#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "deskml/tensor.hpp"

namespace deskml {

enum class OptimizerKind { sgd, momentum, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double lr = 0.01;
    double momentum = 0.9;  // β for the momentum rule
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Rescale all gradients so their global L2 norm is at most this value.
    std::optional<double> clip_norm;
};

/// Parameter update rules. Buffers are created on the first step and are
/// matched to parameters by position, so the same parameter list (in the same
/// order) must be passed on every call.
class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig config);

    /// θ ← update(θ, g) for every (θ, g) pair.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    const OptimizerConfig& config() const { return config_; }
    std::size_t steps_taken() const { return t_; }
    void set_lr(double lr) { config_.lr = lr; }

  private:
    void sgd(Tensor& p, const Tensor& g) const;
    void momentum(Tensor& p, const Tensor& g, Tensor& velocity) const;
    void adam(Tensor& p, const Tensor& g, Tensor& m, Tensor& s) const;

    OptimizerConfig config_;
    std::size_t t_ = 0;
    std::vector<Tensor> first_;   // velocity (momentum) or first moment (adam)
    std::vector<Tensor> second_;  // second moment (adam)
};

/// Global L2 norm of a gradient list.
double global_norm(std::span<const Tensor> grads);
/// Scales grads in place so the global norm does not exceed max_norm; returns the pre-clip norm.
double clip_by_global_norm(std::span<Tensor> grads, double max_norm);

}  // namespace deskml
