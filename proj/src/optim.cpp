#include "deskml/optim.hpp"

#include <cmath>

#include <fmt/format.h>

namespace deskml {

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.lr >= 0.0)) {
        throw DomainError(fmt::format("learning rate must be non-negative, got {}", config_.lr));
    }
    if (!(config_.momentum >= 0.0 && config_.momentum < 1.0)) {
        throw DomainError(fmt::format("momentum must lie in [0,1), got {}", config_.momentum));
    }
    if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
        throw DomainError("Adam betas must lie in [0,1)");
    }
    if (!(config_.eps > 0.0)) {
        throw DomainError("Adam eps must be positive");
    }
    if (config_.clip_norm && !(*config_.clip_norm > 0.0)) {
        throw DomainError("clip norm must be positive");
    }
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
        throw DimensionError(fmt::format("{} parameters but {} gradients", params.size(), grads.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i].shape()) {
            throw DimensionError(fmt::format("parameter {} has shape {} but gradient {}", i,
                                             shape_str(params[i]->shape()), shape_str(grads[i].shape())));
        }
    }
    if (first_.empty()) {
        for (Tensor* p : params) {
            first_.emplace_back(p->shape(), 0.0);
            if (config_.kind == OptimizerKind::adam) {
                second_.emplace_back(p->shape(), 0.0);
            }
        }
    } else if (first_.size() != params.size()) {
        throw DimensionError("optimizer called with a different parameter list");
    }

    std::vector<Tensor> clipped;
    if (config_.clip_norm) {
        clipped.assign(grads.begin(), grads.end());
        clip_by_global_norm(clipped, *config_.clip_norm);
        grads = clipped;
    }

    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        switch (config_.kind) {
            case OptimizerKind::sgd:
                sgd(*params[i], grads[i]);
                break;
            case OptimizerKind::momentum:
                momentum(*params[i], grads[i], first_[i]);
                break;
            case OptimizerKind::adam:
                adam(*params[i], grads[i], first_[i], second_[i]);
                break;
        }
    }
}

void Optimizer::sgd(Tensor& p, const Tensor& g) const {
    for (std::size_t i = 0; i < p.numel(); ++i) {
        p[i] -= config_.lr * g[i];
    }
}

void Optimizer::momentum(Tensor& p, const Tensor& g, Tensor& velocity) const {
    for (std::size_t i = 0; i < p.numel(); ++i) {
        velocity[i] = config_.momentum * velocity[i] + g[i];
        p[i] -= config_.lr * velocity[i];
    }
}

void Optimizer::adam(Tensor& p, const Tensor& g, Tensor& m, Tensor& s) const {
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double t = static_cast<double>(t_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < p.numel(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        s[i] = b2 * s[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double s_hat = s[i] / c2;
        p[i] -= config_.lr * m_hat / (std::sqrt(s_hat) + config_.eps);
    }
}

double global_norm(std::span<const Tensor> grads) {
    double total = 0.0;
    for (const Tensor& g : grads) {
        for (double v : g.data()) {
            total += v * v;
        }
    }
    return std::sqrt(total);
}

double clip_by_global_norm(std::span<Tensor> grads, double max_norm) {
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (Tensor& g : grads) {
            g *= s;
        }
    }
    return norm;
}

}  // namespace deskml
