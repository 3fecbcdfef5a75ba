#include "deskml/alignment.hpp"

#include <cmath>

#include <fmt/format.h>

#include "deskml/losses.hpp"
#include "deskml/rng.hpp"

namespace deskml {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("{}: shapes {} and {} differ", what, shape_str(a.shape()), shape_str(b.shape())));
    }
}

}  // namespace

Var reward_pairwise_loss(Var r_plus, Var r_minus) {
    require_same_shape(r_plus, r_minus, "reward_pairwise_loss");
    return -mean(log_sigmoid(r_plus - r_minus));
}

void PpoConfig::validate() const {
    if (!(clip > 0.0 && clip < 1.0)) {
        throw DomainError(fmt::format("PPO clip must lie in (0,1), got {}", clip));
    }
    if (!(kl_coef >= 0.0)) {
        throw DomainError(fmt::format("KL coefficient must be non-negative, got {}", kl_coef));
    }
}

Var ppo_clipped_objective(Var ratio, const Tensor& advantage, const PpoConfig& cfg) {
    cfg.validate();
    if (ratio.shape() != advantage.shape()) {
        throw DimensionError(fmt::format("ratio {} and advantage {} differ", shape_str(ratio.shape()),
                                         shape_str(advantage.shape())));
    }
    const Tensor& r = ratio.value();
    for (std::size_t i = 0; i < r.numel(); ++i) {
        if (!(r[i] > 0.0)) {
            throw DomainError(fmt::format("probability ratio at {} is {}, must be positive", i, r[i]));
        }
    }
    Var a = ratio.tape().constant(advantage);
    Var unclipped = ratio * a;
    Var clipped = clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a;
    return mean(minimum(unclipped, clipped));
}

Var kl_penalty(Var logp_new, Var logp_ref) {
    require_same_shape(logp_new, logp_ref, "kl_penalty");
    return mean(logp_new - logp_ref);
}

Var ppo_objective(Var ratio, const Tensor& advantage, Var logp_new, Var logp_ref, const PpoConfig& cfg) {
    return ppo_clipped_objective(ratio, advantage, cfg) - kl_penalty(logp_new, logp_ref) * cfg.kl_coef;
}

void DpoConfig::validate() const {
    if (!(beta > 0.0)) {
        throw DomainError(fmt::format("DPO beta must be positive, got {}", beta));
    }
}

Var dpo_loss(Var logp_plus, Var logp_minus, const DpoConfig& cfg) {
    cfg.validate();
    require_same_shape(logp_plus, logp_minus, "dpo_loss");
    return -mean(log_sigmoid((logp_plus - logp_minus) * cfg.beta));
}

Tensor tilt_policy(const Tensor& base, const Tensor& rewards, double beta) {
    validate_distribution(base);
    if (base.shape() != rewards.shape()) {
        throw DimensionError(fmt::format("base {} and rewards {} differ", shape_str(base.shape()),
                                         shape_str(rewards.shape())));
    }
    if (!(beta >= 0.0)) {
        throw DomainError(fmt::format("tilt beta must be non-negative, got {}", beta));
    }
    const std::size_t c = base.shape().back();
    const std::size_t rows = base.numel() / c;
    Tensor out(base.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        // Shift by the largest exponent so exp() stays finite.
        double top = -INFINITY;
        for (std::size_t j = 0; j < c; ++j) {
            if (base[i * c + j] > 0.0) {
                top = std::max(top, beta * rewards[i * c + j]);
            }
        }
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double p = base[i * c + j];
            out[i * c + j] = p > 0.0 ? p * std::exp(beta * rewards[i * c + j] - top) : 0.0;
            total += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] /= total;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

DpoToyResult train_dpo_toy(const DpoToyConfig& cfg) {
    cfg.dpo.validate();
    if (cfg.prompts == 0 || cfg.actions < 2) {
        throw DomainError("toy DPO needs at least one prompt and two actions");
    }
    if (!(cfg.lr > 0.0)) {
        throw DomainError("learning rate must be positive");
    }
    Rng rng(cfg.seed);
    Tensor logits = rng.normal_tensor({cfg.prompts, cfg.actions});
    std::vector<std::size_t> plus_idx(cfg.prompts);
    std::vector<std::size_t> minus_idx(cfg.prompts);
    for (std::size_t p = 0; p < cfg.prompts; ++p) {
        const auto pair = rng.sample_without_replacement(cfg.actions, 2);
        plus_idx[p] = p * cfg.actions + pair[0];
        minus_idx[p] = p * cfg.actions + pair[1];
    }

    DpoToyResult res;
    auto margin_of = [&](const Tensor& logp) {
        double m = 0.0;
        for (std::size_t p = 0; p < cfg.prompts; ++p) {
            m += logp[plus_idx[p]] - logp[minus_idx[p]];
        }
        return m / static_cast<double>(cfg.prompts);
    };
    res.margins.push_back(margin_of(kernels::log_softmax_rows(logits)));
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tape tape;
        Var theta = tape.param(logits);
        Var logp = reshape(log_softmax(theta), {cfg.prompts * cfg.actions, 1});
        Var lp = reshape(gather_rows(logp, plus_idx), {cfg.prompts});
        Var lm = reshape(gather_rows(logp, minus_idx), {cfg.prompts});
        Var loss = dpo_loss(lp, lm, cfg.dpo);
        res.losses.push_back(loss.item());
        tape.backward(loss);
        Tensor g = tape.grad(theta);
        g *= -cfg.lr;
        logits += g;
        res.margins.push_back(margin_of(kernels::log_softmax_rows(logits)));
    }
    return res;
}

}  // namespace deskml
