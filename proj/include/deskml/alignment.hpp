#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deskml/autograd.hpp"

namespace deskml {

/// Mean −ln σ(r⁺ − r⁻) over the batch.
Var reward_pairwise_loss(Var r_plus, Var r_minus);

struct PpoConfig {
    double clip = 0.2;
    double kl_coef = 0.0;

    void validate() const;
};

/// Mean of min(r·A, clip(r, 1−ε, 1+ε)·A); an objective to maximise.
Var ppo_clipped_objective(Var ratio, const Tensor& advantage, const PpoConfig& cfg);

/// Mean of logp_new − logp_ref over tokens.
Var kl_penalty(Var logp_new, Var logp_ref);

/// Clipped objective minus kl_coef · kl_penalty.
Var ppo_objective(Var ratio, const Tensor& advantage, Var logp_new, Var logp_ref, const PpoConfig& cfg);

struct DpoConfig {
    double beta = 0.1;

    void validate() const;
};

/// Mean −ln σ(β(logp⁺ − logp⁻)) over the batch, with no reference policy.
Var dpo_loss(Var logp_plus, Var logp_minus, const DpoConfig& cfg);

/// π*(y) ∝ π₀(y)·exp(β R(y)), one distribution per row.
Tensor tilt_policy(const Tensor& base_probs, const Tensor& rewards, double beta);

// ---------------------------------------------------------------------------

struct DpoToyConfig {
    std::size_t prompts = 4;
    std::size_t actions = 5;
    std::size_t steps = 200;
    double lr = 0.5;
    DpoConfig dpo{1.0};
    std::uint64_t seed = 0;
};

struct DpoToyResult {
    /// Mean logp(y⁺) − logp(y⁻) over prompts, before training and after each step.
    std::vector<double> margins;
    std::vector<double> losses;
};

/// Full-batch gradient descent on dpo_loss for a tabular softmax policy with
/// one random (y⁺, y⁻) pair per prompt.
DpoToyResult train_dpo_toy(const DpoToyConfig& cfg);

}  // namespace deskml
