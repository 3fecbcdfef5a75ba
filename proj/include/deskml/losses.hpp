#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "deskml/autograd.hpp"

namespace deskml {

enum class LogBase { two, e };

/// Probability clamp applied before logs of predicted probabilities.
inline constexpr double kProbFloor = 1e-12;

/// Throws DomainError unless every row (last axis) is non-negative and sums to 1 ± 1e-9.
void validate_distribution(const Tensor& probs);

// Information-theoretic quantities on explicit distributions (one row each).
// 0·log 0 is taken as 0.

double entropy(const Tensor& p, LogBase base = LogBase::two);
/// H(p, q) = −Σ p log q. Throws NumericError if q = 0 where p > 0.
double cross_entropy(const Tensor& p, const Tensor& q, LogBase base = LogBase::two);
/// D_KL(p‖q) = H(p, q) − H(p).
double kl_divergence(const Tensor& p, const Tensor& q, LogBase base = LogBase::two);

// Training losses. Every batch loss is a mean, in nats.

Var mse(Var x, Var target);
Var l1(Var x, Var target);

/// Mean −ln softmax(logits)[target] over rows of [B x C] logits.
Var cross_entropy_loss(Var logits, std::span<const std::size_t> targets);
/// Same with one-hot (or soft) target rows.
Var cross_entropy_loss(Var logits, const Tensor& target_probs);

/// Mean negative Bernoulli log-likelihood; predictions are clamped to
/// [kProbFloor, 1 − kProbFloor].
Var binary_cross_entropy(const Tensor& targets, Var predictions);

/// T² · KL(teacher ‖ softmax(student_logits / T)), averaged over rows.
Var distillation_loss(const Tensor& teacher_probs, Var student_logits, double temperature);

/// Symmetric CLIP objective on an N x N similarity matrix whose diagonal holds
/// the matching pairs: ½ (row-wise CE + column-wise CE).
Var clip_contrastive_loss(Var similarity);

struct GanLosses {
    Var discriminator;  // −mean ln D(x) − mean ln(1 − D(G(z)))
    Var generator;      // −mean ln D(G(z))  (non-saturating form)
};
GanLosses gan_losses(Var d_real, Var d_fake);

/// Mean entropy (nats) of softmax rows; minimised on unlabeled data.
Var entropy_min_loss(Var logits);

/// Argmax class if its probability reaches tau (inclusive); tau in (0.5, 1].
std::optional<std::size_t> pseudo_label(const Tensor& probs, double tau);

}  // namespace deskml
