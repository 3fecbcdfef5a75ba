#include "deskml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace deskml {

namespace {

double log_in(double v, LogBase base) { return base == LogBase::two ? std::log2(v) : std::log(v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("{}: shapes {} and {} differ", what, shape_str(a.shape()), shape_str(b.shape())));
    }
}

std::size_t rows_of(const Tensor& t) { return t.rank() <= 1 ? 1 : t.numel() / t.shape().back(); }

}  // namespace

void validate_distribution(const Tensor& probs) {
    const std::size_t c = probs.rank() == 0 ? 1 : probs.shape().back();
    for (std::size_t r = 0; r < probs.numel() / c; ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double v = probs[r * c + j];
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw DomainError(fmt::format("invalid probability {} at row {}, column {}", v, r, j));
            }
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw DomainError(fmt::format("row {} sums to {}, not 1", r, total));
        }
    }
}

double entropy(const Tensor& p, LogBase base) {
    validate_distribution(p);
    double h = 0.0;
    for (double v : p.data()) {
        if (v > 0.0) {
            h -= v * log_in(v, base);
        }
    }
    return h;
}

double cross_entropy(const Tensor& p, const Tensor& q, LogBase base) {
    require_same_shape(p, q, "cross_entropy");
    validate_distribution(p);
    validate_distribution(q);
    double h = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        if (p[i] == 0.0) {
            continue;
        }
        if (q[i] == 0.0) {
            throw NumericError(fmt::format("infinite cross-entropy: q is 0 at index {} where p = {}", i, p[i]));
        }
        h -= p[i] * log_in(q[i], base);
    }
    return h;
}

double kl_divergence(const Tensor& p, const Tensor& q, LogBase base) {
    require_same_shape(p, q, "kl_divergence");
    validate_distribution(p);
    validate_distribution(q);
    double d = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        if (p[i] == 0.0) {
            continue;
        }
        if (q[i] == 0.0) {
            throw NumericError(fmt::format("infinite KL divergence: q is 0 at index {} where p = {}", i, p[i]));
        }
        d += p[i] * (log_in(p[i], base) - log_in(q[i], base));
    }
    return d;
}

Var mse(Var x, Var target) {
    require_same_shape(x.value(), target.value(), "mse");
    return mean(square(x - target));
}

Var l1(Var x, Var target) {
    require_same_shape(x.value(), target.value(), "l1");
    return mean(abs(x - target));
}

Var cross_entropy_loss(Var logits, std::span<const std::size_t> targets) {
    return cross_entropy_logits(logits, targets);
}

Var cross_entropy_loss(Var logits, const Tensor& target_probs) {
    require_same_shape(logits.value(), target_probs, "cross_entropy_loss");
    validate_distribution(target_probs);
    Var t = logits.tape().constant(target_probs);
    const double rows = static_cast<double>(rows_of(target_probs));
    return sum(t * log_softmax(logits)) * (-1.0 / rows);
}

Var binary_cross_entropy(const Tensor& targets, Var predictions) {
    require_same_shape(targets, predictions.value(), "binary_cross_entropy");
    for (double v : targets.data()) {
        if (v < 0.0 || v > 1.0) {
            throw DomainError(fmt::format("BCE target {} outside [0,1]", v));
        }
    }
    Tape& tape = predictions.tape();
    Var p = clamp(predictions, kProbFloor, 1.0 - kProbFloor);
    Var t = tape.constant(targets);
    Tensor one_minus(targets.shape());
    for (std::size_t i = 0; i < targets.numel(); ++i) {
        one_minus[i] = 1.0 - targets[i];
    }
    Var ll = t * log(p) + tape.constant(std::move(one_minus)) * log(-p + 1.0);
    return -mean(ll);
}

Var distillation_loss(const Tensor& teacher_probs, Var student_logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw DomainError(fmt::format("distillation temperature must be positive, got {}", temperature));
    }
    require_same_shape(teacher_probs, student_logits.value(), "distillation_loss");
    validate_distribution(teacher_probs);
    double self_term = 0.0;
    for (double v : teacher_probs.data()) {
        if (v > 0.0) {
            self_term += v * std::log(v);
        }
    }
    const double rows = static_cast<double>(rows_of(teacher_probs));
    const double t2 = temperature * temperature;
    Var logq = log_softmax(student_logits * (1.0 / temperature));
    Var cross = sum(student_logits.tape().constant(teacher_probs) * logq);
    return (-cross + self_term) * (t2 / rows);
}

Var clip_contrastive_loss(Var similarity) {
    const Tensor& s = similarity.value();
    if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
        throw DimensionError("CLIP loss needs a square similarity matrix, got " + shape_str(s.shape()));
    }
    std::vector<std::size_t> diag(s.dim(0));
    std::iota(diag.begin(), diag.end(), std::size_t{0});
    Var rows = cross_entropy_logits(similarity, diag);
    Var cols = cross_entropy_logits(transpose(similarity), diag);
    return (rows + cols) * 0.5;
}

GanLosses gan_losses(Var d_real, Var d_fake) {
    Var real = clamp(d_real, kProbFloor, 1.0 - kProbFloor);
    Var fake = clamp(d_fake, kProbFloor, 1.0 - kProbFloor);
    Var d_loss = -mean(log(real)) - mean(log(-fake + 1.0));
    Var g_loss = -mean(log(fake));
    return {d_loss, g_loss};
}

Var entropy_min_loss(Var logits) {
    const std::size_t rows = rows_of(logits.value());
    Var h = sum(softmax(logits) * log_softmax(logits));
    return h * (-1.0 / static_cast<double>(rows));
}

std::optional<std::size_t> pseudo_label(const Tensor& probs, double tau) {
    if (!(tau > 0.5 && tau <= 1.0)) {
        throw DomainError(fmt::format("pseudo-label threshold must lie in (0.5, 1], got {}", tau));
    }
    validate_distribution(probs);
    const auto data = probs.data();
    const auto best = std::max_element(data.begin(), data.end());
    if (*best >= tau) {
        return static_cast<std::size_t>(best - data.begin());
    }
    return std::nullopt;
}

}  // namespace deskml
