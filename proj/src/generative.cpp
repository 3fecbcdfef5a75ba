#include "deskml/generative.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

namespace deskml {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("{}: shapes {} and {} differ", what, shape_str(a.shape()), shape_str(b.shape())));
    }
}

}  // namespace

Tensor corrupt_gaussian(const Tensor& x, Rng& rng, double sigma) {
    if (!(sigma >= 0.0)) {
        throw DomainError(fmt::format("corruption sigma must be non-negative, got {}", sigma));
    }
    Tensor out = x;
    for (double& v : out.data()) {
        v += sigma * rng.normal();
    }
    return out;
}

// ---------------------------------------------------------------------------

Var vae_reparameterize(Var mu, Var logvar, const Tensor& eps) {
    require_same_shape(mu.value(), logvar.value(), "reparameterize");
    require_same_shape(mu.value(), eps, "reparameterize");
    return mu + exp(logvar * 0.5) * mu.tape().constant(eps);
}

Var vae_reparameterize(Var mu, Var logvar, Rng& rng) {
    return vae_reparameterize(mu, logvar, rng.normal_tensor(mu.shape()));
}

Var vae_kl(Var mu, Var logvar) {
    require_same_shape(mu.value(), logvar.value(), "vae_kl");
    Var terms = exp(logvar) + square(mu) - 1.0 - logvar;
    const Tensor& m = mu.value();
    if (m.rank() == 2) {
        return sum(terms) * (0.5 / static_cast<double>(m.dim(0)));
    }
    return sum(terms) * 0.5;
}

Var vae_elbo_loss(Var recon_loss, Var mu, Var logvar, double kl_weight) {
    if (!(kl_weight >= 0.0)) {
        throw DomainError(fmt::format("kl_weight must be non-negative, got {}", kl_weight));
    }
    return recon_loss + vae_kl(mu, logvar) * kl_weight;
}

// ---------------------------------------------------------------------------

Codebook::Codebook(Tensor e, double b) : entries(std::move(e)), beta(b) {
    if (entries.rank() != 2) {
        throw DimensionError("codebook must be [K x d], got " + shape_str(entries.shape()));
    }
    if (!entries.all_finite()) {
        throw NumericError("codebook entries must be finite");
    }
    if (!(beta > 0.0)) {
        throw DomainError(fmt::format("commitment weight must be positive, got {}", beta));
    }
}

VqResult vq_quantize(Tape& tape, Var h, const Codebook& book) {
    if (book.entries.numel() == 0 || book.entries.rank() != 2) {
        throw DomainError("empty codebook");
    }
    const Tensor& hv = h.value();
    const std::size_t d = book.dim();
    if (hv.rank() != 1 || hv.dim(0) != d) {
        throw DimensionError(fmt::format("vq input {} does not match codebook dimension {}", shape_str(hv.shape()), d));
    }
    std::size_t best = 0;
    double best_dist = 0.0;
    for (std::size_t k = 0; k < book.size(); ++k) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = hv[j] - book.entries[k * d + j];
            dist += diff * diff;
        }
        if (k == 0 || dist < best_dist) {
            best = k;
            best_dist = dist;
        }
    }
    const std::size_t ids[] = {best};
    Var e = reshape(gather_rows(tape.param(book.entries), ids), {d});

    VqResult r;
    r.index = best;
    r.entry = e.value();
    r.quantized = straight_through(e.value(), h);
    r.codebook_loss = sum(square(stop_gradient(h) - e));
    r.commitment_loss = sum(square(h - stop_gradient(e))) * book.beta;
    return r;
}

// ---------------------------------------------------------------------------

CouplingLayer::CouplingLayer(std::vector<bool> pass_through, Rng& rng, std::size_t hidden, double out_scale) {
    for (std::size_t i = 0; i < pass_through.size(); ++i) {
        (pass_through[i] ? pass_ : transformed_).push_back(i);
    }
    if (pass_.empty() || transformed_.empty()) {
        throw DomainError("coupling mask must split dimensions into two non-empty sets");
    }
    if (hidden == 0) {
        throw DomainError("coupling hidden width must be positive");
    }
    const std::size_t a = pass_.size();
    const std::size_t b = transformed_.size();
    s_hidden = Linear(a, hidden, rng);
    s_out = Linear(hidden, b, rng);
    t_hidden = Linear(a, hidden, rng);
    t_out = Linear(hidden, b, rng);
    s_out.weight *= out_scale;
    t_out.weight *= out_scale;
}

CouplingLayer::Output CouplingLayer::apply(Tape& tape, Var x, bool invert) const {
    const Tensor& xv = x.value();
    const bool single = xv.rank() == 1;
    if ((xv.rank() != 1 && xv.rank() != 2) || xv.shape().back() != dim()) {
        throw DimensionError(fmt::format("coupling layer over {} dims got {}", dim(), shape_str(xv.shape())));
    }
    Var batch = single ? reshape(x, {1, dim()}) : x;
    Var xa = select_cols(batch, pass_);
    Var xb = select_cols(batch, transformed_);
    Var s = s_out.forward(tape, tanh(s_hidden.forward(tape, xa)));
    Var t = t_out.forward(tape, tanh(t_hidden.forward(tape, xa)));
    Var yb = invert ? (xb - t) * exp(-s) : xb * exp(s) + t;
    Var y = merge_cols(xa, pass_, yb, transformed_);
    if (single) {
        return {reshape(y, {dim()}), sum(s)};
    }
    return {y, sum(s, 1)};
}

CouplingLayer::Output CouplingLayer::forward(Tape& tape, Var x) const { return apply(tape, x, false); }

CouplingLayer::Output CouplingLayer::inverse(Tape& tape, Var y) const { return apply(tape, y, true); }

Tensor CouplingLayer::forward(const Tensor& x) const {
    Tape tape;
    return apply(tape, tape.constant(x), false).value.value();
}

Tensor CouplingLayer::inverse(const Tensor& y) const {
    Tape tape;
    return apply(tape, tape.constant(y), true).value.value();
}

void CouplingLayer::collect(ParamList& out, const std::string& prefix) {
    s_hidden.collect(out, prefix + ".s1");
    s_out.collect(out, prefix + ".s2");
    t_hidden.collect(out, prefix + ".t1");
    t_out.collect(out, prefix + ".t2");
}

std::vector<CouplingLayer> make_coupling_stack(std::size_t dim, std::size_t layers, Rng& rng, std::size_t hidden) {
    if (dim < 2) {
        throw DomainError("a coupling flow needs at least 2 dimensions");
    }
    std::vector<CouplingLayer> stack;
    stack.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<bool> mask(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            mask[i] = (i < dim / 2) == (l % 2 == 0);
        }
        stack.emplace_back(std::move(mask), rng, hidden);
    }
    return stack;
}

Var flow_log_prob(Tape& tape, std::span<const CouplingLayer> stack, Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 1 && xv.rank() != 2) {
        throw DimensionError("flow input must be [d] or [rows x d], got " + shape_str(xv.shape()));
    }
    const bool single = xv.rank() == 1;
    const double d = static_cast<double>(xv.shape().back());
    Var z = x;
    std::optional<Var> log_det;
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
        CouplingLayer::Output o = it->inverse(tape, z);
        z = o.value;
        log_det = log_det ? *log_det + o.log_det : o.log_det;
    }
    const double norm = 0.5 * d * std::log(2.0 * std::numbers::pi);
    Var base = (single ? sum(square(z)) : sum(square(z), 1)) * -0.5 - norm;
    return log_det ? base - *log_det : base;
}

// ---------------------------------------------------------------------------

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) {
        throw DomainError("noise schedule needs at least one step");
    }
    alpha_bars_.reserve(betas_.size() + 1);
    alpha_bars_.push_back(1.0);
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) {
            throw DomainError(fmt::format("beta_{} = {} is outside (0,1)", i + 1, betas_[i]));
        }
        alpha_bars_.push_back(alpha_bars_.back() * (1.0 - betas_[i]));
    }
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) {
        throw DomainError("noise schedule needs at least one step");
    }
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = beta_start + f * (beta_end - beta_start);
    }
    return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::beta(std::size_t t) const {
    if (t == 0 || t > betas_.size()) {
        throw DomainError(fmt::format("timestep {} outside [1,{}]", t, betas_.size()));
    }
    return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    if (t > betas_.size()) {
        throw DomainError(fmt::format("timestep {} outside [0,{}]", t, betas_.size()));
    }
    return alpha_bars_[t];
}

Tensor ddpm_forward_step(const Tensor& x_prev, double beta, const Tensor& eps) {
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw DomainError(fmt::format("beta must lie in (0,1], got {}", beta));
    }
    require_same_shape(x_prev, eps, "ddpm_forward_step");
    const double keep = std::sqrt(1.0 - beta);
    const double noise = std::sqrt(beta);
    Tensor out(x_prev.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = keep * x_prev[i] + noise * eps[i];
    }
    return out;
}

Tensor q_sample(const Tensor& x0, const NoiseSchedule& schedule, std::size_t t, const Tensor& eps) {
    require_same_shape(x0, eps, "q_sample");
    const double ab = schedule.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = a * x0[i] + b * eps[i];
    }
    return out;
}

Var ddpm_loss(Var eps, Var eps_pred) {
    require_same_shape(eps.value(), eps_pred.value(), "ddpm_loss");
    return mean(square(eps - eps_pred));
}

Tensor ddpm_sample(const NoisePredictor& model, const NoiseSchedule& schedule, const Shape& shape, Rng& rng) {
    Tensor x = rng.normal_tensor(shape);
    for (std::size_t t = schedule.steps(); t >= 1; --t) {
        const Tensor eps = model(x, t);
        require_same_shape(x, eps, "noise prediction");
        const double beta = schedule.beta(t);
        const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
        const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
        const double sigma = t > 1 ? std::sqrt(beta) : 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double z = t > 1 ? rng.normal() : 0.0;
            x[i] = (x[i] - coef * eps[i]) * inv_sqrt_alpha + sigma * z;
        }
    }
    return x;
}

Tensor ddim_sample(const NoisePredictor& model, const NoiseSchedule& schedule, std::span<const std::size_t> steps,
                   const Tensor& x_t) {
    if (steps.empty()) {
        throw DomainError("DDIM needs at least one timestep");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] == 0 || steps[i] > schedule.steps()) {
            throw DomainError(fmt::format("timestep {} outside [1,{}]", steps[i], schedule.steps()));
        }
        if (i > 0 && steps[i] >= steps[i - 1]) {
            throw DomainError("DDIM timesteps must be strictly descending");
        }
    }
    Tensor x = x_t;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const std::size_t t = steps[i];
        const std::size_t t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
        const Tensor eps = model(x, t);
        require_same_shape(x, eps, "noise prediction");
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = schedule.alpha_bar(t_prev);
        for (std::size_t j = 0; j < x.numel(); ++j) {
            const double x0 = (x[j] - std::sqrt(1.0 - ab) * eps[j]) / std::sqrt(ab);
            x[j] = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps[j];
        }
    }
    return x;
}

std::vector<std::size_t> ddim_timesteps(std::size_t total, std::size_t n) {
    if (n == 0 || n > total) {
        throw DomainError(fmt::format("cannot pick {} DDIM steps out of {}", n, total));
    }
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = total - (i * total) / n;
    }
    return out;
}

Tensor cfg_blend(const Tensor& eps_uncond, const Tensor& eps_cond, double w) {
    require_same_shape(eps_uncond, eps_cond, "cfg_blend");
    Tensor out(eps_uncond.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = eps_uncond[i] + w * (eps_cond[i] - eps_uncond[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor two_moons(std::size_t n, Rng& rng, double noise) {
    if (n == 0) {
        throw DomainError("two_moons needs n >= 1");
    }
    Tensor out(Shape{n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        double x = std::cos(theta);
        double y = std::sin(theta);
        if (i % 2 == 1) {
            x = 1.0 - x;
            y = 0.5 - y;
        }
        out[2 * i] = x + noise * rng.normal();
        out[2 * i + 1] = y + noise * rng.normal();
    }
    return out;
}

void write_points_csv(const std::string& path, const Tensor& points) {
    if (points.rank() != 2 || points.dim(1) != 2) {
        throw DimensionError("points must be [n x 2], got " + shape_str(points.shape()));
    }
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << "x,y\n";
    for (std::size_t i = 0; i < points.dim(0); ++i) {
        out << fmt::format("{:.17g},{:.17g}\n", points[2 * i], points[2 * i + 1]);
    }
}

}  // namespace deskml
