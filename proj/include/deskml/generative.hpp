#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deskml/layers.hpp"

namespace deskml {

inline constexpr double kDefaultCorruptSigma = 0.1;

/// x + sigma·N(0, 1) elementwise.
Tensor corrupt_gaussian(const Tensor& x, Rng& rng, double sigma = kDefaultCorruptSigma);

// ---------------------------------------------------------------------------
// VAE

/// z = μ + exp(logvar/2)·ε. ε is a constant; gradients reach μ and logvar only.
Var vae_reparameterize(Var mu, Var logvar, const Tensor& eps);
Var vae_reparameterize(Var mu, Var logvar, Rng& rng);

/// 0.5·Σ(exp(logvar) + μ² − 1 − logvar). For a batch [rows x d] the sum runs
/// over d and the result is averaged over rows.
Var vae_kl(Var mu, Var logvar);

/// Negated ELBO: recon_loss + kl_weight·KL.
Var vae_elbo_loss(Var recon_loss, Var mu, Var logvar, double kl_weight = 1.0);

// ---------------------------------------------------------------------------
// Vector quantisation

struct Codebook {
    Codebook() = default;
    Codebook(Tensor entries, double beta = 0.25);

    std::size_t size() const { return entries.dim(0); }
    std::size_t dim() const { return entries.dim(1); }

    Tensor entries;  // [K x d]
    double beta = 0.25;
};

struct VqResult {
    std::size_t index = 0;
    Tensor entry;
    Var quantized;        // value e_k, gradient passed straight to h
    Var codebook_loss;    // ‖sg[h] − e_k‖²
    Var commitment_loss;  // β‖h − sg[e_k]‖²
};

/// Nearest codebook entry to h [d] in Euclidean distance; ties go to the
/// lowest index.
VqResult vq_quantize(Tape& tape, Var h, const Codebook& book);

// ---------------------------------------------------------------------------
// Affine coupling flow

/// y_a = x_a, y_b = x_b·exp(s(x_a)) + t(x_a), with s and t small tanh MLPs.
/// Works on a single point [d] or a batch [rows x d].
class CouplingLayer {
  public:
    static constexpr std::size_t kDefaultHidden = 16;

    struct Output {
        Var value;
        Var log_det;  // Σ s(x_a); scalar for a single point, [rows] for a batch
    };

    CouplingLayer() = default;
    /// pass_through[i] marks dimension i as part of x_a.
    CouplingLayer(std::vector<bool> pass_through, Rng& rng, std::size_t hidden = kDefaultHidden,
                  double out_scale = 0.1);

    Output forward(Tape& tape, Var x) const;
    /// Inverse map; log_det is that of the forward map at the recovered x.
    Output inverse(Tape& tape, Var y) const;
    Tensor inverse(const Tensor& y) const;
    Tensor forward(const Tensor& x) const;

    std::size_t dim() const { return pass_.size() + transformed_.size(); }
    void collect(ParamList& out, const std::string& prefix);

    Linear s_hidden, s_out;
    Linear t_hidden, t_out;

  private:
    Output apply(Tape& tape, Var x, bool invert) const;

    std::vector<std::size_t> pass_;
    std::vector<std::size_t> transformed_;
};

/// Alternating half masks for a d-dimensional stack of n layers.
std::vector<CouplingLayer> make_coupling_stack(std::size_t dim, std::size_t layers, Rng& rng,
                                               std::size_t hidden = CouplingLayer::kDefaultHidden);

/// Log density of x under z₀ ~ N(0, I) pushed through the stack (layer 0
/// applied first): log p₀(f⁻¹(x)) − Σ log|det ∂f_i|.
Var flow_log_prob(Tape& tape, std::span<const CouplingLayer> stack, Var x);

// ---------------------------------------------------------------------------
// Diffusion

class NoiseSchedule {
  public:
    NoiseSchedule() = default;
    explicit NoiseSchedule(std::vector<double> betas);
    static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);

    std::size_t steps() const { return betas_.size(); }
    /// t is 1-based; alpha_bar(0) = 1.
    double beta(std::size_t t) const;
    double alpha(std::size_t t) const { return 1.0 - beta(t); }
    double alpha_bar(std::size_t t) const;

  private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

/// √(1−β)·x_prev + √β·eps
Tensor ddpm_forward_step(const Tensor& x_prev, double beta, const Tensor& eps);
/// Closed-form jump to step t: √ᾱ_t·x0 + √(1−ᾱ_t)·eps
Tensor q_sample(const Tensor& x0, const NoiseSchedule& schedule, std::size_t t, const Tensor& eps);
/// Mean squared error between true and predicted noise.
Var ddpm_loss(Var eps, Var eps_pred);

/// ε_θ(x_t, t) for a batch x_t; t is 1-based.
using NoisePredictor = std::function<Tensor(const Tensor& x_t, std::size_t t)>;

/// Ancestral sampling from x_T ~ N(0, I) of the given shape.
Tensor ddpm_sample(const NoisePredictor& model, const NoiseSchedule& schedule, const Shape& shape, Rng& rng);
/// Deterministic (η = 0) sampling over a strictly descending subset of
/// timesteps, starting from x_T.
Tensor ddim_sample(const NoisePredictor& model, const NoiseSchedule& schedule, std::span<const std::size_t> steps,
                   const Tensor& x_t);
/// Evenly spaced descending subset of n steps from T down to 1.
std::vector<std::size_t> ddim_timesteps(std::size_t total, std::size_t n);

/// eps_u + w·(eps_c − eps_u)
Tensor cfg_blend(const Tensor& eps_uncond, const Tensor& eps_cond, double w = 1.0);

// ---------------------------------------------------------------------------
// Toy 2-D data

/// Two interleaved half circles, [n x 2], with Gaussian jitter.
Tensor two_moons(std::size_t n, Rng& rng, double noise = 0.1);
/// Writes rows of a [n x 2] tensor as "x,y" lines under a header.
void write_points_csv(const std::string& path, const Tensor& points);

}  // namespace deskml
