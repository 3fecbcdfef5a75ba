// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "deskml/alignment.hpp"
#include "deskml/bpe.hpp"
#include "deskml/classic.hpp"
#include "deskml/efficiency.hpp"
#include "deskml/experiments.hpp"
#include "deskml/generative.hpp"
#include "deskml/gradcheck.hpp"
#include "deskml/layers.hpp"
#include "deskml/losses.hpp"
#include "deskml/transformer.hpp"

using namespace deskml;

namespace {

class Gate {
  public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (!ok) {
            failures_.push_back(what);
        }
    }
    void near(double actual, double expected, double tol, const std::string& what) {
        expect(std::abs(actual - expected) <= tol, fmt::format("{}: got {:.10g}, want {:.10g} ± {:g}", what, actual,
                                                               expected, tol));
    }
    void grad(const GradCheckReport& r, const std::string& what) {
        expect(r.passed(), fmt::format("{}: max rel diff {:.3g}", what, r.max_rel_diff));
    }

    std::size_t checks() const { return checks_; }
    const std::vector<std::string>& failures() const { return failures_; }

  private:
    std::size_t checks_ = 0;
    std::vector<std::string> failures_;
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;
    std::function<void(Gate&)> body;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor random_in(Rng& rng, const Shape& s) { return rng.uniform_tensor(s, -2.0, 2.0); }

void grad_instances(Gate& g, const std::string& what, const ScalarFn& f, const std::vector<Shape>& shapes, Rng& rng,
                    int instances = 5) {
    for (int n = 0; n < instances; ++n) {
        std::vector<Tensor> point;
        for (const Shape& s : shapes) {
            point.push_back(random_in(rng, s));
        }
        g.grad(grad_check(f, point), fmt::format("{} #{}", what, n));
    }
}

// ---------------------------------------------------------------------------

void book_numbers(Gate& g) {
    Tape t;
    const Tensor w = activation(t.constant(Tensor::vector({2, 1})), Activation::softmax).value();
    g.near(w[0], 0.7311, 5e-3, "softmax([2,1])[0]");
    g.near(w[1], 0.2689, 5e-3, "softmax([2,1])[1]");

    const std::vector<std::size_t> target{0};
    const double ce =
        cross_entropy_loss(t.constant(Tensor::matrix({{std::log(0.001), std::log(0.999)}})), target).item();
    g.near(ce, 6.908, 0.05, "cross-entropy at 0.001");

    g.near(vanishing_factor(0.9, 30), 0.0424, 5e-4, "0.9^30");
    g.near(vanishing_factor(0.8, 10), 0.1074, 5e-4, "0.8^10");
    g.near(vanishing_factor(0.8, 30), 0.00124, 5e-6, "0.8^30");
    const std::string notes = read_text(std::string(DESKML_DOCS_DIR) + "/numerics.md");
    g.expect(notes.find("0.00124") != std::string::npos && notes.find("0.015") != std::string::npos,
             "docs/numerics.md records the 0.8^30 erratum");
    g.expect(notes.find("17,536") != std::string::npos && notes.find("32k") != std::string::npos,
             "docs/numerics.md records the separable count divergence");

    g.expect(conv_param_count(128, 128, 3, false) == 147456, "standard conv params");
    g.expect(conv_param_count(128, 128, 3, true) == 17536, "separable conv params");
    g.expect(vit_patch_count(224, 224, 16) == 196, "ViT patch count");
    const MlpParamCount mlp = mlp_param_count(150000, 1000);
    g.expect(mlp.weights == 150000000 && mlp.biases == 1000, "MLP parameter count");

    ScalingCoefficients c;
    c.phi = 1.0;
    const ScaleFactors f = compound_factors(c);
    g.expect(f.depth == 1.2 && f.width == 1.1 && f.resolution == 1.15, "compound factors at phi=1");
    g.expect(chinchilla_tokens(70e9, 20) == 1.4e12, "chinchilla tokens");

    const bpe::MergeTable table = bpe::train(bpe::word_counts("low lowest newer"), 3);
    const std::vector<bpe::MergeRule> want{{"l", "o"}, {"lo", "w"}, {"e", "r"}};
    g.expect(table.merges == want, "BPE worked example merges");

    const Mask m = causal_mask(4);
    bool mask_ok = true;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            mask_ok = mask_ok && m.allowed(i, j) == (j <= i);
        }
    }
    g.expect(mask_ok, "causal_mask(4)");
}

void gradient_suite(Gate& g) {
    Rng rng(2024);
    grad_instances(
        g, "linear",
        [](Tape&, std::span<const Var> in) { return sum(tanh(linear(in[0], in[1], in[2]))); },
        {{3, 4}, {2, 4}, {2}}, rng);
    grad_instances(
        g, "conv2d",
        [](Tape&, std::span<const Var> in) { return sum(square(conv2d(in[0], in[1], in[2], {2, 1, 1}))); },
        {{2, 5, 5}, {3, 2, 3, 3}, {3}}, rng);
    grad_instances(
        g, "grouped conv2d",
        [](Tape&, std::span<const Var> in) { return sum(square(conv2d(in[0], in[1], in[2], {1, 0, 2}))); },
        {{4, 4, 4}, {2, 2, 2, 2}, {2}}, rng);
    for (int n = 0; n < 5; ++n) {
        std::vector<double> v(32);
        const auto perm = rng.sample_without_replacement(32, 32);
        for (std::size_t i = 0; i < 32; ++i) {
            v[i] = 0.1 * static_cast<double>(perm[i]);
        }
        g.grad(grad_check([](Tape&, std::span<const Var> in) { return sum(square(max_pool2d(in[0], 2, 2))); },
                          {Tensor(Shape{2, 4, 4}, v)}),
               fmt::format("max_pool2d #{}", n));
    }
    for (NormMode mode : {NormMode::layer, NormMode::batch}) {
        for (int n = 0; n < 5; ++n) {
            Norm norm(3, mode);
            norm.gamma = rng.uniform_tensor({3}, 0.5, 1.5);
            norm.beta = rng.uniform_tensor({3}, -1, 1);
            Tensor x = random_in(rng, {4, 3});
            const Tensor w = rng.normal_tensor({4, 3});
            std::vector<Tensor*> ps{&x, &norm.gamma, &norm.beta};
            g.grad(grad_check_params([&](Tape& t) { return sum(norm.forward(t, t.param(x), true) * t.constant(w)); },
                                     ps),
                   fmt::format("{} norm #{}", mode == NormMode::layer ? "layer" : "batch", n));
        }
    }
    const Mask mask = causal_mask(3);
    grad_instances(
        g, "attention",
        [&mask](Tape& t, std::span<const Var> in) {
            return sum(scaled_dot_product_attention(in[0], in[1], in[2], &mask) *
                       t.constant(Tensor::matrix({{1, -1}, {0.5, 2}, {-1, 0.3}})));
        },
        {{3, 4}, {3, 4}, {3, 2}}, rng);
    {
        MultiHeadAttention mha(AttentionConfig{4, 2, 8}, rng);
        for (int n = 0; n < 5; ++n) {
            Tensor x = random_in(rng, {3, 4});
            const Tensor w = rng.normal_tensor({3, 4});
            std::vector<Tensor*> ps{&x, &mha.wq, &mha.wk, &mha.wv, &mha.wo};
            g.grad(grad_check_params(
                       [&](Tape& t) { return sum(mha.self_attention(t, t.param(x), &mask) * t.constant(w)); }, ps),
                   fmt::format("multi-head attention #{}", n));
        }
    }
    grad_instances(
        g, "ffn", [](Tape&, std::span<const Var> in) { return sum(square(ffn(in[0], in[1], in[2], in[3], in[4]))); },
        {{3, 2}, {4, 2}, {4}, {2, 4}, {2}}, rng);
    for (int n = 0; n < 5; ++n) {
        GptConfig cfg;
        cfg.vocab = 5;
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.n_layers = 2;
        cfg.d_ff = 16;
        cfg.max_len = 8;
        GptModel model(cfg, rng);
        std::vector<std::size_t> ids(5), targets(5);
        for (std::size_t i = 0; i < 5; ++i) {
            ids[i] = rng.below(5);
            targets[i] = rng.below(5);
        }
        ParamList ps = model.parameters();
        g.grad(grad_check_params([&](Tape& t) { return model.loss(t, ids, targets); }, tensors_of(ps)),
               fmt::format("2-layer GPT #{}", n));
    }
    const Tensor eps = Tensor::vector({0.3, -1.1, 0.8});
    grad_instances(
        g, "vae reparameterize",
        [&eps](Tape&, std::span<const Var> in) { return sum(square(vae_reparameterize(in[0], in[1], eps))); },
        {{3}, {3}}, rng);
    grad_instances(
        g, "vae kl", [](Tape&, std::span<const Var> in) { return vae_kl(in[0], in[1]); }, {{3, 2}, {3, 2}}, rng);
    {
        std::vector<CouplingLayer> stack = make_coupling_stack(2, 2, rng, 4);
        ParamList ps;
        for (std::size_t i = 0; i < stack.size(); ++i) {
            stack[i].collect(ps, fmt::format("flow{}", i));
        }
        for (int n = 0; n < 5; ++n) {
            Tensor x = rng.normal_tensor({3, 2});
            std::vector<Tensor*> targets = tensors_of(ps);
            targets.push_back(&x);
            g.grad(grad_check_params([&](Tape& t) { return sum(flow_log_prob(t, stack, t.param(x))); }, targets),
                   fmt::format("coupling flow #{}", n));
        }
    }
    const std::vector<std::size_t> cls{2, 0, 1};
    grad_instances(
        g, "cross-entropy", [&cls](Tape&, std::span<const Var> in) { return cross_entropy_loss(in[0], cls); },
        {{3, 4}}, rng);
    grad_instances(
        g, "mse", [](Tape&, std::span<const Var> in) { return mse(in[0], in[1]); }, {{2, 3}, {2, 3}}, rng);
    const Tensor bits = Tensor::vector({1, 0, 1, 1});
    grad_instances(
        g, "binary cross-entropy",
        [&bits](Tape&, std::span<const Var> in) { return binary_cross_entropy(bits, sigmoid(in[0])); }, {{4}}, rng);
    const Tensor teacher = Tensor::matrix({{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}});
    grad_instances(
        g, "distillation",
        [&teacher](Tape&, std::span<const Var> in) { return distillation_loss(teacher, in[0], 2.0); }, {{2, 3}},
        rng);
    grad_instances(
        g, "clip contrastive", [](Tape&, std::span<const Var> in) { return clip_contrastive_loss(in[0]); }, {{3, 3}},
        rng);
    grad_instances(
        g, "gan",
        [](Tape&, std::span<const Var> in) {
            const GanLosses l = gan_losses(sigmoid(in[0]), sigmoid(in[1]));
            return l.discriminator + l.generator;
        },
        {{4}, {4}}, rng);
    grad_instances(
        g, "entropy minimisation", [](Tape&, std::span<const Var> in) { return entropy_min_loss(in[0]); }, {{2, 4}},
        rng);
    const PpoConfig ppo{0.2, 0.3};
    const Tensor adv = Tensor::vector({1.0, -0.5, 2.0});
    for (int n = 0; n < 5; ++n) {
        const std::vector<Tensor> point{rng.uniform_tensor({3}, 0.3, 2.5), random_in(rng, {3}),
                                        random_in(rng, {3})};
        bool near_kink = false;
        for (double r : point[0].data()) {
            near_kink = near_kink || std::abs(r - 0.8) < 1e-3 || std::abs(r - 1.2) < 1e-3;
        }
        if (near_kink) {
            --n;
            continue;
        }
        g.grad(grad_check([&](Tape&, std::span<const Var> in) { return ppo_objective(in[0], adv, in[1], in[2], ppo); },
                          point),
               fmt::format("ppo objective #{}", n));
    }
    const DpoConfig dpo{0.7};
    grad_instances(
        g, "dpo", [&dpo](Tape&, std::span<const Var> in) { return dpo_loss(in[0], in[1], dpo); }, {{4}, {4}}, rng);
    grad_instances(
        g, "reward pairwise", [](Tape&, std::span<const Var> in) { return reward_pairwise_loss(in[0], in[1]); },
        {{4}, {4}}, rng);
    const QuantParams qp = calibrate_affine(-1.0, 2.0, 5);
    const Tensor qw = rng.normal_tensor({12});
    for (int n = 0; n < 5; ++n) {
        Tensor x = rng.uniform_tensor({12}, -3.0, 4.0);
        for (double& v : x.data()) {
            if (std::abs(v - qp.range_lo()) < 1e-3 || std::abs(v - qp.range_hi()) < 1e-3) {
                v += 0.01;
            }
        }
        g.grad(grad_check_surrogate(
                   [&](Tape& t, std::span<const Var> in) { return sum(fake_quantize(in[0], qp) * t.constant(qw)); },
                   [&](Tape& t, std::span<const Var> in) {
                       return sum(clamp(in[0], qp.range_lo(), qp.range_hi()) * t.constant(qw));
                   },
                   {x}),
               fmt::format("fake quantize #{}", n));
    }
}

double brute_force_inertia(const Tensor& pts, std::size_t k) {
    const std::size_t n = pts.dim(0), d = pts.dim(1);
    std::vector<std::size_t> a(n, 0);
    double best = INFINITY;
    while (true) {
        std::vector<std::size_t> counts(k, 0);
        for (auto j : a) {
            ++counts[j];
        }
        if (std::none_of(counts.begin(), counts.end(), [](std::size_t c) { return c == 0; })) {
            std::vector<double> mean(k * d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < d; ++c) {
                    mean[a[i] * d + c] += pts.at(i, c) / static_cast<double>(counts[a[i]]);
                }
            }
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = pts.at(i, c) - mean[a[i] * d + c];
                    total += diff * diff;
                }
            }
            best = std::min(best, total);
        }
        std::size_t pos = 0;
        while (pos < n && ++a[pos] == k) {
            a[pos++] = 0;
        }
        if (pos == n) {
            return best;
        }
    }
}

void oracle_equivalence(Gate& g) {
    Rng data(3);
    int optimal = 0, below = 0;
    const int trials = 100;
    for (int seed = 0; seed < trials; ++seed) {
        const std::size_t n = 4 + static_cast<std::size_t>(seed) % 5;
        const std::size_t k = 1 + static_cast<std::size_t>(seed) % 3;
        const Tensor centres = data.normal_tensor({k, 2}, 5.0);
        Tensor pts({n, 2});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 2; ++c) {
                pts.at(i, c) = centres.at(i % k, c) + 0.5 * data.normal();
            }
        }
        Rng rng(static_cast<std::uint64_t>(seed));
        const double found = kmeans_inertia(kmeans_fit(pts, k, rng), pts);
        const double best = brute_force_inertia(pts, k);
        optimal += found <= best + 1e-9 ? 1 : 0;
        below += found < best - 1e-9 ? 1 : 0;
    }
    g.expect(optimal * 10 >= trials * 8, fmt::format("k-means optimal on {}/{} seeds", optimal, trials));
    g.expect(below == 0, "k-means never below the brute-force optimum");

    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<CouplingLayer> stack = make_coupling_stack(2, 1 + trial % 4, rng);
        for (auto& l : stack) {
            l.s_out.weight *= 8.0;
        }
        const Tensor x = rng.normal_tensor({2});
        Tape t;
        Var v = t.constant(x);
        double analytic = 0.0;
        for (const auto& l : stack) {
            const CouplingLayer::Output o = l.forward(t, v);
            analytic += o.log_det.item();
            v = o.value;
        }
        auto f = [&](Tensor p) {
            for (const auto& l : stack) {
                p = l.forward(p);
            }
            return p;
        };
        const double h = 1e-6;
        double j[2][2];
        for (std::size_t c = 0; c < 2; ++c) {
            Tensor up = x, down = x;
            up[c] += h;
            down[c] -= h;
            const Tensor fu = f(up), fd = f(down);
            for (std::size_t r = 0; r < 2; ++r) {
                j[r][c] = (fu[r] - fd[r]) / (2 * h);
            }
        }
        g.near(analytic, std::log(std::abs(j[0][0] * j[1][1] - j[0][1] * j[1][0])), 1e-4,
               fmt::format("coupling log-det #{}", trial));
    }

    for (int trial = 0; trial < 3; ++trial) {
        const Tensor mu = rng.normal_tensor({2});
        const Tensor lv = rng.uniform_tensor({2}, -1, 1);
        Tape t;
        const double closed = vae_kl(t.constant(mu), t.constant(lv)).item();
        const std::size_t n = 200000;
        double m = 0.0, m2 = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            double lr = 0.0;
            for (std::size_t d = 0; d < 2; ++d) {
                const double sd = std::exp(lv[d] / 2);
                const double e = rng.normal();
                const double z = mu[d] + sd * e;
                lr += -0.5 * e * e - std::log(sd) + 0.5 * z * z;
            }
            m += lr;
            m2 += lr * lr;
        }
        m /= static_cast<double>(n);
        const double se = std::sqrt((m2 / static_cast<double>(n) - m * m) / static_cast<double>(n));
        g.near(m, closed, 3 * se, fmt::format("vae kl Monte-Carlo #{}", trial));
    }

    for (const QuantParams& qp : {calibrate_symmetric(2.5), calibrate_affine(-2.5, 2.5), calibrate_affine(-0.7, 5.0, 4)}) {
        const Tensor probes = rng.uniform_tensor({10000}, qp.range_lo(), qp.range_hi());
        const Tensor back = dequantize(quantize(probes, qp), probes.shape(), qp);
        double worst = 0.0;
        for (std::size_t i = 0; i < probes.numel(); ++i) {
            worst = std::max(worst, std::abs(back[i] - probes[i]));
        }
        g.expect(worst <= qp.scale / 2 + 1e-12,
                 fmt::format("quantization round trip {:.6g} > scale/2 {:.6g}", worst, qp.scale / 2));
    }
}

void dynamics(Gate& g) {
    Rng rng(5);
    int increases = 0;
    for (int triple = 0; triple < 1000; ++triple) {
        const std::size_t n = 5 + rng.below(30);
        Tensor w({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                w.at(i, j) = w.at(j, i) = rng.normal();
            }
        }
        const HopfieldNet net(w, rng.normal_tensor({n}, 0.5));
        const BipolarState s = random_bipolar(n, rng);
        const std::vector<std::size_t> order = rng.sample_without_replacement(n, n);
        increases += hopfield_energy(net, hopfield_update(net, s, order)) > hopfield_energy(net, s) + 1e-12 ? 1 : 0;
    }
    g.expect(increases == 0, fmt::format("Hopfield energy rose on {} of 1000 sweeps", increases));

    HopfieldRunConfig hop;
    const HopfieldRunResult r = run_hopfield(hop);
    g.expect(r.recall_rate >= 0.95, fmt::format("Hopfield recall {:.3f} over {} trials, need >= 0.95", r.recall_rate,
                                                hop.trials));
    g.expect(r.energy_monotone, "Hopfield energy monotone during recall");

    int rises = 0;
    for (int set = 0; set < 100; ++set) {
        const std::size_t k = 1 + static_cast<std::size_t>(set) % 5;
        const Tensor pts = rng.normal_tensor({50, 2}, 3.0);
        const KMeansState st = kmeans_fit(pts, k, rng);
        for (std::size_t i = 1; i < st.inertia_history.size(); ++i) {
            rises += st.inertia_history[i] > st.inertia_history[i - 1] + 1e-12 ? 1 : 0;
        }
    }
    g.expect(rises == 0, fmt::format("k-means inertia rose {} times", rises));
}

void training_smoke(Gate& g) {
    int solved = 0;
    double worst_linear = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        XorConfig cfg;
        cfg.seed = seed;
        const XorResult r = run_xor(cfg);
        solved += r.mlp_accuracy == 1.0 ? 1 : 0;
        worst_linear = std::max(worst_linear, r.linear_accuracy);
    }
    g.expect(solved >= 9, fmt::format("XOR MLP solved {}/10 seeds", solved));
    g.expect(worst_linear <= 0.75, fmt::format("XOR linear-only accuracy reached {}", worst_linear));

    CharGptConfig gpt;
    gpt.stop_below_fraction = 0.6;
    const CharGptResult cg = run_char_gpt(gpt, toy_corpus(10 * 1024));
    g.expect(cg.below_60pct_step.has_value() && *cg.below_60pct_step <= 2000,
             fmt::format("char-GPT loss {:.3f} -> {:.3f} did not fall below 60% within 2000 steps", cg.initial_loss,
                         cg.final_loss));

    const Vae2dResult vae = run_vae2d({});
    bool vae_down = vae.epoch_loss.size() >= 2;
    for (std::size_t i = 1; i < vae.epoch_loss.size(); ++i) {
        vae_down = vae_down && vae.epoch_loss[i] < vae.epoch_loss[i - 1];
    }
    g.expect(vae_down, "VAE epoch-average loss not monotonically decreasing");

    Ddpm2dConfig ddpm;
    ddpm.samples = 500;
    const Ddpm2dResult dr = run_ddpm2d(ddpm);
    g.expect(dr.samples.dim(0) == 500 && dr.mean_norm < 0.3,
             fmt::format("DDPM point-mass mean norm {:.4f}", dr.mean_norm));

    DpoToyConfig dpo;
    dpo.steps = 200;
    const DpoToyResult dp = train_dpo_toy(dpo);
    bool rising = dp.margins.size() == 201;
    for (std::size_t i = 1; i < dp.margins.size(); ++i) {
        rising = rising && dp.margins[i] > dp.margins[i - 1];
    }
    g.expect(rising, "DPO margin not monotonically rising over 200 steps");
}

void structural(Gate& g) {
    Rng rng(6);
    GptConfig cfg;
    cfg.vocab = 7;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.d_ff = 16;
    cfg.max_len = 12;
    const GptModel model(cfg, rng);
    double leak = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::size_t> ids(10);
        for (auto& id : ids) {
            id = rng.below(cfg.vocab);
        }
        const Tensor base = model.logits(ids);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            auto changed = ids;
            changed[j] = (changed[j] + 1) % cfg.vocab;
            const Tensor other = model.logits(changed);
            for (std::size_t i = 0; i < j; ++i) {
                for (std::size_t c = 0; c < cfg.vocab; ++c) {
                    leak = std::max(leak, std::abs(base.at(i, c) - other.at(i, c)));
                }
            }
        }
    }
    g.expect(leak <= 1e-12, fmt::format("GPT causality leak {:.3g}", leak));

    double shift_err = 0.0;
    for (int i = 0; i < 20; ++i) {
        Tape t;
        const Tensor s = rng.normal_tensor({4, 4}, 2.0);
        Tensor shifted = s;
        for (std::size_t r = 0; r < 4; ++r) {
            const double c = rng.uniform(-30, 30);
            for (std::size_t col = 0; col < 4; ++col) {
                shifted.at(r, col) += c;
            }
        }
        const Tensor a = activation(t.constant(s), Activation::softmax).value();
        const Tensor b = activation(t.constant(shifted), Activation::softmax).value();
        for (std::size_t k = 0; k < a.numel(); ++k) {
            shift_err = std::max(shift_err, std::abs(a[k] - b[k]));
        }
    }
    g.expect(shift_err <= 1e-12, fmt::format("softmax shift invariance error {:.3g}", shift_err));

    double collapse_err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Linear l1(3, 4, rng);
        Linear l2(4, 2, rng);
        l1.bias = rng.normal_tensor({4});
        l2.bias = rng.normal_tensor({2});
        const Tensor w = kernels::matmul(l2.weight, l1.weight);
        Tensor b = kernels::matmul(l2.weight, l1.bias.reshaped({4, 1})).reshaped({2});
        b += l2.bias;
        const Linear merged(w, b);
        Tape t;
        Var x = t.constant(rng.normal_tensor({5, 3}));
        const Tensor deep = l2.forward(t, l1.forward(t, x)).value();
        const Tensor flat = merged.forward(t, x).value();
        for (std::size_t k = 0; k < deep.numel(); ++k) {
            collapse_err = std::max(collapse_err, std::abs(deep[k] - flat[k]));
        }
    }
    g.expect(collapse_err <= 1e-12, fmt::format("linear collapse error {:.3g}", collapse_err));

    double inv_err = 0.0;
    for (std::size_t d = 2; d <= 8; ++d) {
        for (std::size_t layers = 1; layers <= 4; ++layers) {
            const std::vector<CouplingLayer> stack = make_coupling_stack(d, layers, rng);
            const Tensor x = rng.normal_tensor({5, d}, 2.0);
            Tensor y = x;
            for (const auto& l : stack) {
                y = l.forward(y);
            }
            for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
                y = it->inverse(y);
            }
            for (std::size_t i = 0; i < x.numel(); ++i) {
                inv_err = std::max(inv_err, std::abs(y[i] - x[i]));
            }
        }
    }
    g.expect(inv_err < 1e-10, fmt::format("coupling inverse error {:.3g}", inv_err));

    bool gate_ok = true;
    for (int i = 0; i < 200; ++i) {
        const std::size_t e = 1 + rng.below(10);
        const std::size_t k = 1 + rng.below(e);
        const Tensor gates = moe_gate(rng.normal_tensor({e}, 3.0), k);
        double s = 0.0;
        std::size_t nz = 0;
        for (double v : gates.data()) {
            gate_ok = gate_ok && v >= 0.0;
            s += v;
            nz += v != 0.0 ? 1 : 0;
        }
        gate_ok = gate_ok && std::abs(s - 1.0) <= 1e-12 && nz <= k;
    }
    g.expect(gate_ok, "moe_gate output not a valid k-sparse distribution");

    const std::string corpus = toy_corpus(2048);
    const bpe::MergeTable table = bpe::train(bpe::word_counts(corpus), 40);
    const std::vector<std::string> samples{"the quick brown fox", corpus.substr(0, 300), "zzz unseen wørds"};
    bool bpe_ok = true;
    for (const std::string& s : samples) {
        std::istringstream ws(s);
        std::string norm, word;
        while (ws >> word) {
            norm += (norm.empty() ? "" : " ") + word;
        }
        bpe_ok = bpe_ok && bpe::decode(bpe::encode(s, table)) == norm;
    }
    g.expect(bpe_ok, "BPE encode/decode round trip");

    bool patch_ok = true;
    for (std::size_t patch : {1, 2, 3, 6}) {
        const Tensor img = rng.normal_tensor({3, 6, 12});
        patch_ok = patch_ok && vit_unpatchify(vit_patchify(img, patch), 3, 6, 12, patch) == img;
    }
    g.expect(patch_ok, "patchify/unpatchify round trip");
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "pinned reference numbers", 1.0, book_numbers},
        {2, "gradient suite", 30.0, gradient_suite},
        {3, "oracle equivalence", 60.0, oracle_equivalence},
        {4, "dynamics properties", 60.0, dynamics},
        {5, "training smoke experiments", 300.0, training_smoke},
        {6, "structural invariants", 10.0, structural},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        Gate g;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.body(g);
        } catch (const std::exception& e) {
            g.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        g.expect(secs <= c.limit_seconds, fmt::format("took {:.2f} s, limit {:.0f} s", secs, c.limit_seconds));
        const bool ok = g.failures().empty();
        failed += ok ? 0 : 1;
        std::cout << fmt::format("criterion {}: {} {} ({} checks, {:.2f} s)", c.id, ok ? "PASS" : "FAIL", c.name,
                                 g.checks(), secs)
                  << std::endl;
        for (const std::string& f : g.failures()) {
            std::cout << "    " << f << std::endl;
        }
    }
    return failed == 0 ? 0 : 1;
}
