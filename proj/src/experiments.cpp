#include "deskml/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "deskml/classic.hpp"
#include "deskml/efficiency.hpp"
#include "deskml/generative.hpp"
#include "deskml/losses.hpp"
#include "deskml/optim.hpp"
#include "deskml/transformer.hpp"

namespace deskml {

namespace {

std::vector<Tensor> grads_for(const Tape& tape, const ParamList& params) {
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const NamedParam& p : params) {
        std::optional<Tensor> g = tape.param_grad(*p.tensor);
        grads.push_back(g ? std::move(*g) : Tensor(p.tensor->shape(), 0.0));
    }
    return grads;
}

void apply_step(Optimizer& opt, const Tape& tape, const ParamList& params) {
    const std::vector<Tensor*> tensors = tensors_of(params);
    const std::vector<Tensor> grads = grads_for(tape, params);
    opt.step(tensors, grads);
}

OptimizerConfig adam(double lr) {
    OptimizerConfig c;
    c.kind = OptimizerKind::adam;
    c.lr = lr;
    return c;
}

nlohmann::ordered_json tensor_json(const Tensor& t) {
    if (t.rank() != 2) {
        return t.values();
    }
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < t.dim(0); ++r) {
        rows.push_back(t.row(r).values());
    }
    return rows;
}

}  // namespace

std::string Metrics::csv() const {
    std::string out = "step,metric,value\n";
    for (const Row& r : rows) {
        out += fmt::format("{},{},{:.17g}\n", r.step, r.metric, r.value);
    }
    return out;
}

void Metrics::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream csv_out(dir / "metrics.csv", std::ios::binary);
    std::ofstream json_out(dir / "summary.json", std::ios::binary);
    if (!csv_out || !json_out) {
        throw Error("cannot write metrics under " + dir.string());
    }
    csv_out << csv();
    json_out << summary.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// XOR

namespace {

const Tensor kXorInputs = Tensor::matrix({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
const Tensor kXorTargets = Tensor(Shape{4, 1}, std::vector<double>{0, 1, 1, 0});

double accuracy(const Tensor& probs) {
    double hits = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        hits += ((probs[i] >= 0.5) == (kXorTargets[i] >= 0.5)) ? 1.0 : 0.0;
    }
    return hits / 4.0;
}

struct XorNet {
    Linear hidden;
    Linear out;
    bool nonlinear;

    Var forward(Tape& tape) const {
        Var h = hidden.forward(tape, tape.constant(kXorInputs));
        if (nonlinear) {
            h = tanh(h);
        }
        return sigmoid(out.forward(tape, h));
    }
    ParamList params() {
        ParamList p;
        hidden.collect(p, "hidden");
        out.collect(p, "out");
        return p;
    }
};

}  // namespace

XorResult run_xor(const XorConfig& cfg) {
    Rng rng(cfg.seed);
    Rng lin_rng = rng.split();
    Rng mlp_rng = rng.split();
    XorNet nets[2] = {
        {Linear(2, cfg.hidden, lin_rng), Linear(cfg.hidden, 1, lin_rng), false},
        {Linear(2, cfg.hidden, mlp_rng), Linear(cfg.hidden, 1, mlp_rng), true},
    };
    const char* names[2] = {"linear", "mlp"};
    XorResult res;
    res.mlp_solved_at = cfg.steps + 1;
    double final_acc[2] = {0.0, 0.0};
    for (int which = 0; which < 2; ++which) {
        XorNet& net = nets[which];
        ParamList params = net.params();
        Optimizer opt(adam(cfg.lr));
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            Tape tape;
            Var probs = net.forward(tape);
            Var loss = binary_cross_entropy(kXorTargets, probs);
            tape.backward(loss);
            apply_step(opt, tape, params);
            if (step % 100 == 0) {
                res.metrics.log(step, fmt::format("{}_loss", names[which]), loss.item());
                res.metrics.log(step, fmt::format("{}_accuracy", names[which]), accuracy(probs.value()));
            }
            if (which == 1 && res.mlp_solved_at > cfg.steps) {
                Tape probe;
                if (accuracy(net.forward(probe).value()) == 1.0) {
                    res.mlp_solved_at = step + 1;
                }
            }
        }
        Tape tape;
        final_acc[which] = accuracy(net.forward(tape).value());
    }
    res.linear_accuracy = final_acc[0];
    res.mlp_accuracy = final_acc[1];
    res.metrics.summary["experiment"] = "xor";
    res.metrics.summary["seed"] = cfg.seed;
    res.metrics.summary["steps"] = cfg.steps;
    res.metrics.summary["linear_accuracy"] = res.linear_accuracy;
    res.metrics.summary["mlp_accuracy"] = res.mlp_accuracy;
    res.metrics.summary["mlp_solved_at"] = res.mlp_solved_at;
    return res;
}

// ---------------------------------------------------------------------------
// Character-level GPT

std::string toy_corpus(std::size_t bytes) {
    static const char* lines[] = {
        "the quick brown fox jumps over the lazy dog. ",
        "a small model learns to predict the next character. ",
        "the cat sat on the mat and the dog sat on the log. ",
        "attention lets every position look back at the past. ",
    };
    std::string out;
    std::size_t i = 0;
    while (out.size() < bytes) {
        out += lines[i % 4];
        ++i;
    }
    return out;
}

CharGptResult run_char_gpt(const CharGptConfig& cfg, const std::string& corpus) {
    if (corpus.size() < kMinCorpusBytes) {
        throw DomainError(fmt::format("corpus has {} bytes, need at least {}", corpus.size(), kMinCorpusBytes));
    }
    if (cfg.context < 2 || corpus.size() <= cfg.context + 1) {
        throw DomainError("context length must be at least 2 and shorter than the corpus");
    }
    const std::set<unsigned char> chars(corpus.begin(), corpus.end());
    const std::vector<unsigned char> itos(chars.begin(), chars.end());
    std::vector<std::size_t> stoi(256, 0);
    for (std::size_t i = 0; i < itos.size(); ++i) {
        stoi[itos[i]] = i;
    }
    std::vector<std::size_t> ids(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        ids[i] = stoi[static_cast<unsigned char>(corpus[i])];
    }

    Rng rng(cfg.seed);
    Rng init_rng = rng.split();
    GptConfig gcfg;
    gcfg.vocab = itos.size();
    gcfg.d_model = cfg.d_model;
    gcfg.n_heads = cfg.n_heads;
    gcfg.n_layers = cfg.n_layers;
    gcfg.d_ff = cfg.d_ff;
    gcfg.max_len = cfg.context;
    GptModel model(gcfg, init_rng);
    ParamList params = model.parameters();
    OptimizerConfig ocfg = adam(cfg.lr);
    ocfg.clip_norm = 1.0;
    Optimizer opt(ocfg);

    CharGptResult res;
    res.vocab = itos.size();
    std::vector<double> history;
    const std::size_t window = 20;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const std::size_t start = rng.below(ids.size() - cfg.context - 1);
        const std::span<const std::size_t> x(ids.data() + start, cfg.context);
        const std::span<const std::size_t> y(ids.data() + start + 1, cfg.context);
        Tape tape;
        Var loss = model.loss(tape, x, y);
        tape.backward(loss);
        apply_step(opt, tape, params);

        const double l = loss.item();
        if (step == 0) {
            res.initial_loss = l;
        }
        history.push_back(l);
        res.metrics.log(step, "loss", l);
        res.steps_run = step + 1;
        if (history.size() >= window) {
            const double avg =
                std::accumulate(history.end() - static_cast<std::ptrdiff_t>(window), history.end(), 0.0) /
                static_cast<double>(window);
            if (!res.below_60pct_step && avg < 0.6 * res.initial_loss) {
                res.below_60pct_step = step;
            }
            if (cfg.stop_below_fraction && avg < *cfg.stop_below_fraction * res.initial_loss) {
                break;
            }
        }
    }
    const std::size_t tail = std::min(window, history.size());
    res.final_loss =
        std::accumulate(history.end() - static_cast<std::ptrdiff_t>(tail), history.end(), 0.0) / static_cast<double>(tail);

    const std::size_t prompt_len = std::min<std::size_t>(8, cfg.context);
    const std::vector<std::size_t> prompt(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(prompt_len));
    const std::vector<std::size_t> out = generate(model, prompt, cfg.sample_len, {SamplerKind::greedy, 1.0, cfg.seed});
    for (std::size_t i = prompt_len; i < out.size(); ++i) {
        res.sample.push_back(static_cast<char>(itos[out[i]]));
    }

    res.metrics.summary["experiment"] = "char-gpt";
    res.metrics.summary["seed"] = cfg.seed;
    res.metrics.summary["vocab"] = res.vocab;
    res.metrics.summary["steps_run"] = res.steps_run;
    res.metrics.summary["initial_loss"] = res.initial_loss;
    res.metrics.summary["ln_vocab"] = std::log(static_cast<double>(res.vocab));
    res.metrics.summary["final_loss"] = res.final_loss;
    res.metrics.summary["final_over_initial"] = res.final_loss / res.initial_loss;
    if (res.below_60pct_step) {
        res.metrics.summary["below_60pct_step"] = *res.below_60pct_step;
    } else {
        res.metrics.summary["below_60pct_step"] = nullptr;
    }
    res.metrics.summary["sample"] = res.sample;
    return res;
}

// ---------------------------------------------------------------------------
// 2-D VAE

Vae2dResult run_vae2d(const Vae2dConfig& cfg) {
    if (cfg.batch == 0 || cfg.points < cfg.batch || cfg.epochs == 0) {
        throw DomainError("VAE needs epochs >= 1 and points >= batch >= 1");
    }
    Rng rng(cfg.seed);
    Rng data_rng = rng.split();
    Rng init_rng = rng.split();
    const Tensor data = two_moons(cfg.points, data_rng);

    Linear enc(2, cfg.hidden, init_rng);
    Linear enc_mu(cfg.hidden, cfg.latent, init_rng);
    Linear enc_logvar(cfg.hidden, cfg.latent, init_rng);
    Linear dec(cfg.latent, cfg.hidden, init_rng);
    Linear dec_out(cfg.hidden, 2, init_rng);
    ParamList params;
    enc.collect(params, "enc");
    enc_mu.collect(params, "enc_mu");
    enc_logvar.collect(params, "enc_logvar");
    dec.collect(params, "dec");
    dec_out.collect(params, "dec_out");
    Optimizer opt(adam(cfg.lr));

    Vae2dResult res;
    const std::size_t batches = cfg.points / cfg.batch;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = rng.sample_without_replacement(cfg.points, cfg.points);
        double total = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            Tensor xb(Shape{cfg.batch, 2});
            for (std::size_t i = 0; i < cfg.batch; ++i) {
                const std::size_t src = order[b * cfg.batch + i];
                xb[2 * i] = data[2 * src];
                xb[2 * i + 1] = data[2 * src + 1];
            }
            Tape tape;
            Var x = tape.constant(xb);
            Var h = tanh(enc.forward(tape, x));
            Var mu = enc_mu.forward(tape, h);
            Var logvar = enc_logvar.forward(tape, h);
            Var z = vae_reparameterize(mu, logvar, rng);
            Var recon = dec_out.forward(tape, tanh(dec.forward(tape, z)));
            Var recon_loss = sum(square(recon - x)) * (1.0 / static_cast<double>(cfg.batch));
            Var loss = vae_elbo_loss(recon_loss, mu, logvar, cfg.kl_weight);
            tape.backward(loss);
            apply_step(opt, tape, params);
            total += loss.item();
            res.metrics.log(step++, "loss", loss.item());
        }
        res.epoch_loss.push_back(total / static_cast<double>(batches));
        res.metrics.log(epoch, "epoch_loss", res.epoch_loss.back());
    }
    res.metrics.summary["experiment"] = "vae2d";
    res.metrics.summary["seed"] = cfg.seed;
    res.metrics.summary["epoch_loss"] = res.epoch_loss;
    bool monotone = true;
    for (std::size_t i = 1; i < res.epoch_loss.size(); ++i) {
        monotone = monotone && res.epoch_loss[i] < res.epoch_loss[i - 1];
    }
    res.metrics.summary["monotone_decrease"] = monotone;
    return res;
}

// ---------------------------------------------------------------------------
// 2-D diffusion

namespace {

/// ε_θ(x_t, t) as an MLP on (x_t / √(1−ᾱ_t), t/T). The input scaling keeps the
/// network input at unit variance for every t.
struct NoiseNet {
    Linear l1, l2, l3;

    Var forward(Tape& tape, const Tensor& x_t, const std::vector<std::size_t>& t, const NoiseSchedule& s) const {
        const std::size_t n = x_t.dim(0);
        Tensor in(Shape{n, 3});
        for (std::size_t i = 0; i < n; ++i) {
            const double c = 1.0 / std::sqrt(1.0 - s.alpha_bar(t[i]));
            in[3 * i] = x_t[2 * i] * c;
            in[3 * i + 1] = x_t[2 * i + 1] * c;
            in[3 * i + 2] = static_cast<double>(t[i]) / static_cast<double>(s.steps());
        }
        Var h = tanh(l1.forward(tape, tape.constant(in)));
        h = tanh(l2.forward(tape, h));
        return l3.forward(tape, h);
    }
};

}  // namespace

Ddpm2dResult run_ddpm2d(const Ddpm2dConfig& cfg) {
    if (cfg.batch == 0 || cfg.samples == 0) {
        throw DomainError("batch and sample counts must be positive");
    }
    Rng rng(cfg.seed);
    Rng init_rng = rng.split();
    Rng data_rng = rng.split();
    const NoiseSchedule schedule = NoiseSchedule::linear(cfg.timesteps);
    NoiseNet net{Linear(3, cfg.hidden, init_rng), Linear(cfg.hidden, cfg.hidden, init_rng),
                 Linear(cfg.hidden, 2, init_rng)};
    ParamList params;
    net.l1.collect(params, "l1");
    net.l2.collect(params, "l2");
    net.l3.collect(params, "l3");
    Optimizer opt(adam(cfg.lr));

    Ddpm2dResult res;
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        const Tensor x0 = cfg.data == Ddpm2dData::origin ? Tensor(Shape{cfg.batch, 2}, 0.0)
                                                         : two_moons(cfg.batch, data_rng);
        const Tensor eps = rng.normal_tensor({cfg.batch, 2});
        std::vector<std::size_t> t(cfg.batch);
        Tensor xt(Shape{cfg.batch, 2});
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            t[i] = 1 + rng.below(cfg.timesteps);
            const double ab = schedule.alpha_bar(t[i]);
            for (std::size_t c = 0; c < 2; ++c) {
                xt[2 * i + c] = std::sqrt(ab) * x0[2 * i + c] + std::sqrt(1.0 - ab) * eps[2 * i + c];
            }
        }
        Tape tape;
        Var loss = ddpm_loss(tape.constant(eps), net.forward(tape, xt, t, schedule));
        tape.backward(loss);
        apply_step(opt, tape, params);
        if (step % 50 == 0 || step + 1 == cfg.train_steps) {
            res.metrics.log(step, "loss", loss.item());
        }
    }

    auto predictor = [&](std::size_t& calls) {
        return [&net, &schedule, &calls](const Tensor& x, std::size_t t) {
            ++calls;
            Tape tape;
            return net.forward(tape, x, std::vector<std::size_t>(x.dim(0), t), schedule).value();
        };
    };
    Rng sample_rng = rng.split();
    res.samples = ddpm_sample(predictor(res.ancestral_calls), schedule, {cfg.samples, 2}, sample_rng);
    const Tensor x_t = sample_rng.normal_tensor({cfg.samples, 2});
    const std::vector<std::size_t> subset = ddim_timesteps(cfg.timesteps, cfg.ddim_steps);
    res.ddim = ddim_sample(predictor(res.ddim_calls), schedule, subset, x_t);

    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const double x = res.samples[2 * i];
        const double y = res.samples[2 * i + 1];
        res.mean_norm += std::hypot(x, y);
        mx += x;
        my += y;
    }
    const double n = static_cast<double>(cfg.samples);
    res.mean_norm /= n;
    res.norm_of_mean = std::hypot(mx / n, my / n);

    res.metrics.summary["experiment"] = "ddpm2d";
    res.metrics.summary["seed"] = cfg.seed;
    res.metrics.summary["data"] = cfg.data == Ddpm2dData::origin ? "origin" : "moons";
    res.metrics.summary["timesteps"] = cfg.timesteps;
    res.metrics.summary["mean_norm"] = res.mean_norm;
    res.metrics.summary["norm_of_mean"] = res.norm_of_mean;
    res.metrics.summary["ancestral_model_calls"] = res.ancestral_calls;
    res.metrics.summary["ddim_model_calls"] = res.ddim_calls;
    return res;
}

// ---------------------------------------------------------------------------
// k-means

Tensor read_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (rows == 0 && line_no == 1) {
                continue;
            }
            throw DomainError(fmt::format("{}:{}: non-numeric value", path.string(), line_no));
        }
        if (rows == 0) {
            cols = row.size();
        } else if (row.size() != cols) {
            throw DimensionError(fmt::format("{}:{}: expected {} columns, got {}", path.string(), line_no, cols, row.size()));
        }
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) {
        throw DomainError(path.string() + " holds no points");
    }
    return Tensor(Shape{rows, cols}, std::move(values));
}

KMeansRunResult run_kmeans(const KMeansRunConfig& cfg) {
    const Tensor points = cfg.points ? *cfg.points : Tensor(Shape{4, 1}, std::vector<double>{0, 1, 9, 10});
    Rng rng(cfg.seed);
    const KMeansState st = kmeans_fit(points, cfg.k, rng, {.max_iter = cfg.max_iter});
    KMeansRunResult res;
    res.centroids = st.centroids;
    res.assignments = st.assignments;
    res.inertia = kmeans_inertia(st, points);
    for (std::size_t i = 0; i < st.inertia_history.size(); ++i) {
        res.metrics.log(i + 1, "inertia", st.inertia_history[i]);
    }
    res.metrics.summary["experiment"] = "kmeans";
    res.metrics.summary["seed"] = cfg.seed;
    res.metrics.summary["k"] = cfg.k;
    res.metrics.summary["iterations"] = st.iterations;
    res.metrics.summary["converged"] = st.converged;
    res.metrics.summary["inertia"] = res.inertia;
    res.metrics.summary["centroids"] = tensor_json(st.centroids);
    res.metrics.summary["assignments"] = st.assignments;
    return res;
}

// ---------------------------------------------------------------------------
// Hopfield

HopfieldRunResult run_hopfield(const HopfieldRunConfig& cfg) {
    if (cfg.patterns == 0 || cfg.trials == 0) {
        throw DomainError("need at least one pattern and one trial");
    }
    Rng rng(cfg.seed);
    HopfieldRunResult res;
    std::size_t successes = 0;
    std::vector<std::size_t> order(cfg.units);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t max_sweeps = cfg.units * cfg.units;
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        std::vector<BipolarState> patterns;
        for (std::size_t p = 0; p < cfg.patterns; ++p) {
            patterns.push_back(random_bipolar(cfg.units, rng));
        }
        const HopfieldNet net = hopfield_store(patterns);
        const BipolarState& target = patterns[trial % cfg.patterns];
        BipolarState s = flip_bits(target, cfg.flips, rng);
        double energy = hopfield_energy(net, s);
        std::size_t sweeps = 0;
        while (sweeps < max_sweeps) {
            BipolarState next = hopfield_update(net, s, order);
            ++sweeps;
            const double e = hopfield_energy(net, next);
            if (e > energy + 1e-12) {
                res.energy_monotone = false;
            }
            energy = e;
            if (next == s) {
                break;
            }
            s = std::move(next);
        }
        const bool ok = s == target;
        successes += ok ? 1 : 0;
        res.metrics.log(trial, "recalled", ok ? 1.0 : 0.0);
        res.metrics.log(trial, "sweeps", static_cast<double>(sweeps));
    }
    res.recall_rate = static_cast<double>(successes) / static_cast<double>(cfg.trials);
    res.metrics.summary["experiment"] = "hopfield";
    res.metrics.summary["seed"] = cfg.seed;
    res.metrics.summary["units"] = cfg.units;
    res.metrics.summary["patterns"] = cfg.patterns;
    res.metrics.summary["flips"] = cfg.flips;
    res.metrics.summary["trials"] = cfg.trials;
    res.metrics.summary["recall_rate"] = res.recall_rate;
    res.metrics.summary["energy_monotone"] = res.energy_monotone;
    return res;
}

// ---------------------------------------------------------------------------

BpeRunResult run_bpe(const BpeRunConfig& cfg) {
    const std::string corpus = cfg.corpus.value_or("low lowest newer");
    BpeRunResult res;
    res.table = bpe::train(bpe::word_counts(corpus), cfg.merges);
    nlohmann::ordered_json merges = nlohmann::ordered_json::array();
    for (const bpe::MergeRule& m : res.table.merges) {
        merges.push_back({m.first, m.second});
    }
    res.metrics.summary["experiment"] = "bpe";
    res.metrics.summary["merges"] = merges;
    res.metrics.summary["vocab_size"] = res.table.vocab.size();
    return res;
}

DpoToyResult run_dpo_toy(const DpoToyConfig& cfg, Metrics& metrics) {
    DpoToyResult r = train_dpo_toy(cfg);
    for (std::size_t i = 0; i < r.margins.size(); ++i) {
        metrics.log(i, "margin", r.margins[i]);
    }
    for (std::size_t i = 0; i < r.losses.size(); ++i) {
        metrics.log(i, "loss", r.losses[i]);
    }
    metrics.summary["experiment"] = "dpo";
    metrics.summary["seed"] = cfg.seed;
    metrics.summary["initial_margin"] = r.margins.front();
    metrics.summary["final_margin"] = r.margins.back();
    return r;
}

// ---------------------------------------------------------------------------
// Calculators

Metrics calc_params(const ParamsCalcConfig& cfg) {
    Metrics m;
    const MlpParamCount mlp = mlp_param_count(cfg.mlp_inputs, cfg.mlp_hidden);
    m.summary["mlp"] = {{"inputs", cfg.mlp_inputs},
                        {"hidden", cfg.mlp_hidden},
                        {"weights", mlp.weights},
                        {"biases", mlp.biases},
                        {"total", mlp.total()}};
    const std::uint64_t standard = conv_param_count(cfg.conv_in, cfg.conv_out, cfg.conv_kernel, false);
    const std::uint64_t separable = conv_param_count(cfg.conv_in, cfg.conv_out, cfg.conv_kernel, true);
    m.summary["conv"] = {{"in_channels", cfg.conv_in},
                         {"out_channels", cfg.conv_out},
                         {"kernel", cfg.conv_kernel},
                         {"standard", standard},
                         {"separable", separable},
                         {"ratio", static_cast<double>(separable) / static_cast<double>(standard)}};
    m.summary["vit"] = {{"image", cfg.image},
                        {"patch", cfg.patch},
                        {"patches", vit_patch_count(cfg.image, cfg.image, cfg.patch)},
                        {"patch_length", 3 * cfg.patch * cfg.patch}};
    return m;
}

Metrics calc_scaling(const ScalingCalcConfig& cfg) {
    Metrics m;
    ScalingCoefficients c;
    c.phi = cfg.phi;
    const ScaleFactors f = compound_factors(c);
    const NetworkDims scaled = compound_scale({cfg.depth, cfg.width, cfg.resolution}, c);
    m.summary["phi"] = cfg.phi;
    m.summary["factors"] = {{"depth", f.depth}, {"width", f.width}, {"resolution", f.resolution}};
    m.summary["base"] = {{"depth", cfg.depth}, {"width", cfg.width}, {"resolution", cfg.resolution}};
    m.summary["scaled"] = {{"depth", scaled.depth}, {"width", scaled.width}, {"resolution", scaled.resolution}};
    return m;
}

Metrics calc_vanishing(const VanishingCalcConfig& cfg) {
    Metrics m;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (double a : cfg.alphas) {
        for (std::uint64_t l : cfg.layers) {
            rows.push_back({{"alpha", a}, {"layers", l}, {"factor", vanishing_factor(a, l)}});
        }
    }
    m.summary["vanishing"] = rows;
    return m;
}

Metrics calc_chinchilla(double params, double ratio) {
    Metrics m;
    m.summary["params"] = params;
    m.summary["tokens_per_param"] = ratio;
    m.summary["tokens"] = chinchilla_tokens(params, ratio);
    return m;
}

Metrics calc_quant(const QuantCalcConfig& cfg) {
    const QuantParams qp = cfg.symmetric ? calibrate_symmetric(std::max(std::abs(cfg.min), std::abs(cfg.max)), cfg.bits)
                                         : calibrate_affine(cfg.min, cfg.max, cfg.bits);
    Metrics m;
    m.summary["mode"] = cfg.symmetric ? "symmetric" : "affine";
    m.summary["bits"] = qp.bits;
    m.summary["qmin"] = qp.qmin;
    m.summary["qmax"] = qp.qmax;
    m.summary["scale"] = qp.scale;
    m.summary["zero_point"] = qp.zero_point;
    nlohmann::ordered_json codes = nlohmann::ordered_json::array();
    for (double v : cfg.values) {
        const std::int64_t q = quantize(v, qp);
        codes.push_back({{"x", v}, {"q", q}, {"dequantized", static_cast<double>(q - qp.zero_point) * qp.scale}});
    }
    m.summary["values"] = codes;
    Rng rng(cfg.seed);
    const double lo = std::max(cfg.min, qp.range_lo());
    const double hi = std::min(cfg.max, qp.range_hi());
    double worst = 0.0;
    for (std::size_t i = 0; i < cfg.probes; ++i) {
        const double x = rng.uniform(lo, hi);
        const double back = static_cast<double>(quantize(x, qp) - qp.zero_point) * qp.scale;
        worst = std::max(worst, std::abs(back - x));
    }
    m.summary["probes"] = cfg.probes;
    m.summary["max_roundtrip_error"] = worst;
    m.summary["half_scale"] = qp.scale / 2.0;
    return m;
}

}  // namespace deskml
