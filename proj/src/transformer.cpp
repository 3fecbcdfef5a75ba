#include "deskml/transformer.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace deskml {

namespace {

constexpr double kMaskPenalty = 1e9;

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(fmt::format("{} must be a matrix, got {}", what, shape_str(t.shape())));
    }
}

}  // namespace

void AttentionConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_ff == 0) {
        throw DomainError("attention sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw DomainError(fmt::format("n_heads={} does not divide d_model={}", n_heads, d_model));
    }
}

Mask::Mask(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), allowed_(rows * cols, fill ? 1 : 0) {}

Mask causal_mask(std::size_t n) {
    if (n == 0) {
        throw DomainError("causal mask needs n >= 1");
    }
    Mask m(n, n, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            m.set(i, j, true);
        }
    }
    return m;
}

Var masked_softmax(Var scores, const Mask& mask) {
    const Tensor& s = scores.value();
    require_matrix(s, "attention scores");
    const std::size_t r = s.dim(0);
    const std::size_t c = s.dim(1);
    if (mask.rows() != r || mask.cols() != c) {
        throw DimensionError(
            fmt::format("mask is {}x{} but scores are {}x{}", mask.rows(), mask.cols(), r, c));
    }
    Tensor penalised = s;
    for (std::size_t i = 0; i < r; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < c; ++j) {
            if (mask.allowed(i, j)) {
                any = true;
            } else {
                penalised[i * c + j] -= kMaskPenalty;
            }
        }
        if (!any) {
            throw DomainError(fmt::format("attention row {} is fully masked", i));
        }
    }
    Tensor y = kernels::softmax_rows(penalised);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (!mask.allowed(i, j)) {
                y[i * c + j] = 0.0;
            }
        }
    }
    Tape& tape = scores.tape();
    const std::size_t out_id = tape.size();
    return tape.record(std::move(y), {scores}, [&tape, out_id, r, c](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& y = tape.value(out_id);
        Tensor& gs = *pg[0];
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                dot += g[i * c + j] * y[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
                gs[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
            }
        }
    });
}

Var attention_weights(Var q, Var k, const Mask* mask) {
    require_matrix(q.value(), "Q");
    require_matrix(k.value(), "K");
    const std::size_t dk = q.value().dim(1);
    if (k.value().dim(1) != dk) {
        throw DimensionError(fmt::format("Q {} and K {} disagree on d_k", shape_str(q.shape()), shape_str(k.shape())));
    }
    Var scores = matmul(q, transpose(k)) * (1.0 / std::sqrt(static_cast<double>(dk)));
    return mask != nullptr ? masked_softmax(scores, *mask) : softmax(scores);
}

Var scaled_dot_product_attention(Var q, Var k, Var v, const Mask* mask) {
    require_matrix(v.value(), "V");
    if (v.value().dim(0) != k.value().dim(0)) {
        throw DimensionError(fmt::format("K has {} rows but V has {}", k.value().dim(0), v.value().dim(0)));
    }
    return matmul(attention_weights(q, k, mask), v);
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(AttentionConfig c, Rng& rng) : cfg(c) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    wq = init_uniform(rng, {d, d}, d, d);
    wk = init_uniform(rng, {d, d}, d, d);
    wv = init_uniform(rng, {d, d}, d, d);
    wo = init_uniform(rng, {d, d}, d, d);
}

MultiHeadAttention::MultiHeadAttention(AttentionConfig c, Tensor q, Tensor k, Tensor v, Tensor o)
    : cfg(c), wq(std::move(q)), wk(std::move(k)), wv(std::move(v)), wo(std::move(o)) {
    cfg.validate();
    const Shape want{cfg.d_model, cfg.d_model};
    for (const Tensor* w : {&wq, &wk, &wv, &wo}) {
        if (w->shape() != want) {
            throw DimensionError(fmt::format("projection {} should be {}", shape_str(w->shape()), shape_str(want)));
        }
    }
}

Var MultiHeadAttention::forward(Tape& tape, Var q_in, Var k_in, Var v_in, const Mask* mask) const {
    for (const Var* x : {&q_in, &k_in, &v_in}) {
        require_matrix(x->value(), "attention input");
        if (x->value().dim(1) != cfg.d_model) {
            throw DimensionError(
                fmt::format("attention input {} does not have d_model={} columns", shape_str(x->shape()), cfg.d_model));
        }
    }
    Var q = matmul(q_in, tape.param(wq));
    Var k = matmul(k_in, tape.param(wk));
    Var v = matmul(v_in, tape.param(wv));
    const std::size_t dk = cfg.d_k();
    std::vector<Var> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        heads.push_back(scaled_dot_product_attention(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk),
                                                     slice_cols(v, h * dk, dk), mask));
    }
    Var joined = heads.size() == 1 ? heads.front() : concat_cols(heads);
    return matmul(joined, tape.param(wo));
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".wq", &wq});
    out.push_back({prefix + ".wk", &wk});
    out.push_back({prefix + ".wv", &wv});
    out.push_back({prefix + ".wo", &wo});
}

// ---------------------------------------------------------------------------

Tensor sinusoidal_pe(std::size_t pos, std::size_t d_model) {
    if (d_model == 0 || d_model % 2 != 0) {
        throw DomainError(fmt::format("sinusoidal encoding needs an even d_model, got {}", d_model));
    }
    Tensor pe(Shape{d_model});
    for (std::size_t i = 0; i < d_model / 2; ++i) {
        const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
        const double angle = static_cast<double>(pos) / freq;
        pe[2 * i] = std::sin(angle);
        pe[2 * i + 1] = std::cos(angle);
    }
    return pe;
}

Tensor positional_table(std::size_t n, std::size_t d_model) {
    Tensor table(Shape{n, d_model});
    for (std::size_t p = 0; p < n; ++p) {
        Tensor row = sinusoidal_pe(p, d_model);
        std::copy(row.data().begin(), row.data().end(), table.data().begin() + static_cast<std::ptrdiff_t>(p * d_model));
    }
    return table;
}

Var ffn(Var x, Var w1, Var b1, Var w2, Var b2) {
    const Tensor& a = w1.value();
    const Tensor& b = w2.value();
    require_matrix(a, "W1");
    require_matrix(b, "W2");
    if (b.dim(0) != a.dim(1) || b.dim(1) != a.dim(0)) {
        throw DimensionError(fmt::format("W1 {} and W2 {} do not chain d_model -> d_ff -> d_model",
                                         shape_str(a.shape()), shape_str(b.shape())));
    }
    return linear(relu(linear(x, w1, b1)), w2, b2);
}

FeedForward::FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng)
    : up(d_model, d_ff, rng, Init::he), down(d_ff, d_model, rng) {}

Var FeedForward::forward(Tape& tape, Var x) const {
    return ffn(x, tape.param(up.weight), tape.param(up.bias), tape.param(down.weight), tape.param(down.bias));
}

void FeedForward::collect(ParamList& out, const std::string& prefix) {
    up.collect(out, prefix + ".up");
    down.collect(out, prefix + ".down");
}

// ---------------------------------------------------------------------------

GptModel::GptModel(GptConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.vocab == 0 || cfg_.n_layers == 0 || cfg_.max_len == 0) {
        throw DomainError("vocab, n_layers and max_len must be positive");
    }
    AttentionConfig acfg{cfg_.d_model, cfg_.n_heads, cfg_.d_ff};
    acfg.validate();
    token_embedding = rng.normal_tensor({cfg_.vocab, cfg_.d_model}, 1.0);
    position_embedding = cfg_.learned_positions ? rng.normal_tensor({cfg_.max_len, cfg_.d_model}, 0.1)
                                                : positional_table(cfg_.max_len, cfg_.d_model);
    blocks_.reserve(cfg_.n_layers);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        Block b;
        b.ln1 = Norm(cfg_.d_model, NormMode::layer);
        b.attn = MultiHeadAttention(acfg, rng);
        b.ln2 = Norm(cfg_.d_model, NormMode::layer);
        b.mlp = FeedForward(cfg_.d_model, cfg_.d_ff, rng);
        blocks_.push_back(std::move(b));
    }
    final_norm_ = Norm(cfg_.d_model, NormMode::layer);
    head_ = Linear(rng.normal_tensor({cfg_.vocab, cfg_.d_model}, 0.02), Tensor(Shape{cfg_.vocab}, 0.0));
}

Var GptModel::forward(Tape& tape, std::span<const std::size_t> ids) const {
    const std::size_t n = ids.size();
    if (n == 0) {
        throw DomainError("empty token sequence");
    }
    if (n > cfg_.max_len) {
        throw DomainError(fmt::format("sequence length {} exceeds max_len {}", n, cfg_.max_len));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ids[i] >= cfg_.vocab) {
            throw DomainError(fmt::format("token id {} at position {} is outside the vocabulary of {}", ids[i], i,
                                          cfg_.vocab));
        }
    }
    std::vector<std::size_t> positions(n);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    Var pos_table = cfg_.learned_positions ? tape.param(position_embedding) : tape.frozen(position_embedding);
    Var x = gather_rows(tape.param(token_embedding), ids) + gather_rows(pos_table, positions);

    const Mask mask = causal_mask(n);
    for (const Block& b : blocks_) {
        x = x + b.attn.self_attention(tape, b.ln1.apply(tape, x), &mask);
        x = x + b.mlp.forward(tape, b.ln2.apply(tape, x));
    }
    x = final_norm_.apply(tape, x);
    Var w = cfg_.tie_weights ? tape.param(token_embedding) : tape.param(head_.weight);
    return linear(x, w, tape.param(head_.bias));
}

Var GptModel::loss(Tape& tape, std::span<const std::size_t> ids, std::span<const std::size_t> targets) const {
    if (targets.size() != ids.size()) {
        throw DimensionError(fmt::format("{} targets for {} positions", targets.size(), ids.size()));
    }
    return cross_entropy_logits(forward(tape, ids), targets);
}

Tensor GptModel::logits(std::span<const std::size_t> ids) const {
    Tape tape;
    return forward(tape, ids).value();
}

ParamList GptModel::parameters() {
    ParamList out;
    out.push_back({"tok_emb", &token_embedding});
    if (cfg_.learned_positions) {
        out.push_back({"pos_emb", &position_embedding});
    }
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const std::string p = fmt::format("blocks.{}", l);
        blocks_[l].ln1.collect(out, p + ".ln1");
        blocks_[l].attn.collect(out, p + ".attn");
        blocks_[l].ln2.collect(out, p + ".ln2");
        blocks_[l].mlp.collect(out, p + ".mlp");
    }
    final_norm_.collect(out, "final_norm");
    if (!cfg_.tie_weights) {
        out.push_back({"head.weight", &head_.weight});
    }
    out.push_back({"head.bias", &head_.bias});
    return out;
}

std::vector<std::size_t> generate(const GptModel& model, std::span<const std::size_t> prompt, std::size_t steps,
                                  const SamplerConfig& sampler) {
    if (prompt.empty()) {
        throw DomainError("generation needs a non-empty prompt");
    }
    if (sampler.kind == SamplerKind::temperature && !(sampler.temperature > 0.0)) {
        throw DomainError(fmt::format("temperature must be positive, got {}", sampler.temperature));
    }
    Rng rng(sampler.seed);
    std::vector<std::size_t> out(prompt.begin(), prompt.end());
    const std::size_t max_len = model.config().max_len;
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t start = out.size() > max_len ? out.size() - max_len : 0;
        const std::span<const std::size_t> ctx(out.data() + start, out.size() - start);
        const Tensor logits = model.logits(ctx);
        const std::size_t v = logits.dim(1);
        const std::size_t last = (ctx.size() - 1) * v;
        if (sampler.kind == SamplerKind::greedy) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < v; ++j) {
                if (logits[last + j] > logits[last + best]) {
                    best = j;
                }
            }
            out.push_back(best);
            continue;
        }
        Tensor scaled(Shape{v});
        for (std::size_t j = 0; j < v; ++j) {
            scaled[j] = logits[last + j] / sampler.temperature;
        }
        const Tensor probs = kernels::softmax_rows(scaled);
        out.push_back(rng.categorical(probs.values()));
    }
    return out;
}

// ---------------------------------------------------------------------------

MlmBatch mlm_mask(std::span<const std::size_t> ids, double rate, std::size_t mask_id, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw DomainError(fmt::format("mask rate must lie in [0,1), got {}", rate));
    }
    MlmBatch batch;
    batch.ids.assign(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (rng.bernoulli(rate)) {
            batch.ids[i] = mask_id;
            batch.positions.push_back(i);
            batch.targets.push_back(ids[i]);
        }
    }
    return batch;
}

std::size_t vit_patch_count(std::size_t height, std::size_t width, std::size_t patch) {
    if (patch == 0 || height % patch != 0 || width % patch != 0) {
        throw DimensionError(fmt::format("patch size {} does not divide image {}x{}", patch, height, width));
    }
    return (height / patch) * (width / patch);
}

Tensor vit_patchify(const Tensor& image, std::size_t patch) {
    if (image.rank() != 3) {
        throw DimensionError("patchify expects [C x H x W], got " + shape_str(image.shape()));
    }
    const std::size_t c = image.dim(0);
    const std::size_t h = image.dim(1);
    const std::size_t w = image.dim(2);
    const std::size_t count = vit_patch_count(h, w, patch);
    const std::size_t per_row = w / patch;
    const std::size_t len = c * patch * patch;
    Tensor out(Shape{count, len});
    for (std::size_t pi = 0; pi < count; ++pi) {
        const std::size_t py = pi / per_row;
        const std::size_t px = pi % per_row;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t dy = 0; dy < patch; ++dy) {
                for (std::size_t dx = 0; dx < patch; ++dx) {
                    const std::size_t src = (ch * h + py * patch + dy) * w + px * patch + dx;
                    out[pi * len + (ch * patch + dy) * patch + dx] = image[src];
                }
            }
        }
    }
    return out;
}

Tensor vit_unpatchify(const Tensor& patches, std::size_t c, std::size_t h, std::size_t w, std::size_t patch) {
    const std::size_t count = vit_patch_count(h, w, patch);
    const std::size_t len = c * patch * patch;
    if (patches.shape() != Shape{count, len}) {
        throw DimensionError(fmt::format("patches {} do not match a {}x{}x{} image with patch {}",
                                         shape_str(patches.shape()), c, h, w, patch));
    }
    const std::size_t per_row = w / patch;
    Tensor image(Shape{c, h, w});
    for (std::size_t pi = 0; pi < count; ++pi) {
        const std::size_t py = pi / per_row;
        const std::size_t px = pi % per_row;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t dy = 0; dy < patch; ++dy) {
                for (std::size_t dx = 0; dx < patch; ++dx) {
                    image[(ch * h + py * patch + dy) * w + px * patch + dx] =
                        patches[pi * len + (ch * patch + dy) * patch + dx];
                }
            }
        }
    }
    return image;
}

}  // namespace deskml
