#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deskml/layers.hpp"

namespace deskml {

struct AttentionConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;

    std::size_t d_k() const { return d_model / n_heads; }
    void validate() const;
};

/// Boolean attention mask; allowed(i, j) means query i may attend to key j.
class Mask {
  public:
    Mask(std::size_t rows, std::size_t cols, bool fill = true);

    bool allowed(std::size_t i, std::size_t j) const { return allowed_[i * cols_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool allowed) { allowed_[i * cols_ + j] = allowed ? 1 : 0; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    friend bool operator==(const Mask&, const Mask&) = default;

  private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<std::uint8_t> allowed_;
};

/// Lower-triangular mask: position i attends to every j <= i.
Mask causal_mask(std::size_t n);

/// Row-wise softmax that gives masked positions exactly zero weight. Masked
/// scores are pushed down by 1e9 before normalising. A row with no allowed
/// entry is an error.
Var masked_softmax(Var scores, const Mask& mask);

/// softmax(Q Kᵀ / sqrt(d_k)) for Q [n x d_k], K [m x d_k]; rows are queries.
Var attention_weights(Var q, Var k, const Mask* mask = nullptr);
Var scaled_dot_product_attention(Var q, Var k, Var v, const Mask* mask = nullptr);

/// Per-head projections stored as full d_model x d_model matrices applied on
/// the right (x · W); head h owns columns [h·d_k, (h+1)·d_k).
class MultiHeadAttention {
  public:
    MultiHeadAttention() = default;
    MultiHeadAttention(AttentionConfig cfg, Rng& rng);
    MultiHeadAttention(AttentionConfig cfg, Tensor wq, Tensor wk, Tensor wv, Tensor wo);

    Var forward(Tape& tape, Var q_in, Var k_in, Var v_in, const Mask* mask = nullptr) const;
    Var self_attention(Tape& tape, Var x, const Mask* mask = nullptr) const { return forward(tape, x, x, x, mask); }
    void collect(ParamList& out, const std::string& prefix);

    AttentionConfig cfg;
    Tensor wq, wk, wv, wo;
};

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(pos / 10000^(2i/d)).
Tensor sinusoidal_pe(std::size_t pos, std::size_t d_model);
/// Rows 0..n-1 of the sinusoidal table, [n x d_model].
Tensor positional_table(std::size_t n, std::size_t d_model);

/// W₂ max(0, W₁x + b₁) + b₂ applied to each row of x. W₁ is [d_ff x d_model],
/// W₂ is [d_model x d_ff].
Var ffn(Var x, Var w1, Var b1, Var w2, Var b2);

class FeedForward {
  public:
    FeedForward() = default;
    FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng);

    Var forward(Tape& tape, Var x) const;
    void collect(ParamList& out, const std::string& prefix);

    Linear up;
    Linear down;
};

// ---------------------------------------------------------------------------

struct GptConfig {
    std::size_t vocab = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 256;
    std::size_t max_len = 64;
    bool learned_positions = false;
    bool tie_weights = false;
};

/// Decoder-only transformer with pre-norm blocks:
///   x += MHA(LN(x), causal);  x += FFN(LN(x))
/// followed by a final LayerNorm and a projection to vocabulary logits.
class GptModel {
  public:
    struct Block {
        Norm ln1;
        MultiHeadAttention attn;
        Norm ln2;
        FeedForward mlp;
    };

    GptModel() = default;
    GptModel(GptConfig cfg, Rng& rng);

    /// Logits [n x vocab] for ids [n]; position i only sees ids[0..i].
    Var forward(Tape& tape, std::span<const std::size_t> ids) const;
    /// Mean next-token cross-entropy of forward(ids) against targets.
    Var loss(Tape& tape, std::span<const std::size_t> ids, std::span<const std::size_t> targets) const;
    /// Forward pass without keeping gradients around.
    Tensor logits(std::span<const std::size_t> ids) const;

    ParamList parameters();
    const GptConfig& config() const { return cfg_; }

  private:
    GptConfig cfg_;
    Tensor token_embedding;     // [vocab x d_model]
    Tensor position_embedding;  // learned [max_len x d_model] or fixed sinusoidal table
    std::vector<Block> blocks_;
    Norm final_norm_;
    Linear head_;
};

enum class SamplerKind { greedy, temperature };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

/// Appends `steps` tokens to the prompt, each drawn from the softmax of the
/// last position's logits. Greedy picks the argmax, lowest id on ties. The
/// context is cropped to the model's max_len.
std::vector<std::size_t> generate(const GptModel& model, std::span<const std::size_t> prompt, std::size_t steps,
                                  const SamplerConfig& sampler);

// ---------------------------------------------------------------------------

inline constexpr double kDefaultMlmRate = 0.15;

struct MlmBatch {
    std::vector<std::size_t> ids;        // input with MASK substitutions
    std::vector<std::size_t> positions;  // masked positions, ascending
    std::vector<std::size_t> targets;    // original ids at those positions
};

MlmBatch mlm_mask(std::span<const std::size_t> ids, double rate, std::size_t mask_id, Rng& rng);

std::size_t vit_patch_count(std::size_t height, std::size_t width, std::size_t patch);
/// [C x H x W] -> [(H/p · W/p) x (C·p²)]; patches in row-major order, each
/// flattened channel-first.
Tensor vit_patchify(const Tensor& image, std::size_t patch);
Tensor vit_unpatchify(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                      std::size_t patch);

}  // namespace deskml
