#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deskml/alignment.hpp"
#include "deskml/bpe.hpp"
#include "deskml/tensor.hpp"

namespace deskml {

/// Per-step metric rows plus a summary object. Written as metrics.csv
/// ("step,metric,value") and summary.json; numbers use round-trip precision so
/// equal runs give byte-identical files.
struct Metrics {
    struct Row {
        std::size_t step;
        std::string metric;
        double value;
    };

    void log(std::size_t step, std::string metric, double value) { rows.push_back({step, std::move(metric), value}); }
    void write(const std::filesystem::path& dir) const;
    std::string csv() const;

    std::vector<Row> rows;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

// ---------------------------------------------------------------------------

struct XorConfig {
    std::uint64_t seed = 0;
    std::size_t steps = 2000;
    std::size_t hidden = 8;
    double lr = 0.05;
};

struct XorResult {
    double linear_accuracy = 0.0;
    double mlp_accuracy = 0.0;
    /// First step after which the MLP classifies all four points; steps+1 if never.
    std::size_t mlp_solved_at = 0;
    Metrics metrics;
};

/// Trains a two-layer net with no activation and a 2-h-1 tanh MLP on XOR.
XorResult run_xor(const XorConfig& cfg);

struct CharGptConfig {
    std::uint64_t seed = 0;
    std::size_t steps = 2000;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t context = 32;
    double lr = 3e-3;
    std::size_t sample_len = 200;
    /// Stop early once the 20-step running mean falls below this fraction of
    /// the initial loss.
    std::optional<double> stop_below_fraction;
};

struct CharGptResult {
    std::size_t vocab = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;  // mean of the last 20 step losses
    std::size_t steps_run = 0;
    std::optional<std::size_t> below_60pct_step;
    std::string sample;
    Metrics metrics;
};

inline constexpr std::size_t kMinCorpusBytes = 1024;

CharGptResult run_char_gpt(const CharGptConfig& cfg, const std::string& corpus);
/// Repetitive English-like text of at least `bytes` bytes.
std::string toy_corpus(std::size_t bytes);

struct Vae2dConfig {
    std::uint64_t seed = 0;
    std::size_t points = 4096;
    std::size_t epochs = 10;
    std::size_t batch = 128;
    std::size_t hidden = 32;
    std::size_t latent = 2;
    double lr = 1e-3;
    double kl_weight = 0.05;
};

struct Vae2dResult {
    std::vector<double> epoch_loss;  // mean negated ELBO per epoch
    Metrics metrics;
};

Vae2dResult run_vae2d(const Vae2dConfig& cfg);

enum class Ddpm2dData { origin, moons };

struct Ddpm2dConfig {
    std::uint64_t seed = 0;
    Ddpm2dData data = Ddpm2dData::origin;
    std::size_t timesteps = 100;
    std::size_t train_steps = 1500;
    std::size_t batch = 128;
    std::size_t hidden = 64;
    double lr = 2e-3;
    std::size_t samples = 500;
    std::size_t ddim_steps = 10;
};

struct Ddpm2dResult {
    Tensor samples;     // ancestral, [samples x 2]
    Tensor ddim;        // deterministic, [samples x 2]
    double mean_norm = 0.0;       // mean of ‖x‖ over ancestral samples
    double norm_of_mean = 0.0;    // ‖mean of x‖
    std::size_t ancestral_calls = 0;
    std::size_t ddim_calls = 0;
    Metrics metrics;
};

Ddpm2dResult run_ddpm2d(const Ddpm2dConfig& cfg);

struct KMeansRunConfig {
    std::uint64_t seed = 0;
    std::size_t k = 2;
    std::size_t max_iter = 100;
    /// Defaults to the four points {0, 1, 9, 10} on a line.
    std::optional<Tensor> points;
};

struct KMeansRunResult {
    Tensor centroids;
    std::vector<std::size_t> assignments;
    double inertia = 0.0;
    Metrics metrics;
};

KMeansRunResult run_kmeans(const KMeansRunConfig& cfg);
/// Reads an [n x d] table of numbers from CSV; a non-numeric first line is a header.
Tensor read_points_csv(const std::filesystem::path& path);

struct HopfieldRunConfig {
    std::uint64_t seed = 0;
    std::size_t units = 100;
    std::size_t patterns = 10;
    std::size_t flips = 10;
    std::size_t trials = 200;
};

struct HopfieldRunResult {
    double recall_rate = 0.0;
    bool energy_monotone = true;
    Metrics metrics;
};

HopfieldRunResult run_hopfield(const HopfieldRunConfig& cfg);

struct BpeRunConfig {
    std::size_t merges = 3;
    /// Defaults to "low lowest newer".
    std::optional<std::string> corpus;
};

struct BpeRunResult {
    bpe::MergeTable table;
    Metrics metrics;
};

BpeRunResult run_bpe(const BpeRunConfig& cfg);

DpoToyResult run_dpo_toy(const DpoToyConfig& cfg, Metrics& metrics);

// ---------------------------------------------------------------------------
// Calculators. Each returns its results in Metrics::summary.

struct ParamsCalcConfig {
    std::uint64_t mlp_inputs = 150000;
    std::uint64_t mlp_hidden = 1000;
    std::uint64_t conv_in = 128;
    std::uint64_t conv_out = 128;
    std::uint64_t conv_kernel = 3;
    std::size_t image = 224;
    std::size_t patch = 16;
};
Metrics calc_params(const ParamsCalcConfig& cfg);

struct ScalingCalcConfig {
    double phi = 1.0;
    std::uint64_t depth = 18;
    std::uint64_t width = 64;
    std::uint64_t resolution = 224;
};
Metrics calc_scaling(const ScalingCalcConfig& cfg);

struct VanishingCalcConfig {
    std::vector<double> alphas{0.9, 0.8};
    std::vector<std::uint64_t> layers{10, 30};
};
Metrics calc_vanishing(const VanishingCalcConfig& cfg);

Metrics calc_chinchilla(double params, double ratio);

struct QuantCalcConfig {
    double min = -2.5;
    double max = 2.5;
    int bits = 8;
    bool symmetric = true;
    std::vector<double> values{-2.5, 0.0, 2.5};
    std::size_t probes = 10000;
    std::uint64_t seed = 0;
};
Metrics calc_quant(const QuantCalcConfig& cfg);

}  // namespace deskml
