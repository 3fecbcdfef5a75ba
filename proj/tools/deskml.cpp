// Command-line front end for the desk-scale experiments and calculators.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "deskml/bpe.hpp"
#include "deskml/efficiency.hpp"
#include "deskml/experiments.hpp"
#include "deskml/generative.hpp"

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::string out;
    bool json = false;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw deskml::Error("cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_text(const nlohmann::ordered_json& j, const std::string& prefix = "") {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            print_text(*it, key);
        } else if (it->is_string()) {
            std::cout << key << ": " << it->get<std::string>() << '\n';
        } else {
            std::cout << key << ": " << it->dump() << '\n';
        }
    }
}

void finish(const Globals& g, const deskml::Metrics& m) {
    if (!g.out.empty()) {
        m.write(g.out);
    }
    if (g.json) {
        std::cout << m.summary.dump(2) << '\n';
    } else {
        print_text(m.summary);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deskml: desk-scale deep learning experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "PRNG seed")->capture_default_str();
    app.add_option("--out", g.out, "Directory for metrics.csv, summary.json and other outputs");
    app.add_flag("--json", g.json, "Print the summary as JSON");

    // xor
    deskml::XorConfig xor_cfg;
    auto* xor_cmd = app.add_subcommand("xor", "Linear-only net vs tanh MLP on XOR");
    xor_cmd->add_option("--steps", xor_cfg.steps)->capture_default_str();
    xor_cmd->add_option("--hidden", xor_cfg.hidden)->capture_default_str();
    xor_cmd->add_option("--lr", xor_cfg.lr)->capture_default_str();

    // char-gpt
    deskml::CharGptConfig gpt_cfg;
    std::string corpus_path;
    auto* gpt_cmd = app.add_subcommand("char-gpt", "Character-level GPT on a text corpus");
    gpt_cmd->add_option("--corpus", corpus_path, "Text file (default: built-in 10 KiB toy corpus)");
    gpt_cmd->add_option("--steps", gpt_cfg.steps)->capture_default_str();
    gpt_cmd->add_option("--d-model", gpt_cfg.d_model)->capture_default_str();
    gpt_cmd->add_option("--layers", gpt_cfg.n_layers)->capture_default_str();
    gpt_cmd->add_option("--heads", gpt_cfg.n_heads)->capture_default_str();
    gpt_cmd->add_option("--d-ff", gpt_cfg.d_ff)->capture_default_str();
    gpt_cmd->add_option("--context", gpt_cfg.context)->capture_default_str();
    gpt_cmd->add_option("--lr", gpt_cfg.lr)->capture_default_str();
    gpt_cmd->add_option("--sample-len", gpt_cfg.sample_len)->capture_default_str();

    // vae2d
    deskml::Vae2dConfig vae_cfg;
    auto* vae_cmd = app.add_subcommand("vae2d", "VAE on 2-D two-moons data");
    vae_cmd->add_option("--epochs", vae_cfg.epochs)->capture_default_str();
    vae_cmd->add_option("--points", vae_cfg.points)->capture_default_str();
    vae_cmd->add_option("--batch", vae_cfg.batch)->capture_default_str();
    vae_cmd->add_option("--hidden", vae_cfg.hidden)->capture_default_str();
    vae_cmd->add_option("--lr", vae_cfg.lr)->capture_default_str();
    vae_cmd->add_option("--kl-weight", vae_cfg.kl_weight)->capture_default_str();

    // ddpm2d
    deskml::Ddpm2dConfig ddpm_cfg;
    std::string ddpm_data = "origin";
    auto* ddpm_cmd = app.add_subcommand("ddpm2d", "DDPM on 2-D data with ancestral and DDIM sampling");
    ddpm_cmd->add_option("--data", ddpm_data)->check(CLI::IsMember({"origin", "moons"}))->capture_default_str();
    ddpm_cmd->add_option("--timesteps", ddpm_cfg.timesteps)->capture_default_str();
    ddpm_cmd->add_option("--train-steps", ddpm_cfg.train_steps)->capture_default_str();
    ddpm_cmd->add_option("--batch", ddpm_cfg.batch)->capture_default_str();
    ddpm_cmd->add_option("--lr", ddpm_cfg.lr)->capture_default_str();
    ddpm_cmd->add_option("--samples", ddpm_cfg.samples)->capture_default_str();
    ddpm_cmd->add_option("--ddim-steps", ddpm_cfg.ddim_steps)->capture_default_str();

    // kmeans
    deskml::KMeansRunConfig km_cfg;
    std::string km_points;
    auto* km_cmd = app.add_subcommand("kmeans", "k-means on CSV points (default: 0,1,9,10 on a line)");
    km_cmd->add_option("--k", km_cfg.k)->capture_default_str();
    km_cmd->add_option("--points", km_points, "CSV file with one point per row");
    km_cmd->add_option("--max-iter", km_cfg.max_iter)->capture_default_str();

    // hopfield
    deskml::HopfieldRunConfig hop_cfg;
    auto* hop_cmd = app.add_subcommand("hopfield", "Hopfield recall of corrupted patterns");
    hop_cmd->add_option("--units", hop_cfg.units)->capture_default_str();
    hop_cmd->add_option("--patterns", hop_cfg.patterns)->capture_default_str();
    hop_cmd->add_option("--flips", hop_cfg.flips)->capture_default_str();
    hop_cmd->add_option("--trials", hop_cfg.trials)->capture_default_str();

    // bpe
    auto* bpe_cmd = app.add_subcommand("bpe", "Byte-pair encoding tokenizer");
    bpe_cmd->require_subcommand(1);
    std::string bpe_corpus;
    std::string bpe_text;
    std::string bpe_table;
    std::string bpe_tokens;
    std::size_t bpe_merges = 3;
    auto* bpe_train = bpe_cmd->add_subcommand("train", "Learn merge rules");
    bpe_train->add_option("--corpus", bpe_corpus, "Text file (default: \"low lowest newer\")");
    bpe_train->add_option("--text", bpe_text, "Inline corpus text");
    bpe_train->add_option("--merges", bpe_merges)->capture_default_str();
    bpe_train->add_option("--table", bpe_table, "Write the merge table here");
    auto* bpe_encode = bpe_cmd->add_subcommand("encode", "Tokenize text with a merge table");
    bpe_encode->add_option("--table", bpe_table)->required();
    bpe_encode->add_option("--text", bpe_text)->required();
    auto* bpe_decode = bpe_cmd->add_subcommand("decode", "Join space-separated tokens back into text");
    bpe_decode->add_option("--tokens", bpe_tokens)->required();

    // calc
    auto* calc_cmd = app.add_subcommand("calc", "Scaling and compression arithmetic");
    calc_cmd->require_subcommand(1);
    deskml::ParamsCalcConfig params_cfg;
    auto* calc_params = calc_cmd->add_subcommand("params", "MLP, convolution and ViT patch counts");
    calc_params->add_option("--mlp-inputs", params_cfg.mlp_inputs)->capture_default_str();
    calc_params->add_option("--mlp-hidden", params_cfg.mlp_hidden)->capture_default_str();
    calc_params->add_option("--conv-in", params_cfg.conv_in)->capture_default_str();
    calc_params->add_option("--conv-out", params_cfg.conv_out)->capture_default_str();
    calc_params->add_option("--kernel", params_cfg.conv_kernel)->capture_default_str();
    calc_params->add_option("--image", params_cfg.image)->capture_default_str();
    calc_params->add_option("--patch", params_cfg.patch)->capture_default_str();
    deskml::ScalingCalcConfig scaling_cfg;
    auto* calc_scaling = calc_cmd->add_subcommand("scaling", "Compound depth/width/resolution scaling");
    calc_scaling->add_option("--phi", scaling_cfg.phi)->capture_default_str();
    calc_scaling->add_option("--depth", scaling_cfg.depth)->capture_default_str();
    calc_scaling->add_option("--width", scaling_cfg.width)->capture_default_str();
    calc_scaling->add_option("--resolution", scaling_cfg.resolution)->capture_default_str();
    deskml::VanishingCalcConfig vanish_cfg;
    auto* calc_vanish = calc_cmd->add_subcommand("vanishing", "Gradient factor alpha^L");
    calc_vanish->add_option("--alpha", vanish_cfg.alphas)->capture_default_str();
    calc_vanish->add_option("--layers", vanish_cfg.layers)->capture_default_str();
    double chin_params = 70e9;
    double chin_ratio = deskml::kChinchillaTokensPerParam;
    auto* calc_chin = calc_cmd->add_subcommand("chinchilla", "Compute-optimal token budget");
    calc_chin->add_option("--params", chin_params)->capture_default_str();
    calc_chin->add_option("--ratio", chin_ratio)->capture_default_str();
    deskml::QuantCalcConfig quant_cfg;
    std::string quant_mode = "symmetric";
    auto* calc_quant = calc_cmd->add_subcommand("quant", "Quantization parameters and round-trip error");
    calc_quant->add_option("--min", quant_cfg.min)->capture_default_str();
    calc_quant->add_option("--max", quant_cfg.max)->capture_default_str();
    calc_quant->add_option("--bits", quant_cfg.bits)->capture_default_str();
    calc_quant->add_option("--mode", quant_mode)->check(CLI::IsMember({"symmetric", "affine"}))->capture_default_str();
    calc_quant->add_option("--value", quant_cfg.values, "Values to quantize")->capture_default_str();
    calc_quant->add_option("--probes", quant_cfg.probes)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (xor_cmd->parsed()) {
            xor_cfg.seed = g.seed;
            finish(g, deskml::run_xor(xor_cfg).metrics);
        } else if (gpt_cmd->parsed()) {
            gpt_cfg.seed = g.seed;
            const std::string corpus = corpus_path.empty() ? deskml::toy_corpus(10 * 1024) : read_file(corpus_path);
            finish(g, deskml::run_char_gpt(gpt_cfg, corpus).metrics);
        } else if (vae_cmd->parsed()) {
            vae_cfg.seed = g.seed;
            finish(g, deskml::run_vae2d(vae_cfg).metrics);
        } else if (ddpm_cmd->parsed()) {
            ddpm_cfg.seed = g.seed;
            ddpm_cfg.data = ddpm_data == "moons" ? deskml::Ddpm2dData::moons : deskml::Ddpm2dData::origin;
            const deskml::Ddpm2dResult r = deskml::run_ddpm2d(ddpm_cfg);
            if (!g.out.empty()) {
                std::filesystem::create_directories(g.out);
                deskml::write_points_csv((std::filesystem::path(g.out) / "samples.csv").string(), r.samples);
                deskml::write_points_csv((std::filesystem::path(g.out) / "ddim_samples.csv").string(), r.ddim);
            }
            finish(g, r.metrics);
        } else if (km_cmd->parsed()) {
            km_cfg.seed = g.seed;
            if (!km_points.empty()) {
                km_cfg.points = deskml::read_points_csv(km_points);
            }
            const deskml::KMeansRunResult r = deskml::run_kmeans(km_cfg);
            if (!g.out.empty()) {
                std::filesystem::create_directories(g.out);
                std::ofstream a(std::filesystem::path(g.out) / "assignments.csv", std::ios::binary);
                a << "point,cluster\n";
                for (std::size_t i = 0; i < r.assignments.size(); ++i) {
                    a << i << ',' << r.assignments[i] << '\n';
                }
            }
            finish(g, r.metrics);
        } else if (hop_cmd->parsed()) {
            hop_cfg.seed = g.seed;
            finish(g, deskml::run_hopfield(hop_cfg).metrics);
        } else if (bpe_train->parsed()) {
            deskml::BpeRunConfig cfg;
            cfg.merges = bpe_merges;
            if (!bpe_corpus.empty()) {
                cfg.corpus = read_file(bpe_corpus);
            } else if (!bpe_text.empty()) {
                cfg.corpus = bpe_text;
            }
            deskml::BpeRunResult r = deskml::run_bpe(cfg);
            if (!bpe_table.empty()) {
                deskml::bpe::save(r.table, bpe_table);
            }
            if (!g.out.empty()) {
                std::filesystem::create_directories(g.out);
                deskml::bpe::save(r.table, std::filesystem::path(g.out) / "merges.txt");
            }
            finish(g, r.metrics);
        } else if (bpe_encode->parsed()) {
            const deskml::bpe::MergeTable table = deskml::bpe::load(bpe_table);
            deskml::Metrics m;
            m.summary["tokens"] = deskml::bpe::encode(bpe_text, table);
            finish(g, m);
        } else if (bpe_decode->parsed()) {
            std::vector<std::string> tokens;
            std::istringstream ss(bpe_tokens);
            for (std::string t; ss >> t;) {
                tokens.push_back(t);
            }
            deskml::Metrics m;
            m.summary["text"] = deskml::bpe::decode(tokens);
            finish(g, m);
        } else if (calc_params->parsed()) {
            finish(g, deskml::calc_params(params_cfg));
        } else if (calc_scaling->parsed()) {
            finish(g, deskml::calc_scaling(scaling_cfg));
        } else if (calc_vanish->parsed()) {
            finish(g, deskml::calc_vanishing(vanish_cfg));
        } else if (calc_chin->parsed()) {
            finish(g, deskml::calc_chinchilla(chin_params, chin_ratio));
        } else if (calc_quant->parsed()) {
            quant_cfg.symmetric = quant_mode == "symmetric";
            quant_cfg.seed = g.seed;
            finish(g, deskml::calc_quant(quant_cfg));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
