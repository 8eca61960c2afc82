#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "diffmac/mib.hpp"

namespace diffmac {

/// Stage-II variants. `full` is the complete bottleneck with identity compensation.
enum class Variant {
    full,
    two_adain,     // Stage II conditioned on R directly, no bottleneck
    no_stage1,     // Stage II trained and run on LQ input, Stage I skipped
    noise_inject,  // compensation drawn from N(mu_QC, sigma_QC^2)
    no_inject,     // Z = lambda R, no compensation
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Every tunable of a run. Defaults follow the reference training protocol at desk scale.
struct Config {
    std::uint64_t seed = 0;
    int resolution = 64;
    int threads = 1;

    // diffusion stages
    int batch_size = 2;
    double learning_rate = 1e-4;
    int stage1_iterations = 2000;
    int stage2_iterations = 1000;
    int sampler_steps = 50;
    int diffusion_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // bottleneck
    double lambda_info = 0.001;
    double lambda_rec = 1.0;
    double std_floor = 0.01;
    Variant variant = Variant::full;
    ManifoldNorm manifold_norm = ManifoldNorm::dataset;
    bool stage2_warm_start = true;

    // codec
    int codec_iterations = 2000;
    int codec_batch_size = 4;
    double codec_learning_rate = 1e-3;
    double codec_kl_weight = 1e-6;

    MIBConfig mib() const { return {lambda_info, lambda_rec, std_floor}; }

    friend bool operator==(const Config&, const Config&) = default;
};

/// Parse `key = value` lines; '#' starts a comment. Unknown keys, duplicate keys
/// and out-of-range values throw ValidationError naming the key.
Config parse_config_text(const std::string& text);
Config parse_config(const std::filesystem::path& path);

/// Apply a single `key`, `value` pair on top of `config` with full validation.
void set_config_value(Config& config, const std::string& key, const std::string& value);

/// Every key, one per line, in a fixed order; doubles are written round-trippable.
std::string write_config(const Config& config);
void save_config(const Config& config, const std::filesystem::path& path);

}  // namespace diffmac
