#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "diffmac/codec.hpp"

namespace diffmac {

struct MIBConfig {
    double beta = 0.001;       // lambda_info, weight of the compression term
    double lambda_rec = 1.0;
    double std_floor = 0.01;   // o
};

/// How the compressed share (1 - lambda) of the manifold is refilled.
enum class Compensation {
    identity,  // F_R * sigma_ID + mu_ID
    none,      // zero: Z = lambda R
    noise,     // draws from N(mu_QC, sigma_QC^2)
};

/// Which statistics normalize the manifold before filtering and injection.
enum class ManifoldNorm {
    dataset,   // precomputed (mu_QC, max(sigma_QC, o))
    instance,  // per-sample, per-channel spatial mean/std of R, floored at o
};

std::string to_string(Compensation c);
std::string to_string(ManifoldNorm n);
Compensation parse_compensation(const std::string& s);
ManifoldNorm parse_manifold_norm(const std::string& s);

/// (R - mu_QC) / max(sigma_QC, o), broadcast per channel.
torch::Tensor normalize_manifold(const torch::Tensor& manifold, const QCStats& stats);
torch::Tensor normalize_manifold_instance(const torch::Tensor& manifold, double std_floor);

/// F_R * sigma_ID + mu_ID with [B, 8] modulation vectors broadcast over space.
torch::Tensor identity_inject(const torch::Tensor& normalized, const torch::Tensor& sigma_id,
                              const torch::Tensor& mu_id);

/// lambda * R + (1 - lambda) * eps_id.
torch::Tensor fuse(const torch::Tensor& manifold, const torch::Tensor& eps_id,
                   const torch::Tensor& lambda);

/// Mean over elements of -log((1 - l)^2) + 0.5 [(1 - l)^2 + (l F_R)^2 - 1].
/// lambda must lie in [0, 1); 0 is the fully-compressed limit and evaluates to 0.
torch::Tensor info_loss(const torch::Tensor& lambda, const torch::Tensor& normalized);

/// Per-element compression term and its derivative in lambda.
double info_term(double lambda, double normalized);
double info_term_dlambda(double lambda, double normalized);

/// Mean squared error ||Z - z_HQ||^2 / N.
torch::Tensor rec_loss(const torch::Tensor& fused, const torch::Tensor& target);

/// sigmoid(conv3x3(F_R)), clamped to [1e-6, 1 - 1e-6] so lambda stays inside (0, 1)
/// in float32.
class InformationFilterImpl : public torch::nn::Module {
public:
    static constexpr double kEdge = 1e-6;

    explicit InformationFilterImpl(int64_t channels = kMomentChannels);
    torch::Tensor forward(const torch::Tensor& normalized);

    torch::nn::Conv2d& conv() noexcept { return conv_; }

private:
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(InformationFilter);

/// Two fully-connected maps from an identity embedding to (sigma_ID, mu_ID).
class IdentityModulationImpl : public torch::nn::Module {
public:
    IdentityModulationImpl(int64_t embedding_dim, int64_t channels = kMomentChannels);

    /// Returns {sigma_ID, mu_ID}, each [B, channels].
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& embedding);

    torch::nn::Linear& sigma_map() noexcept { return sigma_; }
    torch::nn::Linear& mu_map() noexcept { return mu_; }

private:
    torch::nn::Linear sigma_{nullptr};
    torch::nn::Linear mu_{nullptr};
};
TORCH_MODULE(IdentityModulation);

struct MIBState {
    torch::Tensor manifold;    // R
    torch::Tensor normalized;  // F_R
    torch::Tensor lambda;
    torch::Tensor eps_id;      // F_N
    torch::Tensor fused;       // Z
    torch::Tensor info;        // scalar
};

struct MIBOptions {
    Compensation compensation = Compensation::identity;
    ManifoldNorm norm = ManifoldNorm::dataset;
};

/// Learned part of the bottleneck: information filter + identity modulation.
class MIBImpl : public torch::nn::Module {
public:
    MIBImpl(int64_t embedding_dim, std::uint64_t seed);

    /// `embedding` is [B, D]; `noise_gen` is required for Compensation::noise.
    MIBState forward(const torch::Tensor& manifold, const torch::Tensor& embedding,
                     const QCStats& stats, const MIBConfig& config, const MIBOptions& options,
                     torch::Generator* noise_gen = nullptr);

    InformationFilter& filter() noexcept { return filter_; }
    IdentityModulation& identity() noexcept { return identity_; }

private:
    InformationFilter filter_{nullptr};
    IdentityModulation identity_{nullptr};
};
TORCH_MODULE(MIB);

}  // namespace diffmac
