#include "diffmac/mib.hpp"

#include <cmath>

#include "diffmac/errors.hpp"
#include "diffmac/layers.hpp"

namespace diffmac {

std::string to_string(Compensation c) {
    switch (c) {
        case Compensation::identity: return "identity";
        case Compensation::none: return "none";
        case Compensation::noise: return "noise";
    }
    return "identity";
}

std::string to_string(ManifoldNorm n) {
    return n == ManifoldNorm::dataset ? "dataset" : "instance";
}

Compensation parse_compensation(const std::string& s) {
    if (s == "identity") return Compensation::identity;
    if (s == "none") return Compensation::none;
    if (s == "noise") return Compensation::noise;
    throw ParameterError("unknown compensation '" + s + "'");
}

ManifoldNorm parse_manifold_norm(const std::string& s) {
    if (s == "dataset") return ManifoldNorm::dataset;
    if (s == "instance") return ManifoldNorm::instance;
    throw ParameterError("unknown manifold normalization '" + s + "'");
}

torch::Tensor normalize_manifold(const torch::Tensor& manifold, const QCStats& stats) {
    if (manifold.dim() != 4 || manifold.size(1) != kMomentChannels)
        throw ShapeError("manifold must be [B, 8, h, w]");
    const auto opts = manifold.options();
    return (manifold - stats.mean_tensor().to(opts)) / stats.floored_std_tensor().to(opts);
}

torch::Tensor normalize_manifold_instance(const torch::Tensor& manifold, double std_floor) {
    if (manifold.dim() != 4) throw ShapeError("manifold must be [B, C, h, w]");
    auto mean = manifold.mean({2, 3}, true);
    auto stddev = (manifold - mean).pow(2).mean({2, 3}, true).sqrt().clamp_min(std_floor);
    return (manifold - mean) / stddev;
}

torch::Tensor identity_inject(const torch::Tensor& normalized, const torch::Tensor& sigma_id,
                              const torch::Tensor& mu_id) {
    if (normalized.dim() != 4) throw ShapeError("normalized manifold must be [B, C, h, w]");
    const auto b = normalized.size(0);
    const auto c = normalized.size(1);
    if (sigma_id.sizes() != torch::IntArrayRef{b, c} || mu_id.sizes() != torch::IntArrayRef{b, c})
        throw ShapeError("identity modulation must be [B, C]");
    return normalized * sigma_id.view({b, c, 1, 1}) + mu_id.view({b, c, 1, 1});
}

torch::Tensor fuse(const torch::Tensor& manifold, const torch::Tensor& eps_id,
                   const torch::Tensor& lambda) {
    if (manifold.sizes() != eps_id.sizes() || manifold.sizes() != lambda.sizes())
        throw ShapeError("fuse: R, eps_id and lambda must share one shape");
    return lambda * manifold + (1.0 - lambda) * eps_id;
}

torch::Tensor info_loss(const torch::Tensor& lambda, const torch::Tensor& normalized) {
    if (lambda.sizes() != normalized.sizes()) throw ShapeError("info_loss: shape mismatch");
    {
        torch::NoGradGuard no_grad;
        if (lambda.numel() > 0 &&
            (lambda.min().item<double>() < 0.0 || lambda.max().item<double>() >= 1.0))
            throw DomainError("info_loss needs lambda in [0, 1)");
    }
    auto keep = 1.0 - lambda;
    auto term = -torch::log(keep.pow(2)) +
                0.5 * (keep.pow(2) + (lambda * normalized).pow(2) - 1.0);
    return term.mean();
}

double info_term(double lambda, double normalized) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("info_term needs lambda in [0, 1)");
    const double keep = 1.0 - lambda;
    const double scaled = lambda * normalized;
    return -std::log(keep * keep) + 0.5 * (keep * keep + scaled * scaled - 1.0);
}

double info_term_dlambda(double lambda, double normalized) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("info_term needs lambda in [0, 1)");
    const double keep = 1.0 - lambda;
    return 2.0 / keep - keep + lambda * normalized * normalized;
}

torch::Tensor rec_loss(const torch::Tensor& fused, const torch::Tensor& target) {
    if (fused.sizes() != target.sizes()) throw ShapeError("rec_loss: shape mismatch");
    return (fused - target).pow(2).mean();
}

InformationFilterImpl::InformationFilterImpl(int64_t channels) {
    conv_ = register_module("conv", nn::conv3x3(channels, channels));
}

torch::Tensor InformationFilterImpl::forward(const torch::Tensor& normalized) {
    return torch::sigmoid(conv_(normalized)).clamp(kEdge, 1.0 - kEdge);
}

IdentityModulationImpl::IdentityModulationImpl(int64_t embedding_dim, int64_t channels) {
    sigma_ = register_module("sigma", torch::nn::Linear(embedding_dim, channels));
    mu_ = register_module("mu", torch::nn::Linear(embedding_dim, channels));
    torch::NoGradGuard no_grad;
    // Start near the identity modulation (sigma ~ 1, mu ~ 0).
    sigma_->bias.fill_(1.0);
    mu_->bias.zero_();
}

std::pair<torch::Tensor, torch::Tensor> IdentityModulationImpl::forward(const torch::Tensor& embedding) {
    return {sigma_(embedding), mu_(embedding)};
}

MIBImpl::MIBImpl(int64_t embedding_dim, std::uint64_t seed) {
    torch::manual_seed(seed);
    filter_ = register_module("filter", InformationFilter(kMomentChannels));
    identity_ = register_module("identity", IdentityModulation(embedding_dim, kMomentChannels));
}

MIBState MIBImpl::forward(const torch::Tensor& manifold, const torch::Tensor& embedding,
                          const QCStats& stats, const MIBConfig& config, const MIBOptions& options,
                          torch::Generator* noise_gen) {
    MIBState s;
    s.manifold = manifold;
    s.normalized = options.norm == ManifoldNorm::dataset
                       ? normalize_manifold(manifold, QCStats{stats.mean, stats.stddev, stats.count,
                                                              config.std_floor, stats.codec_hash})
                       : normalize_manifold_instance(manifold, config.std_floor);
    s.lambda = filter_(s.normalized);
    switch (options.compensation) {
        case Compensation::identity: {
            auto [sigma_id, mu_id] = identity_(embedding);
            s.eps_id = identity_inject(s.normalized, sigma_id, mu_id);
            break;
        }
        case Compensation::none:
            s.eps_id = torch::zeros_like(manifold);
            break;
        case Compensation::noise: {
            if (noise_gen == nullptr) throw ConfigError("noise compensation needs a generator");
            auto n = torch::randn(manifold.sizes(), *noise_gen, manifold.options());
            auto sigma = torch::tensor(std::vector<double>(stats.stddev.begin(), stats.stddev.end()))
                             .view({1, kMomentChannels, 1, 1})
                             .to(manifold.options());
            s.eps_id = stats.mean_tensor().to(manifold.options()) + n * sigma;
            break;
        }
    }
    s.fused = fuse(manifold, s.eps_id, s.lambda);
    s.info = info_loss(s.lambda, s.normalized);
    return s;
}

}  // namespace diffmac
