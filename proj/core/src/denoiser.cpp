#include "diffmac/denoiser.hpp"

#include <cmath>

#include "diffmac/errors.hpp"

namespace diffmac {

namespace F = torch::nn::functional;

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
    const int64_t half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / half);
    auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::cos(args), torch::sin(args)}, 1);
}

UNetImpl::UNetImpl(const DenoiserConfig& config) : config_(config) {
    const auto& w = config_.widths;
    if (w.empty()) throw ConfigError("denoiser needs at least one level");
    time_mlp_ = register_module(
        "time_mlp", torch::nn::Sequential(torch::nn::Linear(w[0], config_.time_dim), torch::nn::SiLU(),
                                          torch::nn::Linear(config_.time_dim, config_.time_dim)));
    conv_in_ = register_module("conv_in", nn::conv3x3(config_.latent_channels, w[0]));
    enc_blocks_ = register_module("enc_blocks", torch::nn::ModuleList());
    downs_ = register_module("downs", torch::nn::ModuleList());
    int64_t ch = w[0];
    for (std::size_t i = 0; i < w.size(); ++i) {
        enc_blocks_->push_back(nn::ResBlock(ch, w[i], config_.time_dim));
        ch = w[i];
        if (i + 1 < w.size()) downs_->push_back(nn::Downsample(ch));
    }
    mid_ = register_module("mid", nn::ResBlock(ch, ch, config_.time_dim));
    dec_blocks_ = register_module("dec_blocks", torch::nn::ModuleList());
    ups_ = register_module("ups", torch::nn::ModuleList());
    for (std::size_t k = w.size(); k-- > 0;) {
        dec_blocks_->push_back(nn::ResBlock(ch + w[k], w[k], config_.time_dim));
        ch = w[k];
        if (k > 0) ups_->push_back(nn::Upsample(ch));
    }
    norm_out_ = register_module("norm_out", nn::group_norm(ch));
    conv_out_ = register_module("conv_out", nn::conv3x3(ch, config_.latent_channels));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                ControlBranchImpl* control, const ControlFeatures* features,
                                std::vector<torch::Tensor>* trace) {
    if (z_t.dim() != 4 || z_t.size(1) != config_.latent_channels)
        throw ShapeError("denoiser expects [B, " + std::to_string(config_.latent_channels) +
                         ", h, w] latents");
    if ((control == nullptr) != (features == nullptr))
        throw ConfigError("control branch and control features must be given together");
    const std::size_t levels = config_.widths.size();
    if (features && features->size() != levels)
        throw ShapeError("control features have " + std::to_string(features->size()) +
                         " levels, denoiser has " + std::to_string(levels));

    auto temb = time_mlp_->forward(timestep_embedding(t, config_.widths[0]));
    auto h = conv_in_(z_t);
    std::vector<torch::Tensor> skips;
    for (std::size_t i = 0; i < levels; ++i) {
        h = enc_blocks_[i]->as<nn::ResBlock>()->forward(h, temb);
        if (control) h = control->modulate(i, h, *features);
        if (trace) trace->push_back(h);
        skips.push_back(h);
        if (i < downs_->size()) h = downs_[i]->as<nn::Downsample>()->forward(h);
    }
    h = mid_->forward(h, temb);
    if (control) h = control->modulate(levels, h, *features);
    if (trace) trace->push_back(h);
    for (std::size_t k = 0; k < levels; ++k) {
        h = torch::cat({h, skips[levels - 1 - k]}, 1);
        h = dec_blocks_[k]->as<nn::ResBlock>()->forward(h, temb);
        if (k < ups_->size()) h = ups_[k]->as<nn::Upsample>()->forward(h);
    }
    return conv_out_(F::silu(norm_out_(h)));
}

ControlledDenoiserImpl::ControlledDenoiserImpl(const DenoiserConfig& config, std::uint64_t seed) {
    torch::manual_seed(seed);
    unet_ = register_module("unet", UNet(config));
    control_ = register_module(
        "control", init_control_branch(config.manifold_channels, config.widths, seed + 1));
}

torch::Tensor ControlledDenoiserImpl::forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                              const torch::Tensor& manifold,
                                              std::vector<torch::Tensor>* trace) {
    if (!manifold.defined()) return unet_->forward(z_t, t, nullptr, nullptr, trace);
    const auto features = control_->extract(manifold);
    return forward_features(z_t, t, features, trace);
}

torch::Tensor ControlledDenoiserImpl::forward_features(const torch::Tensor& z_t,
                                                       const torch::Tensor& t,
                                                       const ControlFeatures& features,
                                                       std::vector<torch::Tensor>* trace) {
    return unet_->forward(z_t, t, control_.get(), &features, trace);
}

}  // namespace diffmac
