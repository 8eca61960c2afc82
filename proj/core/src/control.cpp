#include "diffmac/control.hpp"

#include <string>

#include "diffmac/errors.hpp"
#include "diffmac/layers.hpp"

namespace diffmac {

namespace F = torch::nn::functional;

torch::Tensor instance_normalize(const torch::Tensor& h, double std_floor) {
    if (h.dim() != 4) throw ShapeError("instance_normalize expects [B, C, H, W]");
    auto mean = h.mean({2, 3}, /*keepdim=*/true);
    auto var = (h - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
    auto stddev = var.clamp_min(std_floor * std_floor).sqrt();
    return (h - mean) / stddev;
}

torch::Tensor adain_modulate(const torch::Tensor& h, const torch::Tensor& gamma,
                             const torch::Tensor& beta) {
    if (gamma.sizes() != h.sizes() || beta.sizes() != h.sizes())
        throw ShapeError("AdaIN gamma/beta must match the feature shape");
    return gamma * instance_normalize(h) + beta + h;
}

ControlExtractorImpl::ControlExtractorImpl(int64_t in_channels, std::vector<int64_t> widths)
    : in_channels_(in_channels) {
    if (widths.empty()) throw ConfigError("control extractor needs at least one level");
    stages_ = register_module("stages", torch::nn::ModuleList());
    int64_t ch = in_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        torch::nn::Sequential stage(nn::conv3x3(ch, widths[i], i == 0 ? 1 : 2), torch::nn::SiLU(),
                                    nn::conv3x3(widths[i], widths[i]), torch::nn::SiLU());
        stages_->push_back(stage);
        ch = widths[i];
    }
}

ControlFeatures ControlExtractorImpl::forward(const torch::Tensor& manifold) {
    if (manifold.dim() != 4 || manifold.size(1) != in_channels_)
        throw ShapeError("control extractor expects [B, " + std::to_string(in_channels_) +
                         ", h, w], got " + std::to_string(manifold.dim()) + "-d input with " +
                         std::to_string(manifold.dim() > 1 ? manifold.size(1) : 0) + " channels");
    ControlFeatures out;
    auto x = manifold;
    for (const auto& stage : *stages_) {
        x = stage->as<torch::nn::Sequential>()->forward(x);
        out.levels.push_back(x);
    }
    return out;
}

AdaINModulatorImpl::AdaINModulatorImpl(std::vector<int64_t> widths) : widths_(std::move(widths)) {
    for (std::size_t b = 0; b <= widths_.size(); ++b) {
        const int64_t ch = widths_[feature_level(b)];
        gamma_.push_back(register_module("gamma" + std::to_string(b), nn::conv3x3(ch, ch)));
        beta_.push_back(register_module("beta" + std::to_string(b), nn::conv3x3(ch, ch)));
    }
    zero_init();
}

std::size_t AdaINModulatorImpl::feature_level(std::size_t block) const {
    return std::min(block, widths_.size() - 1);
}

void AdaINModulatorImpl::zero_init() {
    for (auto& c : gamma_) nn::zero_(c);
    for (auto& c : beta_) nn::zero_(c);
}

torch::Tensor AdaINModulatorImpl::forward(std::size_t block, const torch::Tensor& h,
                                          const ControlFeatures& features) {
    if (block >= blocks()) throw ShapeError("no AdaIN block " + std::to_string(block));
    const auto& zs = features[feature_level(block)];
    if (zs.size(2) != h.size(2) || zs.size(3) != h.size(3))
        throw ShapeError("control feature and block feature spatial dims differ at block " +
                         std::to_string(block));
    return adain_modulate(h, gamma_[block](zs), beta_[block](zs));
}

ControlBranchImpl::ControlBranchImpl(int64_t manifold_channels, std::vector<int64_t> widths) {
    extractor_ = register_module("extractor", ControlExtractor(manifold_channels, widths));
    modulator_ = register_module("modulator", AdaINModulator(widths));
}

ControlFeatures ControlBranchImpl::extract(const torch::Tensor& manifold) {
    return extractor_->forward(manifold);
}

torch::Tensor ControlBranchImpl::modulate(std::size_t block, const torch::Tensor& h,
                                          const ControlFeatures& features) {
    return modulator_->forward(block, h, features);
}

ControlBranch init_control_branch(int64_t manifold_channels, const std::vector<int64_t>& widths,
                                  std::uint64_t seed) {
    torch::manual_seed(seed);
    ControlBranch branch(manifold_channels, widths);
    branch->modulator()->zero_init();
    return branch;
}

}  // namespace diffmac
