#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace diffmac {

inline constexpr double kInstanceStdFloor = 1e-5;

/// Multi-scale spatial features z_S^1..z_S^n, one per denoiser encoder level.
struct ControlFeatures {
    std::vector<torch::Tensor> levels;

    std::size_t size() const noexcept { return levels.size(); }
    const torch::Tensor& operator[](std::size_t i) const { return levels.at(i); }
};

/// Per-sample, per-channel normalization over the spatial dims of [B, C, H, W];
/// the standard deviation is floored at `std_floor`.
torch::Tensor instance_normalize(const torch::Tensor& h, double std_floor = kInstanceStdFloor);

/// gamma * instance_normalize(h) + beta + h. gamma and beta are [B, C, H, W] maps.
torch::Tensor adain_modulate(const torch::Tensor& h, const torch::Tensor& gamma,
                             const torch::Tensor& beta);

/// Manifold -> feature pyramid: conv + SiLU at full latent resolution, then one
/// stride-2 conv + SiLU stage per further level.
class ControlExtractorImpl : public torch::nn::Module {
public:
    ControlExtractorImpl(int64_t in_channels, std::vector<int64_t> widths);

    ControlFeatures forward(const torch::Tensor& manifold);

    int64_t in_channels() const noexcept { return in_channels_; }

private:
    int64_t in_channels_;
    torch::nn::ModuleList stages_{nullptr};
};
TORCH_MODULE(ControlExtractor);

/// Zero-initialized 3x3 convolutions producing the gamma and beta maps of each
/// modulated block. Block i < levels uses feature level i; the trailing middle
/// block reuses the deepest level.
class AdaINModulatorImpl : public torch::nn::Module {
public:
    explicit AdaINModulatorImpl(std::vector<int64_t> widths);

    std::size_t blocks() const noexcept { return gamma_.size(); }
    std::size_t feature_level(std::size_t block) const;

    torch::Tensor forward(std::size_t block, const torch::Tensor& h, const ControlFeatures& features);

    torch::nn::Conv2d& gamma_conv(std::size_t block) { return gamma_.at(block); }
    torch::nn::Conv2d& beta_conv(std::size_t block) { return beta_.at(block); }

    void zero_init();

private:
    std::vector<int64_t> widths_;
    std::vector<torch::nn::Conv2d> gamma_;
    std::vector<torch::nn::Conv2d> beta_;
};
TORCH_MODULE(AdaINModulator);

class ControlBranchImpl : public torch::nn::Module {
public:
    ControlBranchImpl(int64_t manifold_channels, std::vector<int64_t> widths);

    ControlFeatures extract(const torch::Tensor& manifold);
    torch::Tensor modulate(std::size_t block, const torch::Tensor& h, const ControlFeatures& features);

    ControlExtractor& extractor() noexcept { return extractor_; }
    AdaINModulator& modulator() noexcept { return modulator_; }

private:
    ControlExtractor extractor_{nullptr};
    AdaINModulator modulator_{nullptr};
};
TORCH_MODULE(ControlBranch);

/// Fresh control branch: extractor drawn from `seed`, gamma/beta convs all zero.
ControlBranch init_control_branch(int64_t manifold_channels, const std::vector<int64_t>& widths,
                                  std::uint64_t seed);

}  // namespace diffmac
