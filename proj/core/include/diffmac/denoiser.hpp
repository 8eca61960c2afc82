#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "diffmac/control.hpp"
#include "diffmac/layers.hpp"

namespace diffmac {

struct DenoiserConfig {
    int64_t latent_channels = 4;
    int64_t manifold_channels = 8;
    std::vector<int64_t> widths = {32, 64, 128};
    int64_t time_dim = 128;
};

/// Sinusoidal embedding of integer timesteps: [B] -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

/// eps-prediction UNet. Each encoder level is one ResBlock followed (optionally) by
/// AdaIN modulation and a stride-2 downsample; the middle block is modulated too.
/// The decoder mirrors the encoder with skip concatenation and is never modulated.
class UNetImpl : public torch::nn::Module {
public:
    explicit UNetImpl(const DenoiserConfig& config);

    /// `control` and `features` are either both null (base model) or both set.
    /// `trace`, if given, receives the post-modulation feature of every modulated block.
    torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t,
                          ControlBranchImpl* control = nullptr,
                          const ControlFeatures* features = nullptr,
                          std::vector<torch::Tensor>* trace = nullptr);

    const DenoiserConfig& config() const noexcept { return config_; }

private:
    DenoiserConfig config_;
    torch::nn::Sequential time_mlp_{nullptr};
    torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
    torch::nn::ModuleList enc_blocks_{nullptr}, downs_{nullptr};
    torch::nn::ModuleList dec_blocks_{nullptr}, ups_{nullptr};
    nn::ResBlock mid_{nullptr};
    torch::nn::GroupNorm norm_out_{nullptr};
};
TORCH_MODULE(UNet);

/// Base UNet plus AdaIN control branch.
class ControlledDenoiserImpl : public torch::nn::Module {
public:
    ControlledDenoiserImpl(const DenoiserConfig& config, std::uint64_t seed);

    /// eps prediction conditioned on an 8-channel manifold; an undefined
    /// `manifold` runs the base model alone.
    torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t,
                          const torch::Tensor& manifold = {},
                          std::vector<torch::Tensor>* trace = nullptr);

    /// Same as forward with precomputed features (reused across sampling steps).
    torch::Tensor forward_features(const torch::Tensor& z_t, const torch::Tensor& t,
                                   const ControlFeatures& features,
                                   std::vector<torch::Tensor>* trace = nullptr);

    UNet& unet() noexcept { return unet_; }
    ControlBranch& control() noexcept { return control_; }
    const DenoiserConfig& config() const noexcept { return unet_->config(); }

private:
    UNet unet_{nullptr};
    ControlBranch control_{nullptr};
};
TORCH_MODULE(ControlledDenoiser);

}  // namespace diffmac
