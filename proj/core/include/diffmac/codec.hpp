#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "diffmac/archive.hpp"
#include "diffmac/image.hpp"

namespace diffmac {

inline constexpr int64_t kLatentChannels = 4;
inline constexpr int64_t kMomentChannels = 2 * kLatentChannels;
inline constexpr int kCodecStride = 8;
inline constexpr double kLogvarMin = -30.0;
inline constexpr double kLogvarMax = 20.0;

/// Encoder + quant_conv output: [B, 8, h, w], channels 0-3 mean, 4-7 log-variance.
class Moments {
public:
    /// Accepts [8, h, w] (promoted to a batch of one) or [B, 8, h, w].
    explicit Moments(torch::Tensor tensor);

    const torch::Tensor& tensor() const noexcept { return tensor_; }
    torch::Tensor mean() const { return tensor_.narrow(1, 0, kLatentChannels); }
    torch::Tensor logvar() const { return tensor_.narrow(1, kLatentChannels, kLatentChannels); }
    int64_t batch() const { return tensor_.size(0); }

private:
    torch::Tensor tensor_;
};

/// Per-element Gaussian over the latent channels.
class DiagonalGaussian {
public:
    DiagonalGaussian(torch::Tensor mean, torch::Tensor logvar);

    const torch::Tensor& mode() const noexcept { return mean_; }
    const torch::Tensor& logvar() const noexcept { return logvar_; }
    torch::Tensor stddev() const { return torch::exp(0.5 * logvar_); }

    torch::Tensor sample(torch::Generator& gen) const;
    torch::Tensor sample(std::uint64_t seed) const;

    /// KL(N(mean, exp(logvar)) || N(0, 1)) summed over non-batch dims, shape [B].
    torch::Tensor kl_to_standard() const;

private:
    torch::Tensor mean_;
    torch::Tensor logvar_;
};

DiagonalGaussian to_distribution(const Moments& moments);

/// Encoder (x8 down) -> quant_conv (1x1, 4 -> 8) and post_quant_conv -> decoder.
class CodecNetImpl : public torch::nn::Module {
public:
    explicit CodecNetImpl(std::vector<int64_t> widths = {16, 32, 64, 64});

    /// Moments tensor with log-variance clamped to [kLogvarMin, kLogvarMax].
    torch::Tensor moments(const torch::Tensor& images);
    /// Unclipped reconstruction.
    torch::Tensor decode(const torch::Tensor& latent);

private:
    torch::nn::Conv2d enc_in_{nullptr}, enc_out_{nullptr};
    torch::nn::ModuleList enc_blocks_{nullptr}, enc_downs_{nullptr};
    torch::nn::GroupNorm enc_norm_{nullptr};
    torch::nn::Conv2d quant_conv_{nullptr};
    torch::nn::Conv2d post_quant_conv_{nullptr};
    torch::nn::Conv2d dec_in_{nullptr}, dec_out_{nullptr};
    torch::nn::ModuleList dec_blocks_{nullptr}, dec_ups_{nullptr};
    torch::nn::GroupNorm dec_norm_{nullptr};
};
TORCH_MODULE(CodecNet);

/// Frozen-at-inference codec bound to one image resolution.
class ManifoldCodec {
public:
    explicit ManifoldCodec(int resolution = 64, std::uint64_t seed = 0);

    int resolution() const noexcept { return resolution_; }
    int latent_size() const noexcept { return resolution_ / kCodecStride; }

    Moments encode(const Image& img) const;
    /// [B, 3, H, W] in, Moments out. No gradient is recorded.
    Moments encode_batch(const torch::Tensor& images) const;

    /// [4, h, w] or [1, 4, h, w] latent -> image clipped to [-1, 1].
    Image decode(const torch::Tensor& latent) const;
    torch::Tensor decode_batch(const torch::Tensor& latent) const;

    CodecNet& net() noexcept { return net_; }
    const CodecNet& net() const noexcept { return net_; }

    std::map<std::string, torch::Tensor> state() const;
    std::string hash() const;

    void save(const std::filesystem::path& path) const;
    static ManifoldCodec load(const std::filesystem::path& path);

private:
    void check_image_shape(int64_t h, int64_t w) const;

    int resolution_;
    CodecNet net_;
};

struct CodecTrainConfig {
    int iterations = 2000;
    int batch_size = 4;
    double learning_rate = 1e-3;
    double kl_weight = 1e-6;
    std::uint64_t seed = 0;
};

struct CodecTrainResult {
    ManifoldCodec codec;
    std::vector<double> losses;  // reconstruction MSE per step
};

/// Reconstruction + weighted KL training with AdamW; deterministic in config.seed.
CodecTrainResult train_codec(const std::vector<Image>& dataset, const CodecTrainConfig& config,
                             int resolution);

/// Dataset-level per-channel statistics of encoded moments.
struct QCStats {
    std::array<double, kMomentChannels> mean{};
    std::array<double, kMomentChannels> stddev{};
    std::int64_t count = 0;  // images accumulated
    double floor = 0.01;
    std::string codec_hash;

    /// [1, 8, 1, 1] float tensors.
    torch::Tensor mean_tensor() const;
    torch::Tensor floored_std_tensor() const;

    friend bool operator==(const QCStats&, const QCStats&) = default;
};

QCStats compute_qc_stats(const std::vector<Image>& dataset, const ManifoldCodec& codec);

/// Population mean/std per channel over every spatial position of every
/// [B, 8, h, w] moments tensor.
QCStats accumulate_qc_stats(const std::vector<torch::Tensor>& moments_batches);

void save_qc_stats(const QCStats& stats, const std::filesystem::path& path);
QCStats load_qc_stats(const std::filesystem::path& path);

/// Per-channel standardization of the latent mean channels with QC statistics,
/// putting diffusion latents at unit scale.
class LatentNormalizer {
public:
    explicit LatentNormalizer(const QCStats& stats);

    torch::Tensor to_diffusion(const torch::Tensor& mode) const;
    torch::Tensor from_diffusion(const torch::Tensor& z) const;

private:
    torch::Tensor shift_;
    torch::Tensor scale_;
};

}  // namespace diffmac
