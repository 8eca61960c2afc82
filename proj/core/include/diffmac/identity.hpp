#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include <torch/torch.h>

#include "diffmac/image.hpp"

namespace diffmac {

inline constexpr int64_t kEmbeddingDim = 128;

/// Unit-norm identity vector.
struct IdentityEmbedding {
    std::array<float, kEmbeddingDim> values{};

    /// Normalizes `raw` to unit length; throws DomainError on a zero or non-finite vector.
    static IdentityEmbedding from_raw(std::span<const float> raw);

    torch::Tensor tensor() const;  // [128]
    double norm() const;

    friend bool operator==(const IdentityEmbedding&, const IdentityEmbedding&) = default;
};

/// Dot product of the normalized inputs, clamped to [-1, 1]. Zero vectors throw DomainError.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b);

/// Frozen, seeded convolutional network mapping faces to unit-norm 128-vectors.
class IdentityNetImpl : public torch::nn::Module {
public:
    IdentityNetImpl();
    torch::Tensor forward(const torch::Tensor& images);

private:
    torch::nn::Sequential features_{nullptr};
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(IdentityNet);

class IdentityEmbedder {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x1D1D1D1DULL;

    explicit IdentityEmbedder(int resolution = 64, std::uint64_t seed = kDefaultSeed);

    int resolution() const noexcept { return resolution_; }

    IdentityEmbedding embed(const Image& img) const;
    /// [B, 3, H, W] -> [B, 128] unit rows, no gradient.
    torch::Tensor embed_batch(const torch::Tensor& images) const;

private:
    int resolution_;
    IdentityNet net_{nullptr};
};

/// Per-image embedding overrides: JSON object {path: [128 floats]}. Vectors are
/// normalized on load.
std::map<std::string, IdentityEmbedding> load_embedding_overrides(const std::filesystem::path& path);
void save_embedding_overrides(const std::map<std::string, IdentityEmbedding>& overrides,
                              const std::filesystem::path& path);

}  // namespace diffmac
