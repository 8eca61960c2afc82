#include "diffmac/identity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "diffmac/errors.hpp"
#include "diffmac/layers.hpp"
#include "diffmac/tensor_bridge.hpp"

namespace diffmac {

IdentityEmbedding IdentityEmbedding::from_raw(std::span<const float> raw) {
    if (raw.size() != static_cast<std::size_t>(kEmbeddingDim))
        throw ShapeError("identity embedding must have 128 entries, got " + std::to_string(raw.size()));
    double sq = 0.0;
    for (float v : raw) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0) || !std::isfinite(sq)) throw DomainError("identity embedding has zero or non-finite norm");
    const double inv = 1.0 / std::sqrt(sq);
    IdentityEmbedding e;
    for (std::size_t i = 0; i < raw.size(); ++i) e.values[i] = static_cast<float>(raw[i] * inv);
    return e;
}

torch::Tensor IdentityEmbedding::tensor() const {
    return torch::from_blob(const_cast<float*>(values.data()), {kEmbeddingDim}, torch::kFloat32).clone();
}

double IdentityEmbedding::norm() const {
    double sq = 0.0;
    for (float v : values) sq += static_cast<double>(v) * v;
    return std::sqrt(sq);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ShapeError("cosine similarity of vectors with different lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double cosine_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b) {
    return cosine_similarity(std::span<const float>(a.values), std::span<const float>(b.values));
}

IdentityNetImpl::IdentityNetImpl() {
    features_ = register_module(
        "features",
        torch::nn::Sequential(nn::conv3x3(3, 16, 2), torch::nn::Tanh(), nn::conv3x3(16, 32, 2),
                              torch::nn::Tanh(), nn::conv3x3(32, 64, 2), torch::nn::Tanh(),
                              torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions({4, 4}))));
    head_ = register_module("head", torch::nn::Linear(64 * 4 * 4, kEmbeddingDim));
}

torch::Tensor IdentityNetImpl::forward(const torch::Tensor& images) {
    auto f = features_->forward(images).flatten(1);
    f = f - f.mean(1, true);
    auto e = head_(f);
    return e / e.norm(2, {1}, true).clamp_min(1e-12);
}

IdentityEmbedder::IdentityEmbedder(int resolution, std::uint64_t seed) : resolution_(resolution) {
    torch::manual_seed(seed);
    net_ = IdentityNet();
    net_->eval();
    for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

torch::Tensor IdentityEmbedder::embed_batch(const torch::Tensor& images) const {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != resolution_ ||
        images.size(3) != resolution_)
        throw ShapeError("identity embedder expects [B, 3, " + std::to_string(resolution_) + ", " +
                         std::to_string(resolution_) + "] images");
    torch::NoGradGuard no_grad;
    return net_.ptr()->forward(images);
}

IdentityEmbedding IdentityEmbedder::embed(const Image& img) const {
    auto e = embed_batch(to_tensor(img).unsqueeze(0))[0].contiguous();
    return IdentityEmbedding::from_raw(std::span<const float>(e.data_ptr<float>(), kEmbeddingDim));
}

std::map<std::string, IdentityEmbedding> load_embedding_overrides(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read embedding file " + path.string());
    std::map<std::string, IdentityEmbedding> out;
    try {
        const auto j = nlohmann::json::parse(in);
        for (const auto& [key, value] : j.items()) {
            const auto raw = value.get<std::vector<float>>();
            out.emplace(key, IdentityEmbedding::from_raw(raw));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed embedding file " + path.string() + ": " + e.what());
    }
    return out;
}

void save_embedding_overrides(const std::map<std::string, IdentityEmbedding>& overrides,
                              const std::filesystem::path& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [key, e] : overrides)
        j[key] = std::vector<float>(e.values.begin(), e.values.end());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write embedding file " + path.string());
    out << j.dump() << '\n';
}

}  // namespace diffmac
