#include "diffmac/codec.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "diffmac/errors.hpp"
#include "diffmac/layers.hpp"
#include "diffmac/tensor_bridge.hpp"

namespace diffmac {

namespace F = torch::nn::functional;

Moments::Moments(torch::Tensor tensor) : tensor_(std::move(tensor)) {
    if (tensor_.dim() == 3) tensor_ = tensor_.unsqueeze(0);
    if (tensor_.dim() != 4 || tensor_.size(1) != kMomentChannels)
        throw ShapeError("moments must have shape [B, 8, h, w]");
}

DiagonalGaussian::DiagonalGaussian(torch::Tensor mean, torch::Tensor logvar)
    : mean_(std::move(mean)), logvar_(logvar.clamp(kLogvarMin, kLogvarMax)) {
    if (mean_.sizes() != logvar_.sizes()) throw ShapeError("mean and logvar shapes differ");
}

torch::Tensor DiagonalGaussian::sample(torch::Generator& gen) const {
    auto eps = torch::randn(mean_.sizes(), gen, mean_.options());
    return mean_ + stddev() * eps;
}

torch::Tensor DiagonalGaussian::sample(std::uint64_t seed) const {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    return sample(gen);
}

torch::Tensor DiagonalGaussian::kl_to_standard() const {
    auto kl = 0.5 * (mean_.pow(2) + logvar_.exp() - 1.0 - logvar_);
    return kl.flatten(1).sum(1);
}

DiagonalGaussian to_distribution(const Moments& moments) {
    return DiagonalGaussian(moments.mean(), moments.logvar());
}

CodecNetImpl::CodecNetImpl(std::vector<int64_t> widths) {
    if (widths.size() != 4) throw ConfigError("codec expects 4 stage widths");
    enc_in_ = register_module("enc_in", nn::conv3x3(3, widths[0]));
    enc_blocks_ = register_module("enc_blocks", torch::nn::ModuleList());
    enc_downs_ = register_module("enc_downs", torch::nn::ModuleList());
    int64_t ch = widths[0];
    for (std::size_t i = 0; i < widths.size(); ++i) {
        enc_blocks_->push_back(nn::ResBlock(ch, widths[i]));
        ch = widths[i];
        if (i + 1 < widths.size()) enc_downs_->push_back(nn::Downsample(ch));
    }
    enc_norm_ = register_module("enc_norm", nn::group_norm(ch));
    enc_out_ = register_module("enc_out", nn::conv3x3(ch, kLatentChannels));
    quant_conv_ = register_module("quant_conv", nn::conv1x1(kLatentChannels, kMomentChannels));

    post_quant_conv_ = register_module("post_quant_conv", nn::conv1x1(kLatentChannels, kLatentChannels));
    dec_in_ = register_module("dec_in", nn::conv3x3(kLatentChannels, widths.back()));
    dec_blocks_ = register_module("dec_blocks", torch::nn::ModuleList());
    dec_ups_ = register_module("dec_ups", torch::nn::ModuleList());
    ch = widths.back();
    for (std::size_t k = widths.size(); k-- > 0;) {
        dec_blocks_->push_back(nn::ResBlock(ch, widths[k]));
        ch = widths[k];
        if (k > 0) dec_ups_->push_back(nn::Upsample(ch));
    }
    dec_norm_ = register_module("dec_norm", nn::group_norm(ch));
    dec_out_ = register_module("dec_out", nn::conv3x3(ch, 3));
}

torch::Tensor CodecNetImpl::moments(const torch::Tensor& images) {
    auto h = enc_in_(images);
    for (std::size_t i = 0; i < enc_blocks_->size(); ++i) {
        h = enc_blocks_[i]->as<nn::ResBlock>()->forward(h);
        if (i < enc_downs_->size()) h = enc_downs_[i]->as<nn::Downsample>()->forward(h);
    }
    h = enc_out_(F::silu(enc_norm_(h)));
    auto m = quant_conv_(h);
    auto mean = m.narrow(1, 0, kLatentChannels);
    auto logvar = m.narrow(1, kLatentChannels, kLatentChannels).clamp(kLogvarMin, kLogvarMax);
    return torch::cat({mean, logvar}, 1);
}

torch::Tensor CodecNetImpl::decode(const torch::Tensor& latent) {
    auto h = dec_in_(post_quant_conv_(latent));
    for (std::size_t i = 0; i < dec_blocks_->size(); ++i) {
        h = dec_blocks_[i]->as<nn::ResBlock>()->forward(h);
        if (i < dec_ups_->size()) h = dec_ups_[i]->as<nn::Upsample>()->forward(h);
    }
    return dec_out_(F::silu(dec_norm_(h)));
}

ManifoldCodec::ManifoldCodec(int resolution, std::uint64_t seed)
    : resolution_(resolution), net_(nullptr) {
    if (resolution < kCodecStride || resolution % kCodecStride != 0)
        throw ConfigError("codec resolution must be a positive multiple of 8");
    torch::manual_seed(seed);
    net_ = CodecNet();
}

void ManifoldCodec::check_image_shape(int64_t h, int64_t w) const {
    if (h != resolution_ || w != resolution_)
        throw ShapeError("codec expects " + std::to_string(resolution_) + "x" +
                         std::to_string(resolution_) + " images, got " + std::to_string(h) + "x" +
                         std::to_string(w));
}

Moments ManifoldCodec::encode(const Image& img) const {
    check_image_shape(img.height(), img.width());
    return encode_batch(to_tensor(img).unsqueeze(0));
}

Moments ManifoldCodec::encode_batch(const torch::Tensor& images) const {
    if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("expected [B, 3, H, W] images");
    check_image_shape(images.size(2), images.size(3));
    torch::NoGradGuard no_grad;
    return Moments(net_.ptr()->moments(images));
}

torch::Tensor ManifoldCodec::decode_batch(const torch::Tensor& latent) const {
    const int64_t s = latent_size();
    if (latent.dim() != 4 || latent.size(1) != kLatentChannels || latent.size(2) != s ||
        latent.size(3) != s)
        throw ShapeError("decoder expects [B, 4, " + std::to_string(s) + ", " + std::to_string(s) +
                         "] latents");
    torch::NoGradGuard no_grad;
    return net_.ptr()->decode(latent).clamp(-1.0, 1.0);
}

Image ManifoldCodec::decode(const torch::Tensor& latent) const {
    auto z = latent.dim() == 3 ? latent.unsqueeze(0) : latent;
    if (z.dim() != 4 || z.size(0) != 1) throw ShapeError("decode expects a single latent");
    return to_image(decode_batch(z)[0]);
}

std::map<std::string, torch::Tensor> ManifoldCodec::state() const {
    std::map<std::string, torch::Tensor> tensors;
    export_module(*net_, "codec.", tensors);
    return tensors;
}

std::string ManifoldCodec::hash() const { return fingerprint(state()); }

void ManifoldCodec::save(const std::filesystem::path& path) const {
    TensorArchive archive;
    archive.metadata["kind"] = "codec";
    archive.metadata["resolution"] = std::to_string(resolution_);
    archive.tensors = state();
    save_archive(archive, path);
}

ManifoldCodec ManifoldCodec::load(const std::filesystem::path& path) {
    const auto archive = load_archive(path);
    if (archive.meta("kind") != "codec") throw ConfigError(path.string() + " is not a codec checkpoint");
    ManifoldCodec codec(std::stoi(archive.meta("resolution")));
    import_module(*codec.net_, "codec.", archive.tensors);
    return codec;
}

CodecTrainResult train_codec(const std::vector<Image>& dataset, const CodecTrainConfig& config,
                             int resolution) {
    if (dataset.empty()) throw ConfigError("codec training needs a non-empty dataset");
    if (config.batch_size < 1) throw ConfigError("codec batch size must be positive");
    ManifoldCodec codec(resolution, config.seed);
    const auto images = to_batch(dataset);
    codec.net()->train();
    torch::optim::AdamW optim(codec.net()->parameters(),
                              torch::optim::AdamWOptions(config.learning_rate));
    std::mt19937_64 rng(config.seed ^ 0xC0DECULL);
    std::uniform_int_distribution<int64_t> pick(0, images.size(0) - 1);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed + 1);

    CodecTrainResult result{codec, {}};
    result.losses.reserve(static_cast<std::size_t>(config.iterations));
    for (int step = 0; step < config.iterations; ++step) {
        std::vector<int64_t> idx(static_cast<std::size_t>(config.batch_size));
        for (auto& i : idx) i = pick(rng);
        auto x = images.index_select(0, torch::tensor(idx, torch::kInt64));
        auto posterior = to_distribution(Moments(codec.net()->moments(x)));
        auto recon = codec.net()->decode(posterior.sample(gen));
        auto rec = F::mse_loss(recon, x);
        auto loss = rec + config.kl_weight * posterior.kl_to_standard().mean();
        optim.zero_grad();
        loss.backward();
        optim.step();
        result.losses.push_back(rec.item<double>());
    }
    codec.net()->eval();
    return result;
}

torch::Tensor QCStats::mean_tensor() const {
    auto t = torch::empty({1, kMomentChannels, 1, 1}, torch::kFloat32);
    for (int64_t c = 0; c < kMomentChannels; ++c) t[0][c][0][0] = static_cast<float>(mean[c]);
    return t;
}

torch::Tensor QCStats::floored_std_tensor() const {
    auto t = torch::empty({1, kMomentChannels, 1, 1}, torch::kFloat32);
    for (int64_t c = 0; c < kMomentChannels; ++c)
        t[0][c][0][0] = static_cast<float>(std::max(stddev[c], floor));
    return t;
}

QCStats accumulate_qc_stats(const std::vector<torch::Tensor>& moments_batches) {
    // Chan et al. parallel merge of per-batch (n, mean, M2) in double.
    std::array<double, kMomentChannels> mean{}, m2{};
    double n = 0.0;
    std::int64_t images = 0;
    for (const auto& batch : moments_batches) {
        if (batch.dim() != 4 || batch.size(1) != kMomentChannels)
            throw ShapeError("moments batch must be [B, 8, h, w]");
        auto t = batch.detach().to(torch::kFloat64).transpose(0, 1).reshape({kMomentChannels, -1});
        const double nb = static_cast<double>(t.size(1));
        if (nb == 0) continue;
        auto bmean = t.mean(1);
        auto bm2 = (t - bmean.unsqueeze(1)).pow(2).sum(1);
        for (int64_t c = 0; c < kMomentChannels; ++c) {
            const double mb = bmean[c].item<double>();
            const double delta = mb - mean[c];
            const double total = n + nb;
            mean[c] += delta * nb / total;
            m2[c] += bm2[c].item<double>() + delta * delta * n * nb / total;
        }
        n += nb;
        images += batch.size(0);
    }
    if (images == 0) throw ConfigError("QC statistics need at least one image");
    QCStats stats;
    stats.count = images;
    for (int64_t c = 0; c < kMomentChannels; ++c) {
        stats.mean[c] = mean[c];
        stats.stddev[c] = std::sqrt(std::max(m2[c] / n, 0.0));
    }
    return stats;
}

QCStats compute_qc_stats(const std::vector<Image>& dataset, const ManifoldCodec& codec) {
    if (dataset.empty()) throw ConfigError("QC statistics need a non-empty dataset");
    std::vector<torch::Tensor> batches;
    batches.reserve(dataset.size());
    for (const auto& img : dataset) batches.push_back(codec.encode(img).tensor());
    auto stats = accumulate_qc_stats(batches);
    stats.codec_hash = codec.hash();
    return stats;
}

void save_qc_stats(const QCStats& stats, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["count"] = stats.count;
    j["floor"] = stats.floor;
    j["codec_hash"] = stats.codec_hash;
    auto channels = nlohmann::ordered_json::array();
    for (int64_t c = 0; c < kMomentChannels; ++c)
        channels.push_back({{"channel", c}, {"mean", stats.mean[c]}, {"std", stats.stddev[c]}});
    j["channels"] = channels;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write stats file " + path.string());
    out << j.dump(2) << '\n';
}

QCStats load_qc_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read stats file " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        QCStats stats;
        stats.count = j.at("count").get<std::int64_t>();
        stats.floor = j.at("floor").get<double>();
        stats.codec_hash = j.at("codec_hash").get<std::string>();
        const auto& channels = j.at("channels");
        if (channels.size() != static_cast<std::size_t>(kMomentChannels))
            throw ConfigError("stats file must list 8 channels");
        for (const auto& ch : channels) {
            const auto c = ch.at("channel").get<int64_t>();
            if (c < 0 || c >= kMomentChannels) throw ConfigError("bad channel index in stats file");
            stats.mean[c] = ch.at("mean").get<double>();
            stats.stddev[c] = ch.at("std").get<double>();
        }
        if (stats.count < 1) throw ConfigError("stats count must be >= 1");
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed stats file " + path.string() + ": " + e.what());
    }
}

LatentNormalizer::LatentNormalizer(const QCStats& stats)
    : shift_(stats.mean_tensor().narrow(1, 0, kLatentChannels)),
      scale_(stats.floored_std_tensor().narrow(1, 0, kLatentChannels)) {}

torch::Tensor LatentNormalizer::to_diffusion(const torch::Tensor& mode) const {
    return (mode - shift_) / scale_;
}

torch::Tensor LatentNormalizer::from_diffusion(const torch::Tensor& z) const {
    return z * scale_ + shift_;
}

}  // namespace diffmac
