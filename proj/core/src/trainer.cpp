#include "diffmac/trainer.hpp"

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "diffmac/archive.hpp"
#include "diffmac/degradation.hpp"
#include "diffmac/errors.hpp"
#include "diffmac/tensor_bridge.hpp"

namespace diffmac {

std::string to_json_line(const TrainLogRecord& r) {
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["ldm"] = r.ldm;
    j["info"] = r.info;
    j["rec"] = r.rec;
    j["total"] = r.total;
    return j.dump();
}

TrainLogRecord train_log_record_from_json(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        return {j.at("iteration").get<int>(), j.at("ldm").get<double>(), j.at("info").get<double>(),
                j.at("rec").get<double>(), j.at("total").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed training log line: ") + e.what());
    }
}

void write_train_log(const std::vector<TrainLogRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write training log " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read training log " + path.string());
    std::vector<TrainLogRecord> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(train_log_record_from_json(line));
    return out;
}

CodecAssets CodecAssets::make(ManifoldCodec codec, QCStats stats) {
    CodecAssets assets(std::move(codec), std::move(stats));
    assets.hash_ = assets.codec.hash();
    if (assets.stats.codec_hash != assets.hash_)
        throw ConfigError("stats were computed with codec " + assets.stats.codec_hash +
                          " but the loaded codec is " + assets.hash_);
    return assets;
}

CodecAssets CodecAssets::load(const std::filesystem::path& codec_path,
                              const std::filesystem::path& stats_path) {
    return make(ManifoldCodec::load(codec_path), load_qc_stats(stats_path));
}

DenoiserConfig denoiser_config() { return DenoiserConfig{}; }

NoiseSchedule schedule_for(const Config& config) {
    return make_schedule(config.diffusion_steps, config.beta_start, config.beta_end);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::map<std::string, torch::Tensor> StageModel::tensors() const {
    std::map<std::string, torch::Tensor> out;
    export_module(*denoiser, "denoiser.", out);
    if (mib) export_module(*mib, "mib.", out);
    return out;
}

void StageModel::save(const std::filesystem::path& path) const {
    TensorArchive archive;
    archive.metadata["kind"] = "stage";
    archive.metadata["schema"] = std::to_string(kCheckpointSchema);
    archive.metadata["stage"] = std::to_string(stage);
    archive.metadata["iteration"] = std::to_string(iteration);
    archive.metadata["codec_hash"] = codec_hash;
    archive.metadata["config"] = write_config(config);
    archive.metadata["has_mib"] = mib ? "true" : "false";
    archive.tensors = tensors();
    save_archive(archive, path);
}

StageModel StageModel::load(const std::filesystem::path& path) {
    const auto archive = load_archive(path);
    if (archive.meta("kind") != "stage") throw ConfigError(path.string() + " is not a stage checkpoint");
    if (archive.meta("schema") != std::to_string(kCheckpointSchema))
        throw ConfigError("unsupported checkpoint schema " + archive.meta("schema"));
    StageModel m;
    m.stage = std::stoi(archive.meta("stage"));
    m.iteration = std::stoi(archive.meta("iteration"));
    m.codec_hash = archive.meta("codec_hash");
    m.config = parse_config_text(archive.meta("config"));
    m.denoiser = ControlledDenoiser(denoiser_config(), m.config.seed);
    import_module(*m.denoiser, "denoiser.", archive.tensors);
    if (archive.meta("has_mib") == "true") {
        m.mib = MIB(kEmbeddingDim, m.config.seed);
        import_module(*m.mib, "mib.", archive.tensors);
    }
    return m;
}

namespace {

void check_codec(const StageModel& model, const CodecAssets& assets) {
    if (model.codec_hash != assets.hash())
        throw ConfigError("stage " + std::to_string(model.stage) + " checkpoint was trained with codec " +
                          model.codec_hash + ", loaded codec is " + assets.hash());
}

void check_images(const std::vector<Image>& images, const CodecAssets& assets, const char* what) {
    if (images.empty()) throw ConfigError(std::string(what) + ": empty dataset");
    for (const auto& img : images)
        if (img.height() != assets.codec.resolution() || img.width() != assets.codec.resolution())
            throw ShapeError(std::string(what) + ": images must be " +
                             std::to_string(assets.codec.resolution()) + " square");
}

// Encode a list of images one at a time so results do not depend on batch composition.
torch::Tensor encode_all(const std::vector<Image>& images, const CodecAssets& assets) {
    std::vector<torch::Tensor> parts;
    parts.reserve(images.size());
    for (const auto& img : images) parts.push_back(assets.codec.encode(img).tensor());
    return torch::cat(parts, 0);
}

torch::Tensor embed_all(const std::vector<Image>& images, const IdentityEmbedder& embedder) {
    std::vector<torch::Tensor> parts;
    parts.reserve(images.size());
    for (const auto& img : images) parts.push_back(embedder.embed(img).tensor().unsqueeze(0));
    return torch::cat(parts, 0);
}

MIBOptions mib_options(const Config& config) {
    MIBOptions opts;
    opts.norm = config.manifold_norm;
    switch (config.variant) {
        case Variant::noise_inject: opts.compensation = Compensation::noise; break;
        case Variant::no_inject: opts.compensation = Compensation::none; break;
        default: opts.compensation = Compensation::identity; break;
    }
    return opts;
}

bool uses_mib(const Config& config) { return config.variant != Variant::two_adain; }

// Shared optimization scaffolding for both stages.
struct StepSampler {
    std::mt19937_64 rng;
    std::uniform_int_distribution<int64_t> pick;
    std::uniform_int_distribution<int64_t> timestep;

    StepSampler(std::uint64_t seed, int64_t n, int steps)
        : rng(seed), pick(0, n - 1), timestep(1, steps) {}

    std::vector<int64_t> batch(int size) {
        std::vector<int64_t> idx(static_cast<std::size_t>(size));
        for (auto& i : idx) i = pick(rng);
        return idx;
    }

    torch::Tensor timesteps(int size) {
        std::vector<int64_t> ts(static_cast<std::size_t>(size));
        for (auto& t : ts) t = timestep(rng);
        return torch::tensor(ts, torch::kInt64);
    }
};

std::vector<Image> degrade_batch(const std::vector<Image>& hq, const std::vector<int64_t>& idx,
                                 std::mt19937_64& rng) {
    std::vector<Image> lq;
    lq.reserve(idx.size());
    for (auto i : idx) lq.push_back(degrade(hq[static_cast<std::size_t>(i)], sample_params(rng())));
    return lq;
}

torch::Tensor index_tensor(const std::vector<int64_t>& idx) { return torch::tensor(idx, torch::kInt64); }

}  // namespace

StageModel init_stage1(const Config& config, const CodecAssets& assets) {
    StageModel m;
    m.stage = 1;
    m.config = config;
    m.codec_hash = assets.hash();
    m.denoiser = ControlledDenoiser(denoiser_config(), config.seed);
    return m;
}

StageModel init_stage2(const Config& config, const StageModel& stage1, const CodecAssets& assets) {
    check_codec(stage1, assets);
    StageModel m;
    m.stage = 2;
    m.config = config;
    m.codec_hash = assets.hash();
    m.denoiser = ControlledDenoiser(denoiser_config(), config.seed + 2);
    if (config.stage2_warm_start) {
        std::map<std::string, torch::Tensor> warm;
        export_module(*stage1.denoiser, "", warm);
        import_module(*m.denoiser, "", warm);
    }
    if (uses_mib(config)) m.mib = MIB(kEmbeddingDim, config.seed + 3);
    return m;
}

TrainResult train_stage1(const std::vector<Image>& hq, const CodecAssets& assets, const Config& config) {
    check_images(hq, assets, "stage I");
    torch::set_num_threads(config.threads);
    TrainResult result{init_stage1(config, assets), {}};
    auto& model = result.model;
    const auto sched = schedule_for(config);
    const auto normalizer = assets.normalizer();
    const auto z_hq = normalizer.to_diffusion(encode_all(hq, assets).narrow(1, 0, kLatentChannels));

    StepSampler sampler(derive_seed(config.seed, 101), static_cast<int64_t>(hq.size()), sched.steps());
    std::mt19937_64 degrade_rng(derive_seed(config.seed, 102));
    auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(config.seed, 103));
    torch::optim::AdamW optim(model.denoiser->parameters(),
                              torch::optim::AdamWOptions(config.learning_rate));
    model.denoiser->train();

    for (int step = 1; step <= config.stage1_iterations; ++step) {
        const auto idx = sampler.batch(config.batch_size);
        const auto lq = degrade_batch(hq, idx, degrade_rng);
        const auto manifold = assets.codec.encode_batch(to_batch(lq)).tensor();
        const auto z0 = z_hq.index_select(0, index_tensor(idx));
        const auto t = sampler.timesteps(config.batch_size);
        const auto eps = torch::randn(z0.sizes(), gen, z0.options());
        const auto z_t = q_sample(z0, t, eps, sched);

        const auto loss = ldm_loss(model.denoiser->forward(z_t, t, manifold), eps);
        optim.zero_grad();
        loss.backward();
        optim.step();

        const double v = loss.item<double>();
        result.log.push_back({step, v, 0.0, 0.0, v});
        model.iteration = step;
    }
    model.denoiser->eval();
    return result;
}

TrainResult train_stage2(const std::vector<Image>& hq, const std::vector<Image>& conditioning,
                         const StageModel& stage1, const CodecAssets& assets, const Config& config) {
    check_images(hq, assets, "stage II");
    const bool on_the_fly = config.variant == Variant::no_stage1;
    if (!on_the_fly) {
        if (conditioning.size() != hq.size())
            throw ConfigError("stage II needs one Stage-I output per HQ image (got " +
                              std::to_string(conditioning.size()) + " for " +
                              std::to_string(hq.size()) + ")");
        check_images(conditioning, assets, "stage II conditioning");
    }
    torch::set_num_threads(config.threads);
    TrainResult result{init_stage2(config, stage1, assets), {}};
    auto& model = result.model;
    const auto sched = schedule_for(config);
    const auto normalizer = assets.normalizer();
    const IdentityEmbedder embedder(assets.codec.resolution());
    const auto mib_cfg = config.mib();
    const auto opts = mib_options(config);

    const auto hq_mode = encode_all(hq, assets).narrow(1, 0, kLatentChannels);
    const auto z_hq = normalizer.to_diffusion(hq_mode);
    torch::Tensor cond_moments, cond_embed;
    if (!on_the_fly) {
        cond_moments = encode_all(conditioning, assets);
        cond_embed = embed_all(conditioning, embedder);
    }

    StepSampler sampler(derive_seed(config.seed, 201), static_cast<int64_t>(hq.size()), sched.steps());
    std::mt19937_64 degrade_rng(derive_seed(config.seed, 202));
    auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(config.seed, 203));
    auto noise_gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(config.seed, 204));

    auto params = model.denoiser->parameters();
    if (model.mib)
        for (auto& p : model.mib->parameters()) params.push_back(p);
    torch::optim::AdamW optim(params, torch::optim::AdamWOptions(config.learning_rate));
    model.denoiser->train();

    for (int step = 1; step <= config.stage2_iterations; ++step) {
        const auto idx = sampler.batch(config.batch_size);
        const auto sel = index_tensor(idx);
        torch::Tensor manifold, embedding;
        if (on_the_fly) {
            const auto lq = degrade_batch(hq, idx, degrade_rng);
            manifold = assets.codec.encode_batch(to_batch(lq)).tensor();
            embedding = embedder.embed_batch(to_batch(lq));
        } else {
            manifold = cond_moments.index_select(0, sel);
            embedding = cond_embed.index_select(0, sel);
        }

        torch::Tensor fused = manifold;
        auto info = torch::zeros({}, manifold.options());
        auto rec = torch::zeros({}, manifold.options());
        if (model.mib) {
            auto state = model.mib->forward(manifold, embedding, assets.stats, mib_cfg, opts, &noise_gen);
            fused = state.fused;
            info = state.info;
            rec = rec_loss(fused.narrow(1, 0, kLatentChannels), hq_mode.index_select(0, sel));
        }

        const auto z0 = z_hq.index_select(0, sel);
        const auto t = sampler.timesteps(config.batch_size);
        const auto eps = torch::randn(z0.sizes(), gen, z0.options());
        const auto z_t = q_sample(z0, t, eps, sched);
        const auto ldm = ldm_loss(model.denoiser->forward(z_t, t, fused), eps);
        const auto total = ldm + config.lambda_info * info + config.lambda_rec * rec;

        optim.zero_grad();
        total.backward();
        optim.step();

        result.log.push_back({step, ldm.item<double>(), info.item<double>(), rec.item<double>(),
                              total.item<double>()});
        model.iteration = step;
    }
    model.denoiser->eval();
    return result;
}

torch::Tensor sample_latent(const StageModel& model, const torch::Tensor& manifold,
                            const NoiseSchedule& sched, int steps, std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto denoiser = model.denoiser;
    const auto features = denoiser->control()->extract(manifold);
    const auto batch = manifold.size(0);
    const auto h = manifold.size(2);
    const auto w = manifold.size(3);
    Denoiser fn = [&](const torch::Tensor& z, int t) {
        return denoiser->forward_features(z, torch::full({batch}, t, torch::kInt64), features);
    };
    return ddpm_sample(fn, {batch, kLatentChannels, h, w}, sched, steps, seed);
}

Image run_stage1(const StageModel& stage1, const Image& lq, const CodecAssets& assets, int steps,
                 std::uint64_t seed) {
    check_codec(stage1, assets);
    const auto manifold = assets.codec.encode(lq).tensor();
    const auto z = sample_latent(stage1, manifold, schedule_for(stage1.config), steps, seed);
    return assets.codec.decode(assets.normalizer().from_diffusion(z));
}

std::vector<Image> synthesize_stage1(const StageModel& stage1, const std::vector<Image>& lq,
                                     const CodecAssets& assets, int steps, std::uint64_t seed) {
    torch::set_num_threads(stage1.config.threads);
    std::vector<Image> out;
    out.reserve(lq.size());
    for (std::size_t i = 0; i < lq.size(); ++i)
        out.push_back(run_stage1(stage1, lq[i], assets, steps, derive_seed(seed, i)));
    return out;
}

torch::Tensor stage2_manifold(const StageModel& stage2, const Image& x, const CodecAssets& assets,
                              const IdentityEmbedder& embedder, std::uint64_t seed,
                              const IdentityEmbedding* id_override) {
    torch::NoGradGuard no_grad;
    const auto manifold = assets.codec.encode(x).tensor();
    if (!stage2.mib) return manifold;
    const auto embedding =
        (id_override ? id_override->tensor() : embedder.embed(x).tensor()).unsqueeze(0);
    auto noise_gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, 7));
    auto state = stage2.mib.ptr()->forward(manifold, embedding, assets.stats, stage2.config.mib(),
                                     mib_options(stage2.config), &noise_gen);
    return state.fused;
}

Restoration restore(const Image& lq, const StageModel& stage1, const StageModel& stage2,
                    const CodecAssets& assets, int steps, std::uint64_t seed,
                    const IdentityEmbedding* id_override) {
    if (stage1.stage != 1 || stage2.stage != 2) throw ConfigError("restore needs a Stage-I and a Stage-II checkpoint");
    check_codec(stage1, assets);
    check_codec(stage2, assets);
    if (lq.height() != assets.codec.resolution() || lq.width() != assets.codec.resolution())
        throw ShapeError("restore expects " + std::to_string(assets.codec.resolution()) +
                         " square input, got " + std::to_string(lq.height()) + "x" +
                         std::to_string(lq.width()));
    torch::set_num_threads(stage2.config.threads);
    Restoration r;
    r.stage1 = stage2.config.variant == Variant::no_stage1
                   ? lq
                   : run_stage1(stage1, lq, assets, steps, derive_seed(seed, 1));
    const IdentityEmbedder embedder(assets.codec.resolution());
    const auto manifold = stage2_manifold(stage2, r.stage1, assets, embedder, seed, id_override);
    const auto z = sample_latent(stage2, manifold, schedule_for(stage2.config), steps, derive_seed(seed, 2));
    r.restored = assets.codec.decode(assets.normalizer().from_diffusion(z));
    return r;
}

Dataset load_dataset(const std::filesystem::path& dir, int resolution) {
    Dataset ds;
    for (const auto& path : list_pngs(dir)) {
        auto img = read_png(path);
        if (img.height() != resolution || img.width() != resolution)
            throw ShapeError(path.string() + " is " + std::to_string(img.height()) + "x" +
                             std::to_string(img.width()) + ", expected " + std::to_string(resolution) +
                             " square");
        ds.names.push_back(path.filename().string());
        ds.images.push_back(std::move(img));
    }
    if (ds.images.empty()) throw ConfigError("no PNG images in " + dir.string());
    return ds;
}

}  // namespace diffmac
