#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "diffmac/codec.hpp"
#include "diffmac/config.hpp"
#include "diffmac/denoiser.hpp"
#include "diffmac/diffusion.hpp"
#include "diffmac/identity.hpp"
#include "diffmac/image.hpp"
#include "diffmac/mib.hpp"

namespace diffmac {

inline constexpr int kCheckpointSchema = 1;

/// One line of the training log.
struct TrainLogRecord {
    int iteration = 0;
    double ldm = 0.0;
    double info = 0.0;
    double rec = 0.0;
    double total = 0.0;  // the scalar that was back-propagated
};

std::string to_json_line(const TrainLogRecord& record);
TrainLogRecord train_log_record_from_json(const std::string& line);
void write_train_log(const std::vector<TrainLogRecord>& records, const std::filesystem::path& path);
std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& path);

/// Frozen codec plus the statistics computed with it.
struct CodecAssets {
    ManifoldCodec codec;
    QCStats stats;

    /// Throws ConfigError unless stats.codec_hash matches the codec.
    static CodecAssets make(ManifoldCodec codec, QCStats stats);
    static CodecAssets load(const std::filesystem::path& codec_path,
                            const std::filesystem::path& stats_path);

    const std::string& hash() const noexcept { return hash_; }
    LatentNormalizer normalizer() const { return LatentNormalizer(stats); }

private:
    CodecAssets(ManifoldCodec c, QCStats s) : codec(std::move(c)), stats(std::move(s)) {}
    std::string hash_;
};

/// Weights and metadata of one diffusion stage.
struct StageModel {
    int stage = 1;
    int iteration = 0;
    Config config;
    std::string codec_hash;
    ControlledDenoiser denoiser{nullptr};
    MIB mib{nullptr};  // Stage II only

    std::map<std::string, torch::Tensor> tensors() const;
    void save(const std::filesystem::path& path) const;
    static StageModel load(const std::filesystem::path& path);
};

DenoiserConfig denoiser_config();
NoiseSchedule schedule_for(const Config& config);

/// Deterministic per-item seed derived from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

StageModel init_stage1(const Config& config, const CodecAssets& assets);
StageModel init_stage2(const Config& config, const StageModel& stage1, const CodecAssets& assets);

struct TrainResult {
    StageModel model;
    std::vector<TrainLogRecord> log;
};

/// Stage I: LQ (degraded on the fly with fresh parameters each step) -> moments R
/// -> AdaIN control; minimizes the eps-prediction loss. Codec stays frozen.
TrainResult train_stage1(const std::vector<Image>& hq, const CodecAssets& assets, const Config& config);

/// Stage II: R = E(X_D1) -> bottleneck -> Z -> AdaIN control; minimizes
/// ldm + lambda_info * info + lambda_rec * rec. `conditioning` holds X_D1 per HQ
/// image; it is ignored (LQ degraded on the fly instead) for Variant::no_stage1.
TrainResult train_stage2(const std::vector<Image>& hq, const std::vector<Image>& conditioning,
                         const StageModel& stage1, const CodecAssets& assets, const Config& config);

/// Spaced DDPM sample of a diffusion-space latent conditioned on `manifold` ([1, 8, h, w]).
torch::Tensor sample_latent(const StageModel& model, const torch::Tensor& manifold,
                            const NoiseSchedule& sched, int steps, std::uint64_t seed);

/// X_D1 for one LQ image.
Image run_stage1(const StageModel& stage1, const Image& lq, const CodecAssets& assets, int steps,
                 std::uint64_t seed);

/// X_D1 for every LQ image; image i uses derive_seed(seed, i).
std::vector<Image> synthesize_stage1(const StageModel& stage1, const std::vector<Image>& lq,
                                     const CodecAssets& assets, int steps, std::uint64_t seed);

/// Manifold fed to the Stage-II control branch for conditioning image `x`.
torch::Tensor stage2_manifold(const StageModel& stage2, const Image& x, const CodecAssets& assets,
                              const IdentityEmbedder& embedder, std::uint64_t seed,
                              const IdentityEmbedding* id_override = nullptr);

struct Restoration {
    Image stage1;    // X_D1 (the LQ input itself for Variant::no_stage1)
    Image restored;  // X_D2
};

/// Full two-stage restoration. `id_override` replaces the embedding of X_D1.
Restoration restore(const Image& lq, const StageModel& stage1, const StageModel& stage2,
                    const CodecAssets& assets, int steps, std::uint64_t seed,
                    const IdentityEmbedding* id_override = nullptr);

struct Dataset {
    std::vector<std::string> names;  // file names
    std::vector<Image> images;
};

/// Every PNG in `dir` (sorted); all must be `resolution` square.
Dataset load_dataset(const std::filesystem::path& dir, int resolution);

}  // namespace diffmac
