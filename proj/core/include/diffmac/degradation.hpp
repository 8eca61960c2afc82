#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "diffmac/image.hpp"

namespace diffmac {

/// One draw of the synthetic degradation: blur -> downsample -> noise -> JPEG -> upsample.
struct DegradationParams {
    double blur_sigma = 0.0;   // Gaussian std in pixels, 0 disables
    double down_scale = 1.0;   // r in [0.8, 8]
    double noise_sigma = 0.0;  // 8-bit intensity units, [0, 20]
    int jpeg_quality = 100;    // [60, 100]
    std::uint64_t seed = 0;    // drives the noise draw

    friend bool operator==(const DegradationParams&, const DegradationParams&) = default;
};

inline constexpr double kMinBlurSigma = 1.0;
inline constexpr double kMaxBlurSigma = 15.0;
inline constexpr double kMinDownScale = 0.8;
inline constexpr double kMaxDownScale = 8.0;
inline constexpr double kMaxNoiseSigma = 20.0;
inline constexpr int kMinJpegQuality = 60;
inline constexpr int kMaxJpegQuality = 100;

/// Throws ParameterError if any field is outside its declared range.
void validate(const DegradationParams& params);

/// Uniform draw over the training ranges; deterministic in `rng_seed`.
DegradationParams sample_params(std::uint64_t rng_seed);

/// Truncated, normalized 1-D Gaussian with half-width ceil(3 sigma), clipped so the
/// kernel fits in `max_length` samples. Always odd length.
std::vector<double> gaussian_kernel(double sigma, int max_length);

/// Separable Gaussian blur with reflect padding. sigma == 0 returns the input.
Image gaussian_blur(const Image& img, double sigma);

enum class ResampleDirection { down, up };

/// Bilinear resampling by factor `scale`. Downsampling divides the size by `scale`
/// and applies a box prefilter of width `scale` first; upsampling multiplies it.
/// `target` overrides the computed output size (used to undo a prior downsample).
Image resample(const Image& img, double scale, ResampleDirection direction,
               std::optional<std::pair<int, int>> target = std::nullopt);

/// Adds i.i.d. N(0, (sigma_n / 127.5)^2) noise and clips to [-1, 1].
Image add_gaussian_noise(const Image& img, double sigma_n, std::uint64_t seed);

/// Baseline JPEG encode/decode round trip through 8-bit RGB.
Image jpeg_compress(const Image& img, int quality);

/// Full pipeline; output has the input's shape and lies in [-1, 1].
Image degrade(const Image& img, const DegradationParams& params);

/// One line of a degradation manifest.
struct ManifestRecord {
    std::string source;
    DegradationParams params;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Line-delimited JSON, one record per image.
void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

std::string to_json_line(const ManifestRecord& record);
ManifestRecord manifest_record_from_json(const std::string& line);

}  // namespace diffmac
