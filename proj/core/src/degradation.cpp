#include "diffmac/degradation.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "diffmac/errors.hpp"

namespace diffmac {

void validate(const DegradationParams& p) {
    if (!(p.blur_sigma >= 0.0 && p.blur_sigma <= kMaxBlurSigma))
        throw ParameterError("blur_sigma out of [0, 15]: " + std::to_string(p.blur_sigma));
    if (!(p.down_scale >= kMinDownScale && p.down_scale <= kMaxDownScale))
        throw ParameterError("down_scale out of [0.8, 8]: " + std::to_string(p.down_scale));
    if (!(p.noise_sigma >= 0.0 && p.noise_sigma <= kMaxNoiseSigma))
        throw ParameterError("noise_sigma out of [0, 20]: " + std::to_string(p.noise_sigma));
    if (p.jpeg_quality < kMinJpegQuality || p.jpeg_quality > kMaxJpegQuality)
        throw ParameterError("jpeg_quality out of [60, 100]: " + std::to_string(p.jpeg_quality));
}

DegradationParams sample_params(std::uint64_t rng_seed) {
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> blur(kMinBlurSigma, kMaxBlurSigma);
    std::uniform_real_distribution<double> scale(kMinDownScale, kMaxDownScale);
    std::uniform_real_distribution<double> noise(0.0, kMaxNoiseSigma);
    std::uniform_int_distribution<int> quality(kMinJpegQuality, kMaxJpegQuality);
    DegradationParams p;
    p.blur_sigma = blur(rng);
    p.down_scale = scale(rng);
    p.noise_sigma = noise(rng);
    p.jpeg_quality = quality(rng);
    p.seed = rng();
    return p;
}

namespace {

// Mirror without repeating the edge sample: -1 -> 1, n -> n - 2.
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

// 1-D filtering along rows or columns with per-output weight lists.
struct Taps {
    std::vector<int> first;  // index of first source sample (may be out of range)
    std::vector<std::vector<double>> weights;
};

Image apply_rows(const Image& img, const Taps& taps, int out_width) {
    Image out(img.height(), out_width);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < out_width; ++x) {
            const auto& w = taps.weights[x];
            double acc[3] = {0.0, 0.0, 0.0};
            for (std::size_t k = 0; k < w.size(); ++k) {
                const int sx = reflect(taps.first[x] + static_cast<int>(k), img.width());
                for (int c = 0; c < 3; ++c) acc[c] += w[k] * img.at(y, sx, c);
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(acc[c]);
        }
    }
    return out;
}

Image apply_cols(const Image& img, const Taps& taps, int out_height) {
    Image out(out_height, img.width());
    for (int y = 0; y < out_height; ++y) {
        const auto& w = taps.weights[y];
        for (int x = 0; x < img.width(); ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (std::size_t k = 0; k < w.size(); ++k) {
                const int sy = reflect(taps.first[y] + static_cast<int>(k), img.height());
                for (int c = 0; c < 3; ++c) acc[c] += w[k] * img.at(sy, x, c);
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(acc[c]);
        }
    }
    return out;
}

Taps convolution_taps(const std::vector<double>& kernel, int n) {
    const int half = static_cast<int>(kernel.size()) / 2;
    Taps taps;
    taps.first.resize(n);
    taps.weights.assign(n, kernel);
    for (int i = 0; i < n; ++i) taps.first[i] = i - half;
    return taps;
}

// Continuous box of width `f` centred on each source pixel, with fractional
// coverage at both ends.
Taps box_taps(double f, int n) {
    Taps taps;
    taps.first.resize(n);
    taps.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        const double lo = i + 0.5 - f / 2.0;
        const double hi = i + 0.5 + f / 2.0;
        const int j0 = static_cast<int>(std::floor(lo));
        const int j1 = static_cast<int>(std::ceil(hi)) - 1;
        taps.first[i] = j0;
        auto& w = taps.weights[i];
        for (int j = j0; j <= j1; ++j) {
            const double cover = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
            w.push_back(std::max(cover, 0.0) / f);
        }
    }
    return taps;
}

Taps bilinear_taps(int in, int out) {
    Taps taps;
    taps.first.resize(out);
    taps.weights.resize(out);
    const double ratio = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double u = (i + 0.5) * ratio - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(in - 1));
        const int j = std::min(static_cast<int>(std::floor(u)), in - 1);
        const double t = u - j;
        taps.first[i] = j;
        if (j + 1 < in)
            taps.weights[i] = {1.0 - t, t};
        else
            taps.weights[i] = {1.0};
    }
    return taps;
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma, int max_length) {
    if (sigma < 0.0) throw ParameterError("negative blur sigma");
    if (max_length < 1) throw ParameterError("kernel length must be positive");
    int half = static_cast<int>(std::ceil(3.0 * sigma));
    half = std::min(half, (max_length - 1) / 2);
    std::vector<double> k(2 * half + 1);
    if (sigma == 0.0) {
        k.assign(1, 1.0);
        return k;
    }
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        k[i + half] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + half];
    }
    for (double& v : k) v /= sum;
    return k;
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma < 0.0) throw ParameterError("negative blur sigma");
    if (sigma == 0.0 || img.empty()) return img;
    const auto kx = gaussian_kernel(sigma, img.width());
    const auto ky = gaussian_kernel(sigma, img.height());
    Image rows = apply_rows(img, convolution_taps(kx, img.width()), img.width());
    return apply_cols(rows, convolution_taps(ky, img.height()), img.height());
}

Image resample(const Image& img, double scale, ResampleDirection direction,
               std::optional<std::pair<int, int>> target) {
    if (!(scale >= kMinDownScale)) throw ParameterError("resample scale must be >= 0.8");
    int out_h = 0;
    int out_w = 0;
    if (target) {
        std::tie(out_h, out_w) = *target;
    } else {
        const double factor = direction == ResampleDirection::down ? 1.0 / scale : scale;
        out_h = static_cast<int>(std::lround(img.height() * factor));
        out_w = static_cast<int>(std::lround(img.width() * factor));
    }
    if (out_h < 1 || out_w < 1)
        throw ParameterError("resampled size " + std::to_string(out_h) + "x" +
                             std::to_string(out_w) + " is below 1x1");
    if (img.empty()) throw ShapeError("cannot resample an empty image");

    Image src = img;
    const double fy = static_cast<double>(img.height()) / out_h;
    const double fx = static_cast<double>(img.width()) / out_w;
    if (fx > 1.0) src = apply_rows(src, box_taps(fx, src.width()), src.width());
    if (fy > 1.0) src = apply_cols(src, box_taps(fy, src.height()), src.height());
    Image rows = apply_rows(src, bilinear_taps(src.width(), out_w), out_w);
    return apply_cols(rows, bilinear_taps(src.height(), out_h), out_h);
}

Image add_gaussian_noise(const Image& img, double sigma_n, std::uint64_t seed) {
    if (sigma_n < 0.0) throw ParameterError("negative noise sigma");
    if (sigma_n == 0.0) return img;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma_n / 127.5);
    Image out = img;
    for (float& v : out.pixels()) v = static_cast<float>(v + normal(rng));
    clip_unit(out);
    return out;
}

namespace {

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

std::vector<unsigned char> encode_jpeg(const std::vector<unsigned char>& rgb, int h, int w,
                                       int quality) {
    jpeg_compress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = on_jpeg_error;
    unsigned char* buffer = nullptr;
    unsigned long length = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw IoError(std::string("JPEG encode failed: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &length);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    cinfo.dct_method = JDCT_ISLOW;
    jpeg_set_quality(&cinfo, quality, TRUE);
    // 4:4:4: keep full chroma resolution so quality alone controls the loss
    for (int c = 0; c < cinfo.num_components; ++c) cinfo.comp_info[c].h_samp_factor = cinfo.comp_info[c].v_samp_factor = 1;
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<unsigned char*>(rgb.data() +
                                               static_cast<std::size_t>(cinfo.next_scanline) * w * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::vector<unsigned char> out(buffer, buffer + length);
    std::free(buffer);
    return out;
}

std::vector<unsigned char> decode_jpeg(const std::vector<unsigned char>& data, int h, int w) {
    jpeg_decompress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = on_jpeg_error;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError(std::string("JPEG decode failed: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    cinfo.dct_method = JDCT_ISLOW;
    jpeg_start_decompress(&cinfo);
    std::vector<unsigned char> rgb(static_cast<std::size_t>(h) * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return rgb;
}

}  // namespace

Image jpeg_compress(const Image& img, int quality) {
    if (quality < 1 || quality > 100)
        throw ParameterError("JPEG quality must be in [1, 100], got " + std::to_string(quality));
    if (img.empty()) throw ShapeError("cannot JPEG-compress an empty image");
    const auto bytes = encode_jpeg(to_u8(img), img.height(), img.width(), quality);
    const auto rgb = decode_jpeg(bytes, img.height(), img.width());
    return from_u8(img.height(), img.width(), rgb);
}

Image degrade(const Image& img, const DegradationParams& params) {
    validate(params);
    const std::pair<int, int> original{img.height(), img.width()};
    Image x = gaussian_blur(img, params.blur_sigma);
    x = resample(x, params.down_scale, ResampleDirection::down);
    x = add_gaussian_noise(x, params.noise_sigma, params.seed);
    x = jpeg_compress(x, params.jpeg_quality);
    x = resample(x, params.down_scale, ResampleDirection::up, original);
    clip_unit(x);
    return x;
}

std::string to_json_line(const ManifestRecord& r) {
    nlohmann::ordered_json j;
    j["source"] = r.source;
    j["blur_sigma"] = r.params.blur_sigma;
    j["down_scale"] = r.params.down_scale;
    j["noise_sigma"] = r.params.noise_sigma;
    j["jpeg_quality"] = r.params.jpeg_quality;
    j["seed"] = r.params.seed;
    return j.dump();
}

ManifestRecord manifest_record_from_json(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        ManifestRecord r;
        r.source = j.at("source").get<std::string>();
        r.params.blur_sigma = j.at("blur_sigma").get<double>();
        r.params.down_scale = j.at("down_scale").get<double>();
        r.params.noise_sigma = j.at("noise_sigma").get<double>();
        r.params.jpeg_quality = j.at("jpeg_quality").get<int>();
        r.params.seed = j.at("seed").get<std::uint64_t>();
        validate(r.params);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest record: ") + e.what());
    }
}

void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest " + path.string());
    std::vector<ManifestRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        records.push_back(manifest_record_from_json(line));
    }
    return records;
}

}  // namespace diffmac
