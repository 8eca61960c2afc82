#include <doctest.h>

#include <cmath>
#include <set>

#include "diffmac/degradation.hpp"
#include "diffmac/errors.hpp"
#include "diffmac/faces.hpp"
#include "diffmac/metrics.hpp"
#include "helpers.hpp"

using namespace diffmac;

namespace {

double laplacian_variance(const Image& img) {
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (int y = 1; y + 1 < img.height(); ++y)
        for (int x = 1; x + 1 < img.width(); ++x)
            for (int c = 0; c < Image::kChannels; ++c) {
                const double l = img.at(y - 1, x, c) + img.at(y + 1, x, c) + img.at(y, x - 1, c) +
                                 img.at(y, x + 1, c) - 4.0 * img.at(y, x, c);
                sum += l;
                sum2 += l * l;
                ++n;
            }
    const double mean = sum / n;
    return sum2 / n - mean * mean;
}

Image checkerboard(int size) {
    Image img(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < Image::kChannels; ++c) img.at(y, x, c) = ((x + y) % 2) ? 0.8f : -0.8f;
    return img;
}

}  // namespace

TEST_CASE("sample_params is deterministic in its seed") {
    CHECK(sample_params(42) == sample_params(42));
}

TEST_CASE("sample_params stays inside the declared ranges over 10^4 draws") {
    double min_blur = 1e9, max_blur = -1e9, min_r = 1e9, max_r = -1e9, min_n = 1e9, max_n = -1e9;
    int min_q = 1000, max_q = -1;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const auto p = sample_params(s);
        min_blur = std::min(min_blur, p.blur_sigma);
        max_blur = std::max(max_blur, p.blur_sigma);
        min_r = std::min(min_r, p.down_scale);
        max_r = std::max(max_r, p.down_scale);
        min_n = std::min(min_n, p.noise_sigma);
        max_n = std::max(max_n, p.noise_sigma);
        min_q = std::min(min_q, p.jpeg_quality);
        max_q = std::max(max_q, p.jpeg_quality);
        CHECK_NOTHROW(validate(p));
    }
    CHECK(min_blur >= kMinBlurSigma);
    CHECK(max_blur <= kMaxBlurSigma);
    CHECK(min_r >= kMinDownScale);
    CHECK(max_r <= kMaxDownScale);
    CHECK(min_n >= 0.0);
    CHECK(max_n <= kMaxNoiseSigma);
    CHECK(min_q >= kMinJpegQuality);
    CHECK(max_q <= kMaxJpegQuality);
    // Uniform draws cover the range: extremes land near the bounds.
    CHECK(min_blur < 1.1);
    CHECK(max_blur > 14.9);
    CHECK(min_q == kMinJpegQuality);
    CHECK(max_q == kMaxJpegQuality);
}

TEST_CASE("distinct seeds give distinct params") {
    std::mt19937_64 rng(7);
    int collisions = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto a = rng();
        auto b = rng();
        if (b == a) ++b;
        if (sample_params(a) == sample_params(b)) ++collisions;
    }
    CHECK(collisions == 0);
}

TEST_CASE("validate rejects out-of-range fields") {
    DegradationParams p;
    CHECK_NOTHROW(validate(p));
    p.down_scale = 0.5;
    CHECK_THROWS_AS(validate(p), ParameterError);
    p = {};
    p.noise_sigma = 21;
    CHECK_THROWS_AS(validate(p), ParameterError);
    p = {};
    p.jpeg_quality = 59;
    CHECK_THROWS_AS(validate(p), ParameterError);
    p = {};
    p.blur_sigma = -1;
    CHECK_THROWS_AS(validate(p), ParameterError);
}

TEST_CASE("gaussian_blur edge cases") {
    const auto img = testing::random_image(16, 16, 1);
    SUBCASE("sigma 0 is bit-identical") { CHECK(gaussian_blur(img, 0.0) == img); }
    SUBCASE("negative sigma is rejected") { CHECK_THROWS_AS(gaussian_blur(img, -0.5), ParameterError); }
    SUBCASE("constants are preserved") {
        const Image flat(20, 13, 0.3f);
        for (double s : {0.5, 2.0, 7.0, 15.0}) CHECK(testing::max_abs_diff(gaussian_blur(flat, s), flat) < 1e-6);
    }
}

TEST_CASE("blurred impulse peak equals the analytic kernel peak squared") {
    const double sigma = 2.0;
    // independent kernel: half-width ceil(3 sigma), normalized samples of exp(-x^2 / 2 sigma^2)
    const int half = static_cast<int>(std::ceil(3.0 * sigma));
    double norm = 0.0;
    for (int x = -half; x <= half; ++x) norm += std::exp(-x * x / (2.0 * sigma * sigma));
    const double peak1d = 1.0 / norm;

    Image impulse(33, 33, 0.0f);
    for (int c = 0; c < Image::kChannels; ++c) impulse.at(16, 16, c) = 1.0f;
    const auto out = gaussian_blur(impulse, sigma);
    for (int c = 0; c < Image::kChannels; ++c) CHECK(out.at(16, 16, c) == doctest::Approx(peak1d * peak1d).epsilon(1e-6));
}

TEST_CASE("gaussian_kernel is odd, normalized and clipped to the image") {
    const auto k = gaussian_kernel(3.0, 1000);
    CHECK(k.size() == 19);
    double s = 0.0;
    for (double v : k) s += v;
    CHECK(s == doctest::Approx(1.0));
    const auto clipped = gaussian_kernel(15.0, 64);
    CHECK(clipped.size() % 2 == 1);
    CHECK(clipped.size() <= 64);
}

TEST_CASE("blur commutes with horizontal flip") {
    const auto img = testing::random_image(24, 31, 9);
    for (double s : {1.0, 3.5, 15.0})
        CHECK(testing::max_abs_diff(gaussian_blur(flip_horizontal(img), s), flip_horizontal(gaussian_blur(img, s))) < 1e-6);
}

TEST_CASE("resample contracts") {
    const auto faces = synth_face_corpus(1, 64, 3);
    const auto& img = faces[0];
    SUBCASE("r = 1 down then up is near-identity") {
        const auto round = resample(resample(img, 1.0, ResampleDirection::down), 1.0, ResampleDirection::up);
        CHECK(psnr(round, img) >= 50.0);
    }
    SUBCASE("constant images stay constant") {
        const Image flat(64, 64, -0.25f);
        for (double r : {0.8, 1.7, 3.0, 8.0}) {
            const auto down = resample(flat, r, ResampleDirection::down);
            CHECK(testing::max_abs_diff(down, Image(down.height(), down.width(), -0.25f)) < 1e-6);
            const auto up = resample(down, r, ResampleDirection::up, std::pair{64, 64});
            CHECK(testing::max_abs_diff(up, flat) < 1e-6);
        }
    }
    SUBCASE("64 -> 8 -> 64 at r = 8") {
        const auto down = resample(img, 8.0, ResampleDirection::down);
        CHECK(down.height() == 8);
        CHECK(down.width() == 8);
        const auto up = resample(down, 8.0, ResampleDirection::up);
        CHECK(up.height() == 64);
        CHECK(up.width() == 64);
    }
    SUBCASE("sizes below one pixel are rejected") {
        CHECK_THROWS_AS(resample(Image(2, 2), 8.0, ResampleDirection::down), ParameterError);
        CHECK_THROWS_AS(resample(img, 0.5, ResampleDirection::down), ParameterError);
    }
}

TEST_CASE("gaussian noise") {
    const Image gray(64, 64, 0.0f);
    SUBCASE("sigma 0 is identity") { CHECK(add_gaussian_noise(gray, 0.0, 5) == gray); }
    SUBCASE("same seed is bit-identical, different seed differs") {
        CHECK(add_gaussian_noise(gray, 10.0, 5) == add_gaussian_noise(gray, 10.0, 5));
        CHECK_FALSE(add_gaussian_noise(gray, 10.0, 5) == add_gaussian_noise(gray, 10.0, 6));
    }
    SUBCASE("sample std matches sigma / 127.5 within 5%") {
        const auto noisy = add_gaussian_noise(gray, 20.0, 11);
        double s = 0.0, s2 = 0.0;
        for (float v : noisy.pixels()) {
            s += v;
            s2 += static_cast<double>(v) * v;
        }
        const double n = static_cast<double>(noisy.size());
        const double std = std::sqrt(s2 / n - (s / n) * (s / n));
        CHECK(std == doctest::Approx(20.0 / 127.5).epsilon(0.05));
    }
    SUBCASE("output is clipped") {
        const auto noisy = add_gaussian_noise(Image(32, 32, 0.99f), 20.0, 3);
        for (float v : noisy.pixels()) CHECK(std::abs(v) <= 1.0f);
    }
}

TEST_CASE("jpeg round trip") {
    const auto faces = synth_face_corpus(1, 64, 5);
    const auto& img = faces[0];
    CHECK(psnr(jpeg_compress(img, 100), img) >= 40.0);
    CHECK(psnr(jpeg_compress(img, 60), img) < psnr(jpeg_compress(img, 100), img));
    const Image gray(64, 64, 0.0f);
    CHECK(psnr(jpeg_compress(gray, 90), gray) >= 50.0);
    CHECK_THROWS_AS(jpeg_compress(img, 0), ParameterError);
    CHECK_THROWS_AS(jpeg_compress(img, 101), ParameterError);
    CHECK(jpeg_compress(img, 75) == jpeg_compress(img, 75));
}

TEST_CASE("degrade with near-identity params keeps PSNR >= 40 dB") {
    DegradationParams p;
    p.blur_sigma = 0.0;
    p.down_scale = 1.0;
    p.noise_sigma = 0.0;
    p.jpeg_quality = 100;
    for (const auto& img : synth_face_corpus(4, 64, 20)) CHECK(psnr(degrade(img, p), img) >= 40.0);
}

TEST_CASE("degrade is pure, shape-preserving and range-bounded") {
    const auto faces = synth_face_corpus(4, 64, 30);
    for (std::uint64_t s = 0; s < 12; ++s) {
        const auto p = sample_params(s);
        const auto& img = faces[s % faces.size()];
        const auto a = degrade(img, p);
        CHECK(a == degrade(img, p));
        CHECK(a.same_shape(img));
        for (float v : a.pixels()) CHECK((v >= -1.0f && v <= 1.0f));
    }
}

TEST_CASE("r = 8 removes checkerboard energy") {
    const auto board = checkerboard(64);
    DegradationParams p;
    p.blur_sigma = 0.0;
    p.down_scale = 8.0;
    p.noise_sigma = 0.0;
    p.jpeg_quality = 100;
    CHECK(laplacian_variance(degrade(board, p)) < laplacian_variance(board));
}

TEST_CASE("PSNR is non-increasing as JPEG quality drops on an 8-image corpus") {
    const auto faces = synth_face_corpus(8, 64, 40);
    DegradationParams p;
    p.blur_sigma = 1.5;
    p.down_scale = 2.0;
    p.noise_sigma = 5.0;
    p.seed = 17;
    double previous = 1e9;
    for (int q : {100, 90, 80, 70, 60}) {
        p.jpeg_quality = q;
        double mean = 0.0;
        for (const auto& f : faces) mean += psnr(degrade(f, p), f);
        mean /= faces.size();
        CHECK(mean <= previous + 1e-9);
        previous = mean;
    }
}

TEST_CASE("manifest records round-trip and replay bit-identically") {
    const auto dir = testing::scratch_dir("manifest");
    std::vector<ManifestRecord> records;
    for (std::uint64_t s = 0; s < 5; ++s) records.push_back({"face_" + std::to_string(s) + ".png", sample_params(s)});
    write_manifest(records, dir / "m.jsonl");
    const auto back = read_manifest(dir / "m.jsonl");
    REQUIRE((back == records));
    CHECK(manifest_record_from_json(to_json_line(records[2])) == records[2]);

    const auto faces = synth_face_corpus(5, 64, 50);
    for (std::size_t i = 0; i < faces.size(); ++i)
        CHECK(degrade(faces[i], records[i].params) == degrade(faces[i], back[i].params));
}

TEST_CASE("malformed manifest lines are rejected") {
    CHECK_THROWS_AS(manifest_record_from_json("{\"source\": 3}"), IoError);
    CHECK_THROWS_AS(manifest_record_from_json("not json"), IoError);
}
