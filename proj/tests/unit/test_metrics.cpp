#include <doctest.h>

#include <cmath>

#include "diffmac/degradation.hpp"
#include "diffmac/errors.hpp"
#include "diffmac/faces.hpp"
#include "diffmac/identity.hpp"
#include "diffmac/metrics.hpp"
#include "helpers.hpp"

using namespace diffmac;

namespace {

// Direct windowed SSIM: explicit 2-D Gaussian weights at every valid position.
double ssim_direct(const Image& a, const Image& b) {
    auto gray = [](const Image& img, int y, int x) {
        return 0.5 * (0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2) + 1.0);
    };
    double w[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            total += w[i][j];
        }
    const double c1 = 0.0001, c2 = 0.0009;
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= a.height(); ++y)
        for (int x = 0; x + 11 <= a.width(); ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double k = w[i][j] / total;
                    const double va = gray(a, y + i, x + j), vb = gray(b, y + i, x + j);
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return acc / count;
}

}  // namespace

TEST_CASE("psnr") {
    const auto a = testing::random_image(16, 16, 1);
    CHECK(psnr(a, a) == kPsnrCap);

    Image x(16, 16, -0.5f), y(16, 16, -0.3f);  // 0.2 on [-1, 1] is 0.1 on the peak-1 scale
    CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-6));

    const auto b = testing::random_image(16, 16, 2);
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a.pixels()[i] - b.pixels()[i]) / 2.0;
        se += d * d;
    }
    const double want = 10.0 * std::log10(1.0 / (se / a.size()));
    CHECK(std::abs(psnr(a, b) - want) <= 1e-6);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, Image(16, 15)), ShapeError);
}

TEST_CASE("ssim") {
    const auto faces = synth_face_corpus(2, 64, 8);
    CHECK(ssim(faces[0], faces[0]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(Image(32, 32, 0.0f), Image(32, 32, 0.0f)) == doctest::Approx(1.0));

    DegradationParams p;
    p.blur_sigma = 2.0;
    p.down_scale = 2.0;
    p.noise_sigma = 8.0;
    p.jpeg_quality = 70;
    p.seed = 4;
    const auto degraded = degrade(faces[1], p);
    const double s = ssim(faces[1], degraded);
    CHECK(std::abs(s - ssim_direct(faces[1], degraded)) <= 1e-4);
    CHECK(s < 1.0);
    CHECK(s == ssim(degraded, faces[1]));
    CHECK(ssim(faces[0], faces[1]) <= 1.0);
    CHECK(ssim(testing::random_image(32, 32, 3), testing::random_image(32, 32, 4)) >= -1.0);
    CHECK_THROWS_AS(ssim(faces[0], Image(64, 63)), ShapeError);
    CHECK_THROWS_AS(ssim(Image(8, 8), Image(8, 8)), ShapeError);
}

TEST_CASE("id_similarity") {
    const IdentityEmbedder embedder(64);
    const auto faces = synth_face_corpus(2, 64, 12);
    CHECK(id_similarity(embedder, faces[0], faces[0]) == doctest::Approx(1.0));
    CHECK(id_similarity(embedder, faces[0], faces[1]) == id_similarity(embedder, faces[1], faces[0]));
    DegradationParams heavy;
    heavy.blur_sigma = 12.0;
    heavy.down_scale = 8.0;
    heavy.noise_sigma = 20.0;
    heavy.jpeg_quality = 60;
    heavy.seed = 1;
    CHECK(id_similarity(embedder, faces[0], degrade(faces[0], heavy)) < 1.0);
}
