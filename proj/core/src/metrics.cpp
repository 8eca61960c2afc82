#include "diffmac/metrics.hpp"

#include <cmath>
#include <string>

#include "diffmac/errors.hpp"
#include "diffmac/identity.hpp"

namespace diffmac {

namespace {

void require_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.empty())
        throw ShapeError("metric inputs differ in shape: " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
}

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Valid-mode separable filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int oh = h - n + 1;
    const int ow = w - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b);
    auto pa = a.pixels();
    auto pb = b.pixels();
    double se = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = 0.5 * (static_cast<double>(pa[i]) - pb[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(pa.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> luma(const Image& img) {
    std::vector<double> y(static_cast<std::size_t>(img.height()) * img.width());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) {
            const double v = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
            y[static_cast<std::size_t>(r) * img.width() + c] = 0.5 * (v + 1.0);
        }
    return y;
}

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b);
    if (a.height() < kWindow || a.width() < kWindow)
        throw ShapeError("SSIM needs images of at least 11x11");
    std::vector<double> k(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        k[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;

    const int h = a.height();
    const int w = a.width();
    const auto x = luma(a);
    const auto y = luma(b);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k);
    const auto syy = filter_valid(yy, h, w, k);
    const auto sxy = filter_valid(xy, h, w, k);

    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cxy = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    return total / static_cast<double>(mx.size());
}

double id_similarity(const IdentityEmbedder& embedder, const Image& a, const Image& b) {
    return cosine_similarity(embedder.embed(a), embedder.embed(b));
}

}  // namespace diffmac
