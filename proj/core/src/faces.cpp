#include "diffmac/faces.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace diffmac {

namespace {

using Rgb = std::array<double, 3>;

struct Ellipse {
    double cx, cy, rx, ry;

    // Signed distance proxy: < 0 inside, 0 on the boundary.
    double level(double x, double y) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        return std::sqrt(dx * dx + dy * dy) - 1.0;
    }
};

// Soft coverage from an ellipse level with an edge width in normalized units.
double coverage(const Ellipse& e, double x, double y, double edge) {
    return std::clamp(0.5 - e.level(x, y) / edge, 0.0, 1.0);
}

void blend(Rgb& dst, const Rgb& src, double alpha) {
    for (int c = 0; c < 3; ++c) dst[c] = dst[c] * (1.0 - alpha) + src[c] * alpha;
}

}  // namespace

Image synth_face(std::uint64_t seed, int resolution) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x5EEDULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    auto color = [&](double lo, double hi) { return Rgb{range(lo, hi), range(lo, hi), range(lo, hi)}; };

    const Rgb bg_top = color(-0.9, 0.9);
    const Rgb bg_bottom = color(-0.9, 0.9);
    const double tone = range(-0.4, 0.7);
    const Rgb skin = {std::min(1.0, tone + 0.25), tone, tone - range(0.1, 0.3)};
    const Rgb hair = color(-1.0, 0.2);
    const Rgb iris = color(-0.8, 0.6);
    const Rgb lips = {range(0.2, 0.8), range(-0.6, -0.1), range(-0.5, 0.0)};

    const Ellipse face{range(0.45, 0.55), range(0.52, 0.6), range(0.26, 0.34), range(0.32, 0.4)};
    const Ellipse head_hair{face.cx, face.cy - range(0.06, 0.12), face.rx * range(1.05, 1.2),
                            face.ry * range(0.95, 1.1)};
    const double eye_dx = face.rx * range(0.38, 0.5);
    const double eye_y = face.cy - face.ry * range(0.12, 0.3);
    const double eye_rx = face.rx * range(0.16, 0.24);
    const double eye_ry = eye_rx * range(0.45, 0.7);
    const Ellipse eye_l{face.cx - eye_dx, eye_y, eye_rx, eye_ry};
    const Ellipse eye_r{face.cx + eye_dx, eye_y, eye_rx, eye_ry};
    const double iris_r = eye_ry * range(0.7, 0.95);
    const Ellipse iris_l{eye_l.cx, eye_l.cy, iris_r, iris_r};
    const Ellipse iris_r_e{eye_r.cx, eye_r.cy, iris_r, iris_r};
    const double brow_y = eye_y - eye_ry * range(1.6, 2.4);
    const Ellipse brow_l{eye_l.cx, brow_y, eye_rx * 1.2, eye_ry * 0.35};
    const Ellipse brow_r{eye_r.cx, brow_y, eye_rx * 1.2, eye_ry * 0.35};
    const Ellipse nose{face.cx, face.cy + face.ry * range(0.05, 0.15), face.rx * 0.12, face.ry * 0.2};
    const Ellipse mouth{face.cx, face.cy + face.ry * range(0.45, 0.6), face.rx * range(0.3, 0.5),
                        face.ry * range(0.06, 0.12)};
    const double hair_freq = range(40.0, 90.0);
    const double hair_phase = range(0.0, 6.28);

    Image img(resolution, resolution);
    const double px = 1.0 / resolution;
    for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
            const double fx = (x + 0.5) * px;
            const double fy = (y + 0.5) * px;
            Rgb c;
            for (int k = 0; k < 3; ++k) c[k] = bg_top[k] * (1.0 - fy) + bg_bottom[k] * fy;

            const double stripes = 0.12 * std::sin(hair_freq * fx + 8.0 * fy + hair_phase);
            Rgb hair_px = hair;
            for (double& v : hair_px) v += stripes;
            blend(c, hair_px, coverage(head_hair, fx, fy, 0.08));

            const double shade = 0.15 * std::clamp(-face.level(fx, fy), 0.0, 1.0);
            Rgb skin_px = skin;
            for (double& v : skin_px) v += shade;
            blend(c, skin_px, coverage(face, fx, fy, 0.08));

            blend(c, Rgb{skin[0] - 0.25, skin[1] - 0.25, skin[2] - 0.25}, 0.6 * coverage(nose, fx, fy, 0.6));
            blend(c, hair, coverage(brow_l, fx, fy, 0.3));
            blend(c, hair, coverage(brow_r, fx, fy, 0.3));
            blend(c, Rgb{0.9, 0.9, 0.85}, coverage(eye_l, fx, fy, 0.25));
            blend(c, Rgb{0.9, 0.9, 0.85}, coverage(eye_r, fx, fy, 0.25));
            blend(c, iris, coverage(iris_l, fx, fy, 0.3));
            blend(c, iris, coverage(iris_r_e, fx, fy, 0.3));
            blend(c, lips, coverage(mouth, fx, fy, 0.3));

            for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(std::clamp(c[k], -1.0, 1.0));
        }
    }
    return img;
}

std::vector<Image> synth_face_corpus(std::size_t count, int resolution, std::uint64_t base_seed) {
    std::vector<Image> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(synth_face(base_seed + i, resolution));
    return out;
}

}  // namespace diffmac
