// Acceptance suite: one PASS/FAIL line per criterion on stdout, diagnostics on stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diffmac/archive.hpp"
#include "diffmac/codec.hpp"
#include "diffmac/control.hpp"
#include "diffmac/degradation.hpp"
#include "diffmac/denoiser.hpp"
#include "diffmac/diffusion.hpp"
#include "diffmac/faces.hpp"
#include "diffmac/identity.hpp"
#include "diffmac/metrics.hpp"
#include "diffmac/mib.hpp"
#include "diffmac/trainer.hpp"

namespace fs = std::filesystem;
using namespace diffmac;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

void note(const std::string& s) { std::cerr << "  " << s << '\n'; }

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1: bottleneck analytics ---------------------------------------------

double info_oracle(double l, double f) {
    const double a = (1.0 - l) * (1.0 - l);
    return -std::log(a) + 0.5 * (a + l * l * f * f - 1.0);
}

Outcome mib_analytics() {
    const auto f = torch::randn({2, 8, 4, 4}, torch::kFloat64) * 4.0;
    const bool zero = info_loss(torch::zeros_like(f), f).item<double>() == 0.0;

    double worst = 1e300;
    for (int i = 0; i <= 99; ++i)
        for (int j = -50; j <= 50; ++j) worst = std::min(worst, info_term(i / 100.0, j / 10.0));

    const double half =
        info_loss(torch::full({1, 8, 2, 2}, 0.5, torch::kFloat64), torch::zeros({1, 8, 2, 2}, torch::kFloat64))
            .item<double>();
    const bool half_ok = std::abs(half - 1.01129) <= 1e-4 && std::abs(info_oracle(0.5, 0.0) - 1.01129) <= 1e-4;

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ul(0.01, 0.98), uf(-5.0, 5.0);
    double worst_rel = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double l = ul(rng), x = uf(rng), h = 1e-6;
        const double fd = (info_oracle(l + h, x) - info_oracle(l - h, x)) / (2 * h);
        const double an = info_term_dlambda(l, x);
        worst_rel = std::max(worst_rel, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
    }
    return {zero && worst >= 0.0 && half_ok && worst_rel <= 1e-4,
            fmt("zero-limit exact, grid min %.3g, info(0.5, 0) = %.6f, worst FD rel err %.2e", worst, half,
                worst_rel)};
}

// ---- 2: bottleneck trade-off ----------------------------------------------

Outcome tradeoff() {
    const double r = 1.0, z_hq = 1.0, eps = 0.0, f = 1.0;
    auto argmin = [&](double beta) {
        double best = 1e300, arg = -1.0;
        for (int i = 0; i <= 999; ++i) {
            const double l = i / 1000.0;
            const double z = l * r + (1 - l) * eps;
            const double obj = beta * info_term(l, f) + (z - z_hq) * (z - z_hq);
            if (obj < best) {
                best = obj;
                arg = l;
            }
        }
        return arg;
    };
    const double a = argmin(0.001), b = argmin(0.01), c = argmin(0.1);
    return {a >= b && b >= c, fmt("lambda* = %.3f, %.3f, %.3f for beta = 0.001, 0.01, 0.1", a, b, c)};
}

// ---- 3: zero-init control -------------------------------------------------

Outcome zero_init() {
    torch::NoGradGuard no_grad;
    double worst = 0.0;
    int levels = 0;
    for (const auto& widths : std::vector<std::vector<int64_t>>{{32, 64, 128}, {16, 32}, {32}}) {
        DenoiserConfig cfg;
        cfg.widths = widths;
        for (std::uint64_t seed : {1, 2}) {
            ControlledDenoiser net(cfg, seed);
            const auto z = torch::randn({2, 4, 8, 8});
            const auto t = torch::tensor({3, 950}, torch::kInt64);
            std::vector<torch::Tensor> base_trace, ctrl_trace;
            const auto base = net->forward(z, t, {}, &base_trace);
            const auto ctrl = net->forward(z, t, torch::randn({2, 8, 8, 8}) * 3.0, &ctrl_trace);
            worst = std::max(worst, (base - ctrl).abs().max().item<double>());
            if (base_trace.size() != ctrl_trace.size()) return {false, "trace length mismatch"};
            for (std::size_t i = 0; i < base_trace.size(); ++i)
                worst = std::max(worst, (base_trace[i] - ctrl_trace[i]).abs().max().item<double>());
            levels += static_cast<int>(base_trace.size());
        }
    }
    return {worst <= 1e-6, fmt("max abs diff %.2e over %.0f level outputs", worst, levels)};
}

// ---- 4: diffusion algebra ---------------------------------------------------

Outcome diffusion_algebra() {
    const auto sched = make_schedule(1000, 1e-4, 0.02);
    const auto z = torch::randn({1, 4, 8, 8}, torch::kFloat64);
    const auto eps = torch::randn({1, 4, 8, 8}, torch::kFloat64);
    double worst = 0.0;
    for (int t = 1; t <= 1000; ++t)
        worst = std::max(worst, (predict_z0(q_sample(z, t, eps, sched), eps, t, sched) - z).abs().max().item<double>());
    const auto ts = spaced_timesteps(1000, 50);
    const bool spaced = ts.size() == 50 && std::set<int>(ts.begin(), ts.end()).size() == 50 && ts.back() == 1000;
    return {worst <= 1e-5 && spaced,
            fmt("round-trip max err %.2e, %.0f unique steps ending at %.0f", worst,
                static_cast<double>(std::set<int>(ts.begin(), ts.end()).size()), ts.back())};
}

// ---- 5: degradation ---------------------------------------------------------

Outcome degradation(const fs::path& work) {
    const auto faces = synth_face_corpus(8, 64, 500);
    const auto dir = work / "degradation";
    fs::create_directories(dir);

    std::vector<ManifestRecord> records;
    for (std::size_t i = 0; i < faces.size(); ++i)
        records.push_back({"face_" + std::to_string(i) + ".png", sample_params(derive_seed(5, i))});
    write_manifest(records, dir / "manifest.jsonl");
    const auto replay = read_manifest(dir / "manifest.jsonl");
    bool identical = replay.size() == records.size();
    for (std::size_t i = 0; identical && i < faces.size(); ++i)
        identical = to_u8(degrade(faces[i], records[i].params)) == to_u8(degrade(faces[i], replay[i].params));

    DegradationParams id;
    id.blur_sigma = 0.0;
    id.down_scale = 1.0;
    id.noise_sigma = 0.0;
    id.jpeg_quality = 100;
    double min_identity = 1e9;
    for (const auto& f : faces) min_identity = std::min(min_identity, psnr(degrade(f, id), f));

    DegradationParams p;
    p.blur_sigma = 1.5;
    p.down_scale = 2.0;
    p.noise_sigma = 5.0;
    p.seed = 17;
    bool monotone = true;
    double previous = 1e9;
    for (int q = 100; q >= 60; q -= 5) {
        p.jpeg_quality = q;
        double mean = 0.0;
        for (const auto& f : faces) mean += psnr(degrade(f, p), f);
        mean /= static_cast<double>(faces.size());
        monotone = monotone && mean <= previous + 1e-9;
        previous = mean;
    }
    return {identical && min_identity >= 40.0 && monotone,
            std::string(identical ? "replay bit-identical" : "replay DIFFERS") +
                fmt(", near-identity min PSNR %.2f dB", min_identity) +
                (monotone ? ", JPEG monotone" : ", JPEG NOT monotone")};
}

// ---- pipeline ---------------------------------------------------------------

struct PipelineSpec {
    std::size_t images = 16;
    int codec_iterations = 2000;
    int stage1_iterations = 2000;
    int stage2_iterations = 1000;
    int sampler_steps = 50;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct Pipeline {
    std::vector<Image> hq, lq;
    std::optional<CodecAssets> assets;
    StageModel stage1, stage2;
    std::vector<double> codec_losses;
    std::vector<TrainLogRecord> log1, log2;
    std::vector<Restoration> restored;
    Config config;
};

// Full seeded run; every artifact is written under `dir`.
Pipeline run_pipeline(const PipelineSpec& spec, const fs::path& dir) {
    using clk = std::chrono::steady_clock;
    fs::create_directories(dir);
    Pipeline p;
    Config& cfg = p.config;
    cfg.seed = spec.seed;
    cfg.batch_size = spec.batch_size;
    cfg.learning_rate = spec.learning_rate;
    cfg.stage1_iterations = spec.stage1_iterations;
    cfg.stage2_iterations = spec.stage2_iterations;
    cfg.sampler_steps = spec.sampler_steps;
    cfg.codec_iterations = spec.codec_iterations;
    save_config(cfg, dir / "run.cfg");

    p.hq = synth_face_corpus(spec.images, cfg.resolution, spec.seed);
    for (std::size_t i = 0; i < p.hq.size(); ++i)
        p.lq.push_back(degrade(p.hq[i], sample_params(derive_seed(spec.seed, 1000 + i))));

    auto t0 = clk::now();
    CodecTrainConfig cc;
    cc.iterations = cfg.codec_iterations;
    cc.batch_size = cfg.codec_batch_size;
    cc.learning_rate = cfg.codec_learning_rate;
    cc.kl_weight = cfg.codec_kl_weight;
    cc.seed = cfg.seed;
    auto trained = train_codec(p.hq, cc, cfg.resolution);
    p.codec_losses = trained.losses;
    auto stats = compute_qc_stats(p.hq, trained.codec);
    stats.floor = cfg.std_floor;
    trained.codec.save(dir / "codec.bin");
    save_qc_stats(stats, dir / "stats.json");
    p.assets.emplace(CodecAssets::make(std::move(trained.codec), std::move(stats)));
    const auto& assets = *p.assets;
    auto secs = [&] { return std::chrono::duration<double>(clk::now() - t0).count(); };
    note(fmt("codec: %.0f steps in %.0f s", cc.iterations, secs()));

    t0 = clk::now();
    auto s1 = train_stage1(p.hq, assets, cfg);
    p.stage1 = s1.model;
    p.log1 = s1.log;
    p.stage1.save(dir / "stage1.bin");
    write_train_log(p.log1, dir / "stage1.jsonl");
    note(fmt("stage I: %.0f steps in %.0f s", cfg.stage1_iterations, secs()));

    // Stage-II conditioning: X_D1 of an independent draw of degradations.
    t0 = clk::now();
    std::vector<Image> lq_train;
    for (std::size_t i = 0; i < p.hq.size(); ++i)
        lq_train.push_back(degrade(p.hq[i], sample_params(derive_seed(spec.seed, 2000 + i))));
    const auto d1_train = synthesize_stage1(p.stage1, lq_train, assets, cfg.sampler_steps, derive_seed(spec.seed, 3000));
    auto s2 = train_stage2(p.hq, d1_train, p.stage1, assets, cfg);
    p.stage2 = s2.model;
    p.log2 = s2.log;
    p.stage2.save(dir / "stage2.bin");
    write_train_log(p.log2, dir / "stage2.jsonl");
    note(fmt("stage II: %.0f steps in %.0f s (incl. conditioning synthesis)", cfg.stage2_iterations, secs()));

    t0 = clk::now();
    fs::create_directories(dir / "restored");
    for (std::size_t i = 0; i < p.lq.size(); ++i) {
        p.restored.push_back(
            restore(p.lq[i], p.stage1, p.stage2, assets, cfg.sampler_steps, derive_seed(spec.seed, 4000 + i)));
        write_png(p.restored.back().restored, dir / "restored" / ("face_" + std::to_string(i) + ".png"));
    }
    note(fmt("restore: %.0f images in %.0f s", static_cast<double>(p.lq.size()), secs()));
    return p;
}

double mean_of(const std::vector<TrainLogRecord>& log, std::size_t from, std::size_t to, double TrainLogRecord::*f) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += log[i].*f;
    return s / static_cast<double>(to - from);
}

// Supplementary training-health diagnostics (not criteria).
void diagnose(const Pipeline& p) {
    const auto& codec = p.assets->codec;
    double recon = 0.0;
    for (const auto& img : p.hq) recon += psnr(codec.decode(codec.encode(img).mean()), img);
    note(fmt("codec reconstruction PSNR %.2f dB", recon / static_cast<double>(p.hq.size())));
    const std::size_t w = std::min<std::size_t>(100, p.log1.size() / 2);
    if (w > 0) {
        note(fmt("stage I ldm over %.0f-step windows: first %.4f, last %.4f", static_cast<double>(w),
                 mean_of(p.log1, 0, w, &TrainLogRecord::ldm),
                 mean_of(p.log1, p.log1.size() - w, p.log1.size(), &TrainLogRecord::ldm)));
    }
    const std::size_t w2 = std::min<std::size_t>(100, p.log2.size() / 2);
    if (w2 > 0) {
        note(fmt("stage II rec: first mean %.4f, last mean %.4f", mean_of(p.log2, 0, w2, &TrainLogRecord::rec),
                 mean_of(p.log2, p.log2.size() - w2, p.log2.size(), &TrainLogRecord::rec)));
    }

    // Spacing consistency: T-step and 50-step samples share per-channel means.
    const auto sched = schedule_for(p.config);
    const auto manifold = codec.encode(p.lq[0]).tensor();
    const auto full = sample_latent(p.stage1, manifold, sched, sched.steps(), 1);
    const auto spaced = sample_latent(p.stage1, manifold, sched, 50, 1);
    const double gap = (full.mean({0, 2, 3}) - spaced.mean({0, 2, 3})).abs().max().item<double>();
    note(fmt("sampler spacing: max per-channel mean gap, T vs 50 steps, %.3f (bound 0.5)", gap));
}

// ---- 6: overfit restoration gain ------------------------------------------

Outcome restoration_gain(const Pipeline& p) {
    double lq = 0.0, d1 = 0.0, d2 = 0.0;
    int kept = 0;
    for (std::size_t i = 0; i < p.hq.size(); ++i) {
        const double a = psnr(p.restored[i].stage1, p.hq[i]), b = psnr(p.restored[i].restored, p.hq[i]);
        note(fmt("image %2.0f: X_D1 %.2f dB, X_D2 %.2f dB", static_cast<double>(i), a, b));
        lq += psnr(p.lq[i], p.hq[i]);
        d1 += a;
        d2 += b;
        kept += b >= a - 0.5;
    }
    note(fmt("X_D2 within 0.5 dB of X_D1 or better on %.0f of %.0f images", kept, static_cast<double>(p.hq.size())));
    const double n = static_cast<double>(p.hq.size());
    lq /= n;
    d1 /= n;
    d2 /= n;
    return {d1 >= lq + 2.0 && d2 >= d1 - 0.5,
            fmt("mean PSNR LQ %.2f dB, X_D1 %.2f dB, X_D2 %.2f dB", lq, d1, d2)};
}

// ---- 7: loss bookkeeping ----------------------------------------------------

Outcome bookkeeping(const Pipeline& p) {
    if (p.log2.empty()) return {false, "empty Stage-II log"};
    if (p.config.lambda_info != 0.001 || p.config.lambda_rec != 1.0) return {false, "unexpected loss weights"};
    double worst = 0.0;
    for (const auto& r : p.log2) {
        const double sum = r.ldm + 0.001 * r.info + 1.0 * r.rec;
        worst = std::max(worst, std::abs(sum - r.total) / std::max(1.0, std::abs(r.total)));
    }
    return {worst <= 1e-6, fmt("%.0f logged steps, worst recombination error %.2e", static_cast<double>(p.log2.size()),
                               worst)};
}

// ---- 8: determinism ---------------------------------------------------------

Outcome determinism(const fs::path& work) {
    PipelineSpec spec;
    spec.images = 8;
    spec.codec_iterations = 40;
    spec.stage1_iterations = 20;
    spec.stage2_iterations = 10;
    spec.sampler_steps = 10;
    spec.batch_size = 4;
    spec.seed = 21;
    const auto a = work / "determinism_a";
    const auto b = work / "determinism_b";
    fs::remove_all(a);
    fs::remove_all(b);
    run_pipeline(spec, a);
    run_pipeline(spec, b);
    int compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a);
        if (!fs::exists(b / rel) || read_bytes(entry.path()) != read_bytes(b / rel))
            return {false, rel.string() + " differs between runs"};
        ++compared;
    }
    return {compared > 0, fmt("%.0f artifacts byte-identical (checkpoints, logs, restored images)", compared)};
}

// ---- 9: identity diversity -------------------------------------------------

Outcome identity_diversity(const Pipeline& p) {
    const IdentityEmbedder embedder(p.config.resolution);
    const auto a = embedder.embed(synth_face(90001, p.config.resolution));
    const auto b = embedder.embed(synth_face(90002, p.config.resolution));
    double worst = 1e9, best = 0.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(4, p.lq.size()); ++i) {
        const auto seed = derive_seed(p.config.seed, 5000 + i);
        const auto ra = restore(p.lq[i], p.stage1, p.stage2, *p.assets, p.config.sampler_steps, seed, &a);
        const auto rb = restore(p.lq[i], p.stage1, p.stage2, *p.assets, p.config.sampler_steps, seed, &b);
        double diff = 0.0;
        for (std::size_t k = 0; k < ra.restored.size(); ++k)
            diff = std::max(diff, static_cast<double>(std::abs(ra.restored.pixels()[k] - rb.restored.pixels()[k])));
        worst = std::min(worst, diff);
        best = std::max(best, diff);
    }
    return {worst > 0.01, fmt("max abs pixel diff between identities: min %.4f, max %.4f over 4 inputs", worst, best)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffmac acceptance suite"};
    std::string work = (fs::temp_directory_path() / "diffmac_acceptance").string();
    std::vector<int> only;
    app.add_option("--work", work, "Directory for pipeline artifacts");
    app.add_option("--only", only, "Run just these criteria")->delimiter(',')->check(CLI::Range(1, 9));
    CLI11_PARSE(app, argc, argv);

    torch::set_num_threads(1);
    torch::manual_seed(0);
    const fs::path root(work);
    fs::create_directories(root);
    auto selected = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

    std::optional<Pipeline> pipeline;
    auto desk = [&]() -> const Pipeline& {
        if (!pipeline) {
            note("training the desk-scale pipeline");
            pipeline = run_pipeline(PipelineSpec{}, root / "desk");
            diagnose(*pipeline);
        }
        return *pipeline;
    };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"bottleneck analytics", mib_analytics},
        {"bottleneck trade-off", tradeoff},
        {"zero-init control identity", zero_init},
        {"diffusion algebra", diffusion_algebra},
        {"degradation determinism and identity", [&] { return degradation(root); }},
        {"overfit restoration gain", [&] { return restoration_gain(desk()); }},
        {"loss bookkeeping", [&] { return bookkeeping(desk()); }},
        {"determinism", [&] { return determinism(root); }},
        {"identity diversity", [&] { return identity_diversity(desk()); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failed;
        std::printf("[%s] %d. %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), s);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
