#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffmac/codec.hpp"
#include "diffmac/config.hpp"
#include "diffmac/degradation.hpp"
#include "diffmac/errors.hpp"
#include "diffmac/faces.hpp"
#include "diffmac/identity.hpp"
#include "diffmac/image.hpp"
#include "diffmac/metrics.hpp"
#include "diffmac/trainer.hpp"

namespace fs = std::filesystem;
using namespace diffmac;

namespace {

constexpr int kUsageExit = 2;
constexpr const char* kDataRootEnv = "DIFFMAC_DATA_ROOT";

struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
};

void add_common(CLI::App* cmd, Common& common, const std::string& out_help) {
    cmd->add_option("--seed", common.seed, "Run seed (overrides the config file)");
    cmd->add_option("--config", common.config, "Key-value config file");
    cmd->add_option("--out", common.out, out_help)->required();
}

// Relative data paths resolve against $DIFFMAC_DATA_ROOT when it is set.
fs::path data_path(const std::string& p) {
    fs::path path(p);
    if (path.is_absolute() || fs::exists(path)) return path;
    if (const char* root = std::getenv(kDataRootEnv)) return fs::path(root) / path;
    return path;
}

Config load_config(const Common& common) {
    Config cfg = common.config.empty() ? Config{} : parse_config(common.config);
    if (common.seed) cfg.seed = *common.seed;
    return cfg;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing ") + what);
    if (!fs::exists(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

CodecAssets load_assets(const std::string& codec, const std::string& stats) {
    require_file(codec, "codec checkpoint (--codec)");
    require_file(stats, "manifold statistics (--stats)");
    return CodecAssets::load(codec, stats);
}

StageModel load_stage(const std::string& path, int stage, const char* what) {
    require_file(path, what);
    auto m = StageModel::load(path);
    if (m.stage != stage)
        throw ConfigError(path + " is a Stage " + std::to_string(m.stage) + " checkpoint, expected Stage " +
                          std::to_string(stage));
    return m;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_images(const std::vector<std::string>& names, const std::vector<Image>& images,
                  const fs::path& dir) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) write_png(images[i], dir / names[i]);
}

// Pairs every file in `dir` with the same-named image in `reference`.
std::vector<Image> load_paired(const fs::path& dir, const Dataset& reference) {
    std::vector<Image> out;
    out.reserve(reference.names.size());
    for (const auto& name : reference.names) {
        const auto path = dir / name;
        if (!fs::exists(path)) throw ConfigError("missing paired image " + path.string());
        out.push_back(read_png(path));
    }
    return out;
}

// ---- make-faces ----------------------------------------------------------

struct FacesArgs {
    Common common;
    int count = 16;
    int resolution = 64;
};

int run_make_faces(const FacesArgs& a) {
    const auto seed = a.common.seed.value_or(0);
    const auto faces = synth_face_corpus(static_cast<std::size_t>(a.count), a.resolution, seed);
    std::vector<std::string> names;
    for (int i = 0; i < a.count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "face_%03d.png", i);
        names.emplace_back(buf);
    }
    write_images(names, faces, a.common.out);
    std::cout << "wrote " << faces.size() << " faces to " << a.common.out << '\n';
    return 0;
}

// ---- train-codec / stats -------------------------------------------------

struct CodecArgs {
    Common common;
    std::string data;
    std::string log;
};

int run_train_codec(const CodecArgs& a) {
    const auto cfg = load_config(a.common);
    const auto ds = load_dataset(data_path(a.data), cfg.resolution);
    torch::set_num_threads(cfg.threads);
    CodecTrainConfig cc;
    cc.iterations = cfg.codec_iterations;
    cc.batch_size = cfg.codec_batch_size;
    cc.learning_rate = cfg.codec_learning_rate;
    cc.kl_weight = cfg.codec_kl_weight;
    cc.seed = cfg.seed;
    const auto result = train_codec(ds.images, cc, cfg.resolution);
    ensure_parent(a.common.out);
    result.codec.save(a.common.out);
    if (!a.log.empty()) {
        ensure_parent(a.log);
        std::ofstream log(a.log);
        for (std::size_t i = 0; i < result.losses.size(); ++i)
            log << "{\"iteration\":" << i + 1 << ",\"rec\":" << result.losses[i] << "}\n";
    }
    std::cout << "codec " << result.codec.hash() << " -> " << a.common.out << '\n';
    return 0;
}

struct StatsArgs {
    Common common;
    std::string data;
    std::string codec;
};

int run_stats(const StatsArgs& a) {
    const auto cfg = load_config(a.common);
    require_file(a.codec, "codec checkpoint (--codec)");
    const auto codec = ManifoldCodec::load(a.codec);
    const auto ds = load_dataset(data_path(a.data), codec.resolution());
    torch::set_num_threads(cfg.threads);
    auto stats = compute_qc_stats(ds.images, codec);
    stats.floor = cfg.std_floor;
    ensure_parent(a.common.out);
    save_qc_stats(stats, a.common.out);
    std::cout << "stats over " << stats.count << " images -> " << a.common.out << '\n';
    return 0;
}

// ---- degrade -------------------------------------------------------------

struct DegradeArgs {
    Common common;
    std::string data;
    std::string manifest;
};

int run_degrade(const DegradeArgs& a) {
    const auto cfg = load_config(a.common);
    const fs::path out(a.common.out);
    const fs::path manifest = a.manifest.empty() ? out / "manifest.jsonl" : fs::path(a.manifest);
    std::vector<ManifestRecord> records;
    if (fs::exists(manifest)) {
        records = read_manifest(manifest);
    } else {
        const auto ds = load_dataset(data_path(a.data), cfg.resolution);
        std::mt19937_64 rng(cfg.seed);
        for (const auto& name : ds.names) records.push_back({name, sample_params(rng())});
        ensure_parent(manifest);
        write_manifest(records, manifest);
    }
    const auto root = data_path(a.data);
    fs::create_directories(out);
    for (const auto& r : records) {
        const auto lq = degrade(read_png(root / r.source), r.params);
        write_png(lq, out / fs::path(r.source).filename());
    }
    std::cout << "degraded " << records.size() << " images -> " << out.string() << '\n';
    return 0;
}

// ---- training ------------------------------------------------------------

struct Stage1Args {
    Common common;
    std::string data;
    std::string codec;
    std::string stats;
    std::string log;
};

int run_train_stage1(const Stage1Args& a) {
    const auto cfg = load_config(a.common);
    const auto assets = load_assets(a.codec, a.stats);
    const auto ds = load_dataset(data_path(a.data), cfg.resolution);
    const auto result = train_stage1(ds.images, assets, cfg);
    ensure_parent(a.common.out);
    result.model.save(a.common.out);
    if (!a.log.empty()) write_train_log(result.log, a.log);
    std::cout << "stage I: " << result.model.iteration << " iterations -> " << a.common.out << '\n';
    return 0;
}

struct SynthArgs {
    Common common;
    std::string data;
    std::string stage1;
    std::string codec;
    std::string stats;
    std::optional<int> steps;
};

int run_synth_stage1(const SynthArgs& a) {
    const auto stage1 = load_stage(a.stage1, 1, "Stage-I checkpoint (--stage1)");
    Config cfg = a.common.config.empty() ? stage1.config : parse_config(a.common.config);
    if (a.common.seed) cfg.seed = *a.common.seed;
    const auto assets = load_assets(a.codec, a.stats);
    const auto ds = load_dataset(data_path(a.data), assets.codec.resolution());
    const int steps = a.steps.value_or(cfg.sampler_steps);
    const auto outputs = synthesize_stage1(stage1, ds.images, assets, steps, cfg.seed);
    const fs::path out(a.common.out);
    write_images(ds.names, outputs, out);
    std::ofstream manifest(out / "manifest.jsonl");
    for (std::size_t i = 0; i < ds.names.size(); ++i)
        manifest << "{\"source\":\"" << ds.names[i] << "\",\"steps\":" << steps
                 << ",\"seed\":" << derive_seed(cfg.seed, i) << "}\n";
    std::cout << "synthesized " << outputs.size() << " Stage-I outputs -> " << out.string() << '\n';
    return 0;
}

struct Stage2Args {
    Common common;
    std::string data;
    std::string stage1_outputs;
    std::string stage1;
    std::string codec;
    std::string stats;
    std::string log;
    std::string variant;
};

int run_train_stage2(const Stage2Args& a, const std::optional<std::string>& ablation) {
    auto cfg = load_config(a.common);
    if (ablation) {
        if (ablation->rfind("beta=", 0) == 0)
            set_config_value(cfg, "lambda_info", ablation->substr(5));
        else
            cfg.variant = parse_variant(*ablation);
    }
    const auto stage1 = load_stage(a.stage1, 1, "Stage-I checkpoint (--stage1)");
    const auto assets = load_assets(a.codec, a.stats);
    const auto ds = load_dataset(data_path(a.data), cfg.resolution);
    std::vector<Image> conditioning;
    if (cfg.variant != Variant::no_stage1) {
        if (a.stage1_outputs.empty())
            throw ConfigError("missing Stage-I outputs (--stage1-outputs); run synth-stage1 first");
        conditioning = load_paired(data_path(a.stage1_outputs), ds);
    }
    const auto result = train_stage2(ds.images, conditioning, stage1, assets, cfg);
    ensure_parent(a.common.out);
    result.model.save(a.common.out);
    if (!a.log.empty()) write_train_log(result.log, a.log);
    std::cout << "stage II (" << to_string(cfg.variant) << ", lambda_info " << cfg.lambda_info
              << "): " << result.model.iteration << " iterations -> " << a.common.out << '\n';
    return 0;
}

// ---- restore / eval ------------------------------------------------------

struct RestoreArgs {
    Common common;
    std::string input;
    std::string stage1;
    std::string stage2;
    std::string codec;
    std::string stats;
    std::string id_override;
    std::string stage1_out;
    std::optional<int> steps;
};

int run_restore(const RestoreArgs& a) {
    const auto stage1 = load_stage(a.stage1, 1, "Stage-I checkpoint (--stage1)");
    const auto stage2 = load_stage(a.stage2, 2, "Stage-II checkpoint (--stage2)");
    const auto assets = load_assets(a.codec, a.stats);
    const std::uint64_t seed = a.common.seed.value_or(stage2.config.seed);
    const int steps = a.steps.value_or(stage2.config.sampler_steps);
    std::map<std::string, IdentityEmbedding> overrides;
    if (!a.id_override.empty()) overrides = load_embedding_overrides(a.id_override);

    const auto input = data_path(a.input);
    const bool single = fs::is_regular_file(input);
    std::vector<fs::path> files = single ? std::vector<fs::path>{input} : list_pngs(input);
    if (files.empty()) throw ConfigError("no PNG input at " + input.string());
    const fs::path out(a.common.out);
    if (!single) fs::create_directories(out);

    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto name = files[i].filename().string();
        const IdentityEmbedding* id = nullptr;
        if (auto it = overrides.find(name); it != overrides.end()) id = &it->second;
        else if (auto all = overrides.find("*"); all != overrides.end()) id = &all->second;
        const auto r = restore(read_png(files[i]), stage1, stage2, assets, steps, derive_seed(seed, i), id);
        const auto target = single ? out : out / name;
        ensure_parent(target);
        write_png(r.restored, target);
        if (!a.stage1_out.empty()) {
            const auto d1 = single ? fs::path(a.stage1_out) : fs::path(a.stage1_out) / name;
            ensure_parent(d1);
            write_png(r.stage1, d1);
        }
    }
    std::cout << "restored " << files.size() << " image(s) -> " << out.string() << '\n';
    return 0;
}

struct EvalArgs {
    Common common;
    std::string restored;
    std::string reference;
};

int run_eval(const EvalArgs& a) {
    const auto cfg = load_config(a.common);
    const auto ref = load_dataset(data_path(a.reference), cfg.resolution);
    const auto restored = load_paired(data_path(a.restored), ref);
    const IdentityEmbedder embedder(cfg.resolution);
    ensure_parent(a.common.out);
    std::ofstream out(a.common.out);
    if (!out) throw IoError("cannot write " + a.common.out);
    out << "image\tpsnr\tssim\tid_sim\n";
    double sp = 0.0, ss = 0.0, si = 0.0;
    char line[256];
    for (std::size_t i = 0; i < ref.names.size(); ++i) {
        const double p = psnr(restored[i], ref.images[i]);
        const double s = ssim(restored[i], ref.images[i]);
        const double id = id_similarity(embedder, restored[i], ref.images[i]);
        sp += p;
        ss += s;
        si += id;
        std::snprintf(line, sizeof line, "%s\t%.4f\t%.6f\t%.6f\n", ref.names[i].c_str(), p, s, id);
        out << line;
    }
    const double n = static_cast<double>(ref.names.size());
    std::snprintf(line, sizeof line, "mean\t%.4f\t%.6f\t%.6f\n", sp / n, ss / n, si / n);
    out << line;
    std::cout << line;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage diffusion face restoration with a manifold information bottleneck"};
    app.name("diffmac");
    app.require_subcommand(1);

    FacesArgs faces;
    auto* c_faces = app.add_subcommand("make-faces", "Write a procedural face corpus");
    add_common(c_faces, faces.common, "Output directory");
    c_faces->add_option("--count", faces.count)->check(CLI::PositiveNumber);
    c_faces->add_option("--resolution", faces.resolution)->check(CLI::PositiveNumber);

    CodecArgs codec;
    auto* c_codec = app.add_subcommand("train-codec", "Train the manifold codec");
    add_common(c_codec, codec.common, "Codec checkpoint path");
    c_codec->add_option("--data", codec.data, "HQ image directory")->required();
    c_codec->add_option("--log", codec.log, "Per-step loss log");

    StatsArgs stats;
    auto* c_stats = app.add_subcommand("stats", "Compute per-channel manifold statistics");
    add_common(c_stats, stats.common, "Statistics file path");
    c_stats->add_option("--data", stats.data, "HQ image directory")->required();
    c_stats->add_option("--codec", stats.codec, "Codec checkpoint")->required();

    DegradeArgs degrade_args;
    auto* c_degrade = app.add_subcommand("degrade", "Synthesize LQ images (replays an existing manifest)");
    add_common(c_degrade, degrade_args.common, "Output directory");
    c_degrade->add_option("--data", degrade_args.data, "HQ image directory")->required();
    c_degrade->add_option("--manifest", degrade_args.manifest, "Manifest path (default <out>/manifest.jsonl)");

    Stage1Args s1;
    auto* c_s1 = app.add_subcommand("train-stage1", "Train the Stage-I control branch");
    add_common(c_s1, s1.common, "Stage-I checkpoint path");
    c_s1->add_option("--data", s1.data, "HQ image directory")->required();
    c_s1->add_option("--codec", s1.codec, "Codec checkpoint");
    c_s1->add_option("--stats", s1.stats, "Manifold statistics");
    c_s1->add_option("--log", s1.log, "Training log (JSON lines)");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth-stage1", "Run Stage I over a directory of LQ images");
    add_common(c_synth, synth.common, "Output directory");
    c_synth->add_option("--data", synth.data, "LQ image directory")->required();
    c_synth->add_option("--stage1", synth.stage1, "Stage-I checkpoint");
    c_synth->add_option("--codec", synth.codec, "Codec checkpoint");
    c_synth->add_option("--stats", synth.stats, "Manifold statistics");
    c_synth->add_option("--steps", synth.steps, "Sampler steps")->check(CLI::PositiveNumber);

    Stage2Args s2;
    auto add_stage2 = [&](CLI::App* cmd) {
        add_common(cmd, s2.common, "Stage-II checkpoint path");
        cmd->add_option("--data", s2.data, "HQ image directory")->required();
        cmd->add_option("--stage1-outputs", s2.stage1_outputs, "Directory of Stage-I outputs (same names)");
        cmd->add_option("--stage1", s2.stage1, "Stage-I checkpoint");
        cmd->add_option("--codec", s2.codec, "Codec checkpoint");
        cmd->add_option("--stats", s2.stats, "Manifold statistics");
        cmd->add_option("--log", s2.log, "Training log (JSON lines)");
    };
    auto* c_s2 = app.add_subcommand("train-stage2", "Train Stage II with the information bottleneck");
    add_stage2(c_s2);
    auto* c_ablate = app.add_subcommand("ablate", "Train a Stage-II ablation variant");
    add_stage2(c_ablate);
    c_ablate->add_option("--variant", s2.variant, "2adain | no-stage1 | noise-inject | no-inject | beta=<v>")
        ->required();

    RestoreArgs rest;
    auto* c_restore = app.add_subcommand("restore", "Restore LQ faces with both stages");
    add_common(c_restore, rest.common, "Output file (single input) or directory");
    c_restore->add_option("--input", rest.input, "LQ PNG file or directory")->required();
    c_restore->add_option("--stage1", rest.stage1, "Stage-I checkpoint");
    c_restore->add_option("--stage2", rest.stage2, "Stage-II checkpoint");
    c_restore->add_option("--codec", rest.codec, "Codec checkpoint");
    c_restore->add_option("--stats", rest.stats, "Manifold statistics");
    c_restore->add_option("--id-override", rest.id_override,
                          "JSON {file name or \"*\": [embedding]} replacing the identity embedding");
    c_restore->add_option("--stage1-out", rest.stage1_out, "Also write the Stage-I outputs here");
    c_restore->add_option("--steps", rest.steps, "Sampler steps")->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "PSNR / SSIM / identity similarity report");
    add_common(c_eval, ev.common, "Report path (TSV)");
    c_eval->add_option("--restored", ev.restored, "Restored image directory")->required();
    c_eval->add_option("--reference", ev.reference, "HQ reference directory")->required();

    if (argc <= 1) {
        std::cerr << app.help();
        return kUsageExit;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsageExit;
    }

    try {
        if (*c_faces) return run_make_faces(faces);
        if (*c_codec) return run_train_codec(codec);
        if (*c_stats) return run_stats(stats);
        if (*c_degrade) return run_degrade(degrade_args);
        if (*c_s1) return run_train_stage1(s1);
        if (*c_synth) return run_synth_stage1(synth);
        if (*c_s2) return run_train_stage2(s2, std::nullopt);
        if (*c_ablate) return run_train_stage2(s2, s2.variant);
        if (*c_restore) return run_restore(rest);
        if (*c_eval) return run_eval(ev);
    } catch (const ValidationError& e) {
        std::cerr << "diffmac: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "diffmac: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "diffmac: unexpected failure: " << e.what() << '\n';
        return 1;
    }
    return kUsageExit;
}
