#include "diffmac/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "diffmac/errors.hpp"

namespace diffmac {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::two_adain: return "2adain";
        case Variant::no_stage1: return "no-stage1";
        case Variant::noise_inject: return "noise-inject";
        case Variant::no_inject: return "no-inject";
    }
    return "full";
}

Variant parse_variant(const std::string& s) {
    for (auto v : {Variant::full, Variant::two_adain, Variant::no_stage1, Variant::noise_inject,
                   Variant::no_inject})
        if (to_string(v) == s) return v;
    throw ParameterError("unknown variant '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValidationError(key, "expected a number, got '" + v + "'");
    }
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
    Int out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ValidationError(key, "expected an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError(key, "expected true or false, got '" + v + "'");
}

struct Field {
    std::string key;
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

Field int_field(const std::string& key, int Config::*member, int lo, int hi) {
    return {key,
            [=](Config& c, const std::string& v) {
                const int x = to_int<int>(key, v);
                if (x < lo || x > hi)
                    throw ValidationError(key, "must be in [" + std::to_string(lo) + ", " +
                                                   std::to_string(hi) + "], got " + v);
                c.*member = x;
            },
            [=](const Config& c) { return std::to_string(c.*member); }};
}

Field real_field(const std::string& key, double Config::*member, double lo, double hi,
                 bool open_lo = false) {
    return {key,
            [=](Config& c, const std::string& v) {
                const double x = to_double(key, v);
                const bool low_ok = open_lo ? x > lo : x >= lo;
                if (!low_ok || !(x <= hi))
                    throw ValidationError(key, std::string("must be in ") + (open_lo ? "(" : "[") +
                                                   format_double(lo) + ", " + format_double(hi) +
                                                   "], got " + v);
                c.*member = x;
            },
            [=](const Config& c) { return format_double(c.*member); }};
}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        constexpr int kBig = 100'000'000;
        std::vector<Field> f;
        f.push_back({"seed",
                     [](Config& c, const std::string& v) { c.seed = to_int<std::uint64_t>("seed", v); },
                     [](const Config& c) { return std::to_string(c.seed); }});
        f.push_back({"resolution",
                     [](Config& c, const std::string& v) {
                         const int r = to_int<int>("resolution", v);
                         if (r < 16 || r % 8 != 0)
                             throw ValidationError("resolution", "must be a multiple of 8 and >= 16");
                         c.resolution = r;
                     },
                     [](const Config& c) { return std::to_string(c.resolution); }});
        f.push_back(int_field("threads", &Config::threads, 1, 256));
        f.push_back(int_field("batch_size", &Config::batch_size, 1, 4096));
        f.push_back(real_field("learning_rate", &Config::learning_rate, 0.0, 1.0, true));
        f.push_back(int_field("stage1_iterations", &Config::stage1_iterations, 0, kBig));
        f.push_back(int_field("stage2_iterations", &Config::stage2_iterations, 0, kBig));
        f.push_back(int_field("sampler_steps", &Config::sampler_steps, 1, kBig));
        f.push_back(int_field("diffusion_steps", &Config::diffusion_steps, 1, kBig));
        f.push_back(real_field("beta_start", &Config::beta_start, 0.0, 1.0, true));
        f.push_back(real_field("beta_end", &Config::beta_end, 0.0, 1.0, true));
        f.push_back(real_field("lambda_info", &Config::lambda_info, 0.0, 1e6));
        f.push_back(real_field("lambda_rec", &Config::lambda_rec, 0.0, 1e6));
        f.push_back(real_field("std_floor", &Config::std_floor, 0.0, 1e6, true));
        f.push_back({"variant",
                     [](Config& c, const std::string& v) {
                         try {
                             c.variant = parse_variant(v);
                         } catch (const ParameterError& e) {
                             throw ValidationError("variant", e.what());
                         }
                     },
                     [](const Config& c) { return to_string(c.variant); }});
        f.push_back({"manifold_norm",
                     [](Config& c, const std::string& v) {
                         try {
                             c.manifold_norm = parse_manifold_norm(v);
                         } catch (const ParameterError& e) {
                             throw ValidationError("manifold_norm", e.what());
                         }
                     },
                     [](const Config& c) { return to_string(c.manifold_norm); }});
        f.push_back({"stage2_warm_start",
                     [](Config& c, const std::string& v) {
                         c.stage2_warm_start = to_bool("stage2_warm_start", v);
                     },
                     [](const Config& c) { return std::string(c.stage2_warm_start ? "true" : "false"); }});
        f.push_back(int_field("codec_iterations", &Config::codec_iterations, 0, kBig));
        f.push_back(int_field("codec_batch_size", &Config::codec_batch_size, 1, 4096));
        f.push_back(real_field("codec_learning_rate", &Config::codec_learning_rate, 0.0, 1.0, true));
        f.push_back(real_field("codec_kl_weight", &Config::codec_kl_weight, 0.0, 1e6));
        return f;
    }();
    return fields;
}

void check_consistency(const Config& c) {
    if (c.beta_start > c.beta_end) throw ValidationError("beta_start", "must not exceed beta_end");
    if (c.beta_end >= 1.0) throw ValidationError("beta_end", "must be below 1");
    if (c.sampler_steps > c.diffusion_steps)
        throw ValidationError("sampler_steps", "must not exceed diffusion_steps");
}

}  // namespace

void set_config_value(Config& config, const std::string& key, const std::string& value) {
    for (const auto& f : schema()) {
        if (f.key == key) {
            f.set(config, value);
            return;
        }
    }
    throw ValidationError(key, "unknown key");
}

Config parse_config_text(const std::string& text) {
    Config config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(line, "line " + std::to_string(lineno) + " is not 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ValidationError(key, "given more than once");
        set_config_value(config, key, value);
    }
    check_consistency(config);
    return config;
}

Config parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string write_config(const Config& config) {
    std::string out;
    for (const auto& f : schema()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

void save_config(const Config& config, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path.string());
    out << write_config(config);
}

}  // namespace diffmac
