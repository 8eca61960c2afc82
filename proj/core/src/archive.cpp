#include "diffmac/archive.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diffmac/errors.hpp"

namespace diffmac {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'M', 'A', 'C', 'A', 'R', 'C', 'H'};

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("truncated archive");
    return value;
}

std::string get_string(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw IoError("truncated archive");
    return s;
}

torch::Tensor as_f32(const torch::Tensor& t) {
    return t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
}

}  // namespace

const std::string& TensorArchive::meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end()) throw ConfigError("archive has no metadata key '" + key + "'");
    return it->second;
}

const torch::Tensor& TensorArchive::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("archive has no tensor '" + name + "'");
    return it->second;
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write archive " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, TensorArchive::kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.metadata.size()));
    for (const auto& [k, v] : archive.metadata) {
        put_string(out, k);
        put_string(out, v);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& [name, tensor] : archive.tensors) {
        const auto t = as_f32(tensor);
        put_string(out, name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.sizes()) put<std::int64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing archive " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read archive " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw IoError(path.string() + " is not a diffmac archive");
    const auto version = get<std::uint32_t>(in);
    if (version != TensorArchive::kVersion)
        throw IoError("unsupported archive version " + std::to_string(version));
    TensorArchive archive;
    const auto n_meta = get<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        auto k = get_string(in);
        archive.metadata[k] = get_string(in);
    }
    const auto n_tensors = get<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        auto name = get_string(in);
        const auto ndim = get<std::uint32_t>(in);
        std::vector<std::int64_t> dims(ndim);
        for (auto& d : dims) d = get<std::int64_t>(in);
        auto t = torch::empty(dims, torch::kFloat32);
        in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) throw IoError("truncated tensor '" + name + "' in " + path.string());
        archive.tensors[name] = t;
    }
    return archive;
}

std::string fingerprint(const std::map<std::string, torch::Tensor>& tensors) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, tensor] : tensors) {
        const auto t = as_f32(tensor);
        mix(name.data(), name.size());
        for (auto d : t.sizes()) mix(&d, sizeof(d));
        mix(t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void export_module(const torch::nn::Module& module, const std::string& prefix,
                   std::map<std::string, torch::Tensor>& out) {
    for (const auto& p : module.named_parameters(true)) out[prefix + p.key()] = as_f32(p.value()).clone();
    for (const auto& b : module.named_buffers(true)) out[prefix + b.key()] = as_f32(b.value()).clone();
}

void import_module(torch::nn::Module& module, const std::string& prefix,
                   const std::map<std::string, torch::Tensor>& tensors) {
    torch::NoGradGuard no_grad;
    auto assign = [&](const std::string& key, torch::Tensor& target) {
        auto it = tensors.find(prefix + key);
        if (it == tensors.end()) throw ConfigError("checkpoint is missing tensor '" + prefix + key + "'");
        if (it->second.sizes() != target.sizes()) {
            std::ostringstream msg;
            msg << "tensor '" << prefix << key << "' has shape " << it->second.sizes()
                << ", expected " << target.sizes();
            throw ConfigError(msg.str());
        }
        target.copy_(it->second);
    };
    for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
    for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

}  // namespace diffmac
