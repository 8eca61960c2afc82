#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace diffmac {

/// Versioned container of named float32 tensors plus string metadata.
///
/// Layout (little endian):
///   "DMACARCH" | u32 version | u32 n_meta | n_meta x (str key, str value)
///   | u32 n_tensors | n_tensors x (str name, u32 ndim, i64 dims[ndim], f32 data[])
/// where str is u32 length followed by bytes. Entries are written in key order,
/// so equal contents always serialize to equal bytes.
struct TensorArchive {
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> metadata;
    std::map<std::string, torch::Tensor> tensors;

    const std::string& meta(const std::string& key) const;
    const torch::Tensor& tensor(const std::string& name) const;
};

void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

/// FNV-1a over tensor names, shapes and float32 bytes, as 16 hex digits.
std::string fingerprint(const std::map<std::string, torch::Tensor>& tensors);

/// Parameters and buffers of `module`, keyed `prefix + name`.
void export_module(const torch::nn::Module& module, const std::string& prefix,
                   std::map<std::string, torch::Tensor>& out);

/// Copy matching tensors into `module`. Missing names or shape mismatches throw ConfigError.
void import_module(torch::nn::Module& module, const std::string& prefix,
                   const std::map<std::string, torch::Tensor>& tensors);

}  // namespace diffmac
