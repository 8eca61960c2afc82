#pragma once

#include "diffmac/image.hpp"

namespace diffmac {

class IdentityEmbedder;

inline constexpr double kPsnrCap = 100.0;

/// PSNR in dB with the [-1, 1] range mapped to peak 1. Identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// computed on BT.601 luma with K1 = 0.01, K2 = 0.03.
double ssim(const Image& a, const Image& b);

/// Luma on the [0, 1] scale, row-major H x W.
std::vector<double> luma(const Image& img);

/// Cosine similarity of the identity embeddings of `a` and `b`.
double id_similarity(const IdentityEmbedder& embedder, const Image& a, const Image& b);

}  // namespace diffmac
