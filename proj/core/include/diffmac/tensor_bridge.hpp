#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "diffmac/image.hpp"

namespace diffmac {

/// HWC image -> float32 CHW tensor.
torch::Tensor to_tensor(const Image& img);

/// Stack images into a float32 [B, 3, H, W] batch. All images must share one shape.
torch::Tensor to_batch(std::span<const Image> images);

/// CHW (or 1xCxHxW) tensor -> HWC image. Values are copied as-is, not clipped.
Image to_image(const torch::Tensor& chw);

std::vector<Image> to_images(const torch::Tensor& batch);

}  // namespace diffmac
