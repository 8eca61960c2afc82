#include "diffmac/tensor_bridge.hpp"

#include "diffmac/errors.hpp"

namespace diffmac {

torch::Tensor to_tensor(const Image& img) {
    auto hwc = torch::from_blob(const_cast<float*>(img.pixels().data()),
                                {img.height(), img.width(), Image::kChannels}, torch::kFloat32);
    return hwc.permute({2, 0, 1}).contiguous().clone();
}

torch::Tensor to_batch(std::span<const Image> images) {
    if (images.empty()) throw ShapeError("cannot batch an empty image list");
    std::vector<torch::Tensor> parts;
    parts.reserve(images.size());
    for (const auto& img : images) {
        if (!img.same_shape(images.front())) throw ShapeError("batched images differ in shape");
        parts.push_back(to_tensor(img));
    }
    return torch::stack(parts);
}

Image to_image(const torch::Tensor& chw) {
    auto t = chw;
    if (t.dim() == 4 && t.size(0) == 1) t = t.squeeze(0);
    if (t.dim() != 3 || t.size(0) != Image::kChannels)
        throw ShapeError("expected a 3xHxW tensor, got " + std::to_string(t.dim()) + "-d");
    auto hwc = t.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
    const auto h = static_cast<int>(hwc.size(0));
    const auto w = static_cast<int>(hwc.size(1));
    const float* data = hwc.data_ptr<float>();
    return Image(h, w, std::vector<float>(data, data + hwc.numel()));
}

std::vector<Image> to_images(const torch::Tensor& batch) {
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(batch.size(0)));
    for (int64_t i = 0; i < batch.size(0); ++i) out.push_back(to_image(batch[i]));
    return out;
}

}  // namespace diffmac
