#include "diffmac/layers.hpp"

#include <algorithm>

namespace diffmac::nn {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Conv2d conv1x1(int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
}

torch::nn::GroupNorm group_norm(int64_t channels) {
    int64_t groups = std::min<int64_t>(8, channels);
    while (channels % groups != 0) --groups;
    return torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, channels).eps(1e-5));
}

void zero_(torch::nn::Conv2d& conv) {
    torch::NoGradGuard no_grad;
    conv->weight.zero_();
    if (conv->bias.defined()) conv->bias.zero_();
}

ResBlockImpl::ResBlockImpl(int64_t in, int64_t out, int64_t time_dim) {
    norm1_ = register_module("norm1", group_norm(in));
    conv1_ = register_module("conv1", conv3x3(in, out));
    norm2_ = register_module("norm2", group_norm(out));
    conv2_ = register_module("conv2", conv3x3(out, out));
    if (in != out) skip_ = register_module("skip", conv1x1(in, out));
    if (time_dim > 0) time_proj_ = register_module("time_proj", torch::nn::Linear(time_dim, out));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
    auto h = conv1_(F::silu(norm1_(x)));
    if (time_proj_ && temb.defined()) h = h + time_proj_(F::silu(temb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2_(F::silu(norm2_(h)));
    return (skip_ ? skip_(x) : x) + h;
}

DownsampleImpl::DownsampleImpl(int64_t channels) {
    conv_ = register_module("conv", conv3x3(channels, channels, 2));
}

torch::Tensor DownsampleImpl::forward(const torch::Tensor& x) { return conv_(x); }

UpsampleImpl::UpsampleImpl(int64_t channels) {
    conv_ = register_module("conv", conv3x3(channels, channels));
}

torch::Tensor UpsampleImpl::forward(const torch::Tensor& x) {
    auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                    .scale_factor(std::vector<double>{2.0, 2.0})
                                    .mode(torch::kNearest));
    return conv_(up);
}

}  // namespace diffmac::nn
