#pragma once

#include <torch/torch.h>

namespace diffmac::nn {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1);
torch::nn::Conv2d conv1x1(int64_t in, int64_t out);
torch::nn::GroupNorm group_norm(int64_t channels);

/// Set weight and bias of `conv` to zero.
void zero_(torch::nn::Conv2d& conv);

/// GN -> SiLU -> conv -> (+ time projection) -> GN -> SiLU -> conv, plus skip.
class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(int64_t in, int64_t out, int64_t time_dim = 0);

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb = {});

private:
    torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
    torch::nn::Linear time_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Stride-2 3x3 convolution.
class DownsampleImpl : public torch::nn::Module {
public:
    explicit DownsampleImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Downsample);

/// Nearest x2 followed by a 3x3 convolution.
class UpsampleImpl : public torch::nn::Module {
public:
    explicit UpsampleImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Upsample);

}  // namespace diffmac::nn
