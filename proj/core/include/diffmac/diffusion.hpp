#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace diffmac {

/// Linear-beta DDPM schedule, 1-indexed: t = 1..steps.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> betas);

    int steps() const noexcept { return static_cast<int>(betas_.size()); }
    double beta(int t) const { return betas_.at(index(t)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const { return alpha_bars_.at(index(t)); }

    const std::vector<double>& betas() const noexcept { return betas_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

private:
    std::size_t index(int t) const;

    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// sqrt(abar_t) z + sqrt(1 - abar_t) eps, one t for the whole tensor.
torch::Tensor q_sample(const torch::Tensor& z, int t, const torch::Tensor& eps,
                       const NoiseSchedule& sched);
/// Per-sample timesteps: `t` is an int64 [B] tensor.
torch::Tensor q_sample(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& sched);

/// Explicit (sqrt(abar), sqrt(1 - abar)) form, used when abar is supplied directly.
torch::Tensor q_sample_with(const torch::Tensor& z, double alpha_bar, const torch::Tensor& eps);

/// Mean squared error over all elements.
torch::Tensor ldm_loss(const torch::Tensor& eps_pred, const torch::Tensor& eps);

/// z_t / sqrt(abar_t) - sqrt(1 - abar_t) eps_pred / sqrt(abar_t).
torch::Tensor predict_z0(const torch::Tensor& z_t, const torch::Tensor& eps_pred, int t,
                         const NoiseSchedule& sched);
torch::Tensor predict_z0_with(const torch::Tensor& z_t, const torch::Tensor& eps_pred,
                              double alpha_bar);

/// floor(k T / n) for k = 1..n: strictly increasing, ends at T, starts at floor(T / n).
std::vector<int> spaced_timesteps(int steps, int n);

/// eps prediction for a batch of latents at one timestep.
using Denoiser = std::function<torch::Tensor(const torch::Tensor& z_t, int t)>;

/// Ancestral DDPM sampling over spaced_timesteps(sched.steps(), n_steps). The sub-schedule
/// uses abar'_k = abar_{t_k}, abar'_0 = 1 and posterior variance
/// beta'_k (1 - abar'_{k-1}) / (1 - abar'_k). No noise is added on the final step.
torch::Tensor ddpm_sample(const Denoiser& denoiser, torch::IntArrayRef shape,
                          const NoiseSchedule& sched, int n_steps, std::uint64_t seed);

}  // namespace diffmac
