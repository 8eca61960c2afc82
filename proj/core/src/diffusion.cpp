#include "diffmac/diffusion.hpp"

#include <cmath>
#include <string>

#include "diffmac/errors.hpp"

namespace diffmac {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw ParameterError("noise schedule needs at least one step");
    alpha_bars_.reserve(betas_.size());
    double prod = 1.0;
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) throw ParameterError("betas must lie in (0, 1)");
        prod *= 1.0 - b;
        alpha_bars_.push_back(prod);
    }
}

std::size_t NoiseSchedule::index(int t) const {
    if (t < 1 || t > steps())
        throw ParameterError("timestep " + std::to_string(t) + " outside [1, " +
                             std::to_string(steps()) + "]");
    return static_cast<std::size_t>(t - 1);
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ParameterError("schedule needs T >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ParameterError("need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
    }
    return NoiseSchedule(std::move(betas));
}

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": tensor shapes differ");
}

}  // namespace

torch::Tensor q_sample_with(const torch::Tensor& z, double alpha_bar, const torch::Tensor& eps) {
    require_same_shape(z, eps, "q_sample");
    return std::sqrt(alpha_bar) * z + std::sqrt(1.0 - alpha_bar) * eps;
}

torch::Tensor q_sample(const torch::Tensor& z, int t, const torch::Tensor& eps,
                       const NoiseSchedule& sched) {
    return q_sample_with(z, sched.alpha_bar(t), eps);
}

torch::Tensor q_sample(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& sched) {
    require_same_shape(z, eps, "q_sample");
    if (t.dim() != 1 || t.size(0) != z.size(0))
        throw ShapeError("q_sample: need one timestep per batch element");
    auto ts = t.to(torch::kInt64).contiguous();
    std::vector<double> a(static_cast<std::size_t>(ts.size(0))), b(a.size());
    for (int64_t i = 0; i < ts.size(0); ++i) {
        const double abar = sched.alpha_bar(static_cast<int>(ts[i].item<int64_t>()));
        a[static_cast<std::size_t>(i)] = std::sqrt(abar);
        b[static_cast<std::size_t>(i)] = std::sqrt(1.0 - abar);
    }
    std::vector<int64_t> bshape(static_cast<std::size_t>(z.dim()), 1);
    bshape[0] = z.size(0);
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto ca = torch::tensor(a, opts).reshape(bshape).to(z.scalar_type());
    auto cb = torch::tensor(b, opts).reshape(bshape).to(z.scalar_type());
    return ca * z + cb * eps;
}

torch::Tensor ldm_loss(const torch::Tensor& eps_pred, const torch::Tensor& eps) {
    require_same_shape(eps_pred, eps, "ldm_loss");
    return (eps_pred - eps).pow(2).mean();
}

torch::Tensor predict_z0_with(const torch::Tensor& z_t, const torch::Tensor& eps_pred,
                              double alpha_bar) {
    require_same_shape(z_t, eps_pred, "predict_z0");
    if (!(alpha_bar > 0.0)) throw DomainError("predict_z0 is singular at alpha_bar = 0");
    const double root = std::sqrt(alpha_bar);
    return z_t / root - std::sqrt(1.0 - alpha_bar) * eps_pred / root;
}

torch::Tensor predict_z0(const torch::Tensor& z_t, const torch::Tensor& eps_pred, int t,
                         const NoiseSchedule& sched) {
    return predict_z0_with(z_t, eps_pred, sched.alpha_bar(t));
}

std::vector<int> spaced_timesteps(int steps, int n) {
    if (steps < 1) throw ParameterError("need T >= 1");
    if (n < 1 || n > steps)
        throw ParameterError("spaced sampling needs 1 <= n <= T, got n = " + std::to_string(n));
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int k = 1; k <= n; ++k)
        out[static_cast<std::size_t>(k - 1)] =
            static_cast<int>((static_cast<int64_t>(k) * steps) / n);
    return out;
}

torch::Tensor ddpm_sample(const Denoiser& denoiser, torch::IntArrayRef shape,
                          const NoiseSchedule& sched, int n_steps, std::uint64_t seed) {
    const auto ts = spaced_timesteps(sched.steps(), n_steps);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    torch::NoGradGuard no_grad;
    auto z = torch::randn(shape, gen, torch::kFloat32);
    for (std::size_t k = ts.size(); k-- > 0;) {
        const int t = ts[k];
        const double abar = sched.alpha_bar(t);
        const double abar_prev = k == 0 ? 1.0 : sched.alpha_bar(ts[k - 1]);
        const double beta = 1.0 - abar / abar_prev;

        auto eps = denoiser(z, t);
        auto z0 = predict_z0_with(z, eps, abar);
        const double coef_z0 = std::sqrt(abar_prev) * beta / (1.0 - abar);
        const double coef_zt = std::sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar);
        z = coef_z0 * z0 + coef_zt * z;
        if (k > 0) {
            const double var = beta * (1.0 - abar_prev) / (1.0 - abar);
            z = z + std::sqrt(var) * torch::randn(shape, gen, torch::kFloat32);
        }
    }
    return z;
}

}  // namespace diffmac
