// SPDX-License-Identifier: Apache-2.0
#include "maediff/diffusion.hpp"

#include <cmath>
#include <string>

namespace maediff {

void NoiseSchedule::check_step(int t) const {
    if (t < 1 || t > T()) {
        throw NumericError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T()) + "]");
    }
}

NoiseSchedule build_linear_schedule(const DiffusionConfig& cfg) {
    if (cfg.T < 1) throw ConfigError("diffusion.T must be >= 1, got " + std::to_string(cfg.T));
    if (!(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_max && cfg.beta_max < 1.0)) {
        throw ConfigError("diffusion betas must satisfy 0 < beta_min <= beta_max < 1");
    }
    if (cfg.t_test < 1 || cfg.t_test > cfg.T) {
        throw ConfigError("diffusion.t_test must lie in [1, T]");
    }
    NoiseSchedule s;
    s.betas_.resize(static_cast<size_t>(cfg.T));
    s.alphas_.resize(static_cast<size_t>(cfg.T));
    s.alpha_bars_.resize(static_cast<size_t>(cfg.T));
    double prod = 1.0;
    for (int t = 1; t <= cfg.T; ++t) {
        double beta = cfg.T == 1
                          ? cfg.beta_min
                          : cfg.beta_min + (static_cast<double>(t - 1) / static_cast<double>(cfg.T - 1)) *
                                               (cfg.beta_max - cfg.beta_min);
        double alpha = 1.0 - beta;
        prod *= alpha;
        s.betas_[static_cast<size_t>(t - 1)] = beta;
        s.alphas_[static_cast<size_t>(t - 1)] = alpha;
        s.alpha_bars_[static_cast<size_t>(t - 1)] = prod;
    }
    return s;
}

Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    double ab = sched.alpha_bar(t);
    return axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

Tensor posterior_mean(const Tensor& x_t, const Tensor& eps0, int t, const NoiseSchedule& sched) {
    double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    double noise_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    return axpby(inv_sqrt_alpha, x_t, -inv_sqrt_alpha * noise_coef, eps0);
}

double posterior_variance(int t, const NoiseSchedule& sched) {
    if (t == 1) return sched.beta(1);
    return (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t)) * sched.beta(t);
}

} // namespace maediff
