// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "maediff/tensor.hpp"

namespace maediff {

struct DiffusionConfig {
    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 2e-2;
    int t_test = 500;
};

// Precomputed variance schedule. Arrays are 0-indexed internally; the public
// operations take 1-indexed timesteps t in [1, T], with t=0 reserved to mean
// clean data. Everything is kept in double: the cumulative product of ~1000
// near-one factors loses digits in float32.
class NoiseSchedule {
public:
    int T() const { return static_cast<int>(betas_.size()); }
    double beta(int t) const { check_step(t); return betas_[static_cast<size_t>(t - 1)]; }
    double alpha(int t) const { check_step(t); return alphas_[static_cast<size_t>(t - 1)]; }
    double alpha_bar(int t) const { check_step(t); return alpha_bars_[static_cast<size_t>(t - 1)]; }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

    friend NoiseSchedule build_linear_schedule(const DiffusionConfig& cfg);

private:
    void check_step(int t) const;
    std::vector<double> betas_, alphas_, alpha_bars_;
};

// betas[t] = beta_min + (t-1)/(T-1) * (beta_max - beta_min), t = 1..T.
// T = 1 degenerates to betas = [beta_min].
NoiseSchedule build_linear_schedule(const DiffusionConfig& cfg);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched);

// mu = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps0) / sqrt(alpha_t)
Tensor posterior_mean(const Tensor& x_t, const Tensor& eps0, int t, const NoiseSchedule& sched);

// (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t; t = 1 returns beta_1.
double posterior_variance(int t, const NoiseSchedule& sched);

} // namespace maediff
