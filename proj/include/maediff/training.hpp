// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maediff/checkpoint.hpp"
#include "maediff/diffusion.hpp"
#include "maediff/simplex.hpp"
#include "maediff/unet.hpp"

namespace maediff {

struct TrainConfig {
    int epochs = 1600;
    int max_steps = 0; // optimizer-step cap; 0 derives epochs * ceil(n/batch)
    int batch_size = 32;
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int t_min = 1;
    int t_max = 1000;
    int val_every = 50;          // steps between validation sweeps
    int val_pairs_per_image = 4; // fixed seeded (t, patch) pairs per image
    int log_every = 10;
    int workers = 2;
};

class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(nn::ParamRegistry& reg);

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    double lr() const { return lr_; }

    // Moment tensors in registry order; exposed for checkpointing.
    std::vector<Tensor>& m_state() { return m_; }
    std::vector<Tensor>& v_state() { return v_; }
    void ensure_state(const nn::ParamRegistry& reg);

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// One optimizer update on a batch of healthy images (Algorithm: per sample
// draw t, a simplex field, and a patch; compose the partly-noised image;
// predict x0; masked-l1 loss averaged over the batch). Returns the loss.
// Throws NumericError with (step, t, patch) diagnostics when non-finite.
double train_step(DenoiserModel& model, Adam& adam, const std::vector<const Tensor*>& batch,
                  const NoiseSchedule& sched, const SimplexParams& noise_base, const TrainConfig& cfg,
                  uint64_t run_seed, int64_t global_step);

// Mean masked-l1 over a fixed seeded sweep of (t, patch) pairs on healthy
// validation images; the model-selection criterion.
double validation_criterion(DenoiserModel& model, const std::vector<Tensor>& val_images, const NoiseSchedule& sched,
                            const SimplexParams& noise_base, const TrainConfig& cfg, uint64_t run_seed);

struct FitResult {
    int64_t steps_run = 0;
    double best_val = 0.0;
    int64_t best_step = -1;
    std::vector<double> losses; // one entry per optimizer step
    std::string best_checkpoint_path;
    std::string last_checkpoint_path;
};

// Trains up to the step budget, validating on the configured cadence and
// retaining the argmin-validation checkpoint. `out_dir` may be empty (no
// files written; the best parameters are still restored into `model` at
// return). `meta_config_json` is embedded in written checkpoints.
// `log` receives line-delimited JSON progress records; may be null.
FitResult fit(DenoiserModel& model, Adam& adam, const std::vector<Tensor>& train_images,
              const std::vector<Tensor>& val_images, const NoiseSchedule& sched, const SimplexParams& noise_base,
              const TrainConfig& cfg, uint64_t run_seed, const std::string& out_dir,
              const std::string& meta_config_json, std::function<void(const std::string&)> log,
              int64_t start_step = 0);

// Checkpoint helpers shared by fit() and the CLI: parameters plus optimizer
// state plus a meta JSON {"step":..., "adam_step":..., "config": <resolved>}.
Checkpoint make_training_checkpoint(const DenoiserModel& model, Adam* adam, int64_t global_step,
                                    const std::string& meta_config_json);
int64_t restore_training_checkpoint(const Checkpoint& ckpt, DenoiserModel& model, Adam* adam);

} // namespace maediff
