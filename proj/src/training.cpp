// SPDX-License-Identifier: Apache-2.0
#include "maediff/training.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

namespace maediff {

void Adam::ensure_state(const nn::ParamRegistry& reg) {
    if (m_.size() == reg.params().size()) return;
    m_.clear();
    v_.clear();
    for (const nn::Parameter* p : reg.params()) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step(nn::ParamRegistry& reg) {
    ensure_state(reg);
    ++t_;
    const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
    const float corr1 = static_cast<float>(1.0 - std::pow(b1_, static_cast<double>(t_)));
    const float corr2 = static_cast<float>(1.0 - std::pow(b2_, static_cast<double>(t_)));
    const float lr = static_cast<float>(lr_), eps = static_cast<float>(eps_);
    for (size_t i = 0; i < reg.params().size(); ++i) {
        nn::Parameter& p = *reg.params()[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            const float g = p.grad[j];
            m[j] = b1 * m[j] + (1.0f - b1) * g;
            v[j] = b2 * v[j] + (1.0f - b2) * g * g;
            const float mhat = m[j] / corr1;
            const float vhat = v[j] / corr2;
            p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

struct SampleDraw {
    int t;
    int64_t patch;
    uint64_t noise_seed;
};

SampleDraw draw_sample(const TrainConfig& cfg, const PatchPlan& plan, uint64_t run_seed, int64_t sample_index) {
    SampleDraw d;
    SplitMix64 trng(derive_seed(run_seed, seed_tag::kTimestep, static_cast<uint64_t>(sample_index)));
    d.t = static_cast<int>(trng.uniform_int(cfg.t_min, cfg.t_max));
    SplitMix64 prng(derive_seed(run_seed, seed_tag::kPatch, static_cast<uint64_t>(sample_index)));
    d.patch = prng.uniform_int(0, plan.num_patches() - 1);
    d.noise_seed = derive_seed(run_seed, seed_tag::kNoise, static_cast<uint64_t>(sample_index));
    return d;
}

double masked_l1_value(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    double acc = 0.0, msum = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (mask[i] != 0.0f) {
            acc += std::fabs(static_cast<double>(pred[i]) - target[i]);
            msum += 1.0;
        }
    }
    return acc / msum;
}

} // namespace

double train_step(DenoiserModel& model, Adam& adam, const std::vector<const Tensor*>& batch,
                  const NoiseSchedule& sched, const SimplexParams& noise_base, const TrainConfig& cfg,
                  uint64_t run_seed, int64_t global_step) {
    const PatchPlan& plan = model.plan();
    const int64_t B = static_cast<int64_t>(batch.size());
    if (B == 0) throw ConfigError("train_step: empty batch");

    struct PerSample {
        std::unique_ptr<ag::Graph> graph;
        std::unique_ptr<nn::ParamBinder> binder;
        double loss = 0.0;
        SampleDraw draw{};
    };
    std::vector<PerSample> samples(static_cast<size_t>(B));

    auto run_sample = [&](int64_t i) {
        PerSample& ps = samples[static_cast<size_t>(i)];
        const int64_t sample_index = global_step * B + i;
        ps.draw = draw_sample(cfg, plan, run_seed, sample_index);
        SimplexParams np = noise_base;
        np.seed = ps.draw.noise_seed;
        const Tensor& x0 = *batch[static_cast<size_t>(i)];
        Tensor eps = fractal_field(plan.H, plan.W, np);
        Tensor x_t = forward_diffuse(x0, eps, ps.draw.t, sched);
        PatchMask m = make_mask(plan, ps.draw.patch);
        Tensor x_tilde = compose_partial(x_t, x0, m);

        ps.graph = std::make_unique<ag::Graph>(true);
        ps.binder = std::make_unique<nn::ParamBinder>(*ps.graph);
        nn::Var pred = model.forward(*ps.binder, x_tilde, ps.draw.t, ps.draw.patch);
        nn::Var loss = ag::masked_l1(pred, x0.reshaped(pred.shape()), m.mask.reshaped(pred.shape()));
        ps.loss = loss.val()[0];
        ps.graph->backward(loss);
    };

    const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(B)));
    if (workers == 1) {
        for (int64_t i = 0; i < B; ++i) run_sample(i);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (int64_t i = w; i < B; i += workers) run_sample(i);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    // Merge gradients in sample order: bit-identical for any worker count.
    model.registry().zero_grads();
    double loss_sum = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        PerSample& ps = samples[static_cast<size_t>(i)];
        if (!std::isfinite(ps.loss)) {
            throw NumericError("non-finite training loss at step " + std::to_string(global_step) + " (sample " +
                               std::to_string(i) + ", t=" + std::to_string(ps.draw.t) +
                               ", patch=" + std::to_string(ps.draw.patch) + ")");
        }
        ps.binder->accumulate_grads(1.0 / static_cast<double>(B));
        loss_sum += ps.loss;
        ps.graph.reset();
    }
    adam.step(model.registry());
    return loss_sum / static_cast<double>(B);
}

double validation_criterion(DenoiserModel& model, const std::vector<Tensor>& val_images, const NoiseSchedule& sched,
                            const SimplexParams& noise_base, const TrainConfig& cfg, uint64_t run_seed) {
    if (val_images.empty()) throw ConfigError("validation set is empty");
    const PatchPlan& plan = model.plan();
    double acc = 0.0;
    int64_t count = 0;
    for (size_t v = 0; v < val_images.size(); ++v) {
        for (int j = 0; j < cfg.val_pairs_per_image; ++j) {
            const uint64_t pair_index = static_cast<uint64_t>(v) * 1000003ULL + static_cast<uint64_t>(j);
            SplitMix64 rng(derive_seed(run_seed, seed_tag::kValPair, pair_index));
            const int t = static_cast<int>(rng.uniform_int(cfg.t_min, cfg.t_max));
            const int64_t k = rng.uniform_int(0, plan.num_patches() - 1);
            SimplexParams np = noise_base;
            np.seed = derive_seed(run_seed, seed_tag::kValNoise, pair_index);
            const Tensor& x0 = val_images[v];
            Tensor eps = fractal_field(plan.H, plan.W, np);
            Tensor x_t = forward_diffuse(x0, eps, t, sched);
            PatchMask m = make_mask(plan, k);
            Tensor x_tilde = compose_partial(x_t, x0, m);
            Tensor pred = model.predict_x0(x_tilde, k, t);
            double l = masked_l1_value(pred, x0, m.mask);
            if (!std::isfinite(l)) {
                throw NumericError("non-finite validation loss (image " + std::to_string(v) + ", t=" +
                                   std::to_string(t) + ", patch=" + std::to_string(k) + ")");
            }
            acc += l;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

Checkpoint make_training_checkpoint(const DenoiserModel& model, Adam* adam, int64_t global_step,
                                    const std::string& meta_config_json) {
    Checkpoint ckpt;
    nlohmann::json meta;
    meta["step"] = global_step;
    if (!meta_config_json.empty()) meta["config"] = nlohmann::json::parse(meta_config_json);
    store_registry(ckpt, model.registry());
    if (adam) {
        adam->ensure_state(model.registry());
        meta["adam_step"] = adam->step_count();
        const auto& params = model.registry().params();
        for (size_t i = 0; i < params.size(); ++i) {
            ckpt.tensors.emplace_back("optim.m." + params[i]->name, adam->m_state()[i]);
            ckpt.tensors.emplace_back("optim.v." + params[i]->name, adam->v_state()[i]);
        }
    }
    ckpt.meta_json = meta.dump();
    return ckpt;
}

int64_t restore_training_checkpoint(const Checkpoint& ckpt, DenoiserModel& model, Adam* adam) {
    load_registry(ckpt, model.registry());
    nlohmann::json meta = ckpt.meta_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(ckpt.meta_json);
    if (adam) {
        adam->ensure_state(model.registry());
        const auto& params = model.registry().params();
        bool have_state = true;
        for (size_t i = 0; i < params.size() && have_state; ++i) {
            have_state = ckpt.find("optim.m." + params[i]->name) != nullptr;
        }
        if (have_state) {
            for (size_t i = 0; i < params.size(); ++i) {
                adam->m_state()[i] = *ckpt.find("optim.m." + params[i]->name);
                adam->v_state()[i] = *ckpt.find("optim.v." + params[i]->name);
            }
            adam->set_step_count(meta.value("adam_step", int64_t{0}));
        }
    }
    return meta.value("step", int64_t{0});
}

FitResult fit(DenoiserModel& model, Adam& adam, const std::vector<Tensor>& train_images,
              const std::vector<Tensor>& val_images, const NoiseSchedule& sched, const SimplexParams& noise_base,
              const TrainConfig& cfg, uint64_t run_seed, const std::string& out_dir,
              const std::string& meta_config_json, std::function<void(const std::string&)> log, int64_t start_step) {
    if (train_images.empty()) throw ConfigError("training set is empty");
    if (val_images.empty()) throw ConfigError("validation set is empty");
    const int64_t n = static_cast<int64_t>(train_images.size());
    const int64_t B = cfg.batch_size;
    if (B < 1) throw ConfigError("batch_size must be >= 1");
    const int64_t steps_per_epoch = (n + B - 1) / B;
    const int64_t total_steps =
        cfg.max_steps > 0 ? cfg.max_steps : static_cast<int64_t>(cfg.epochs) * steps_per_epoch;

    FitResult result;
    result.best_val = std::numeric_limits<double>::infinity();

    namespace fs = std::filesystem;
    const bool write_files = !out_dir.empty();
    if (write_files) fs::create_directories(out_dir);
    const std::string best_path = write_files ? (fs::path(out_dir) / "checkpoint_best.maeckpt").string() : "";
    const std::string last_path = write_files ? (fs::path(out_dir) / "checkpoint_last.maeckpt").string() : "";

    // In-memory snapshot of the best parameters, restored at return.
    std::vector<Tensor> best_params;
    auto snapshot_best = [&]() {
        best_params.clear();
        for (const nn::Parameter* p : model.registry().params()) best_params.push_back(p->value);
    };

    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed_s = [&]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };
    auto emit = [&](int64_t step, double loss, double val, bool have_val) {
        if (!log) return;
        std::ostringstream os;
        os << "{\"step\":" << step << ",\"loss\":" << loss;
        if (have_val) os << ",\"val\":" << val;
        os << ",\"elapsed_s\":" << elapsed_s() << "}";
        log(os.str());
    };

    auto validate_and_track = [&](int64_t step) {
        double val = validation_criterion(model, val_images, sched, noise_base, cfg, run_seed);
        if (val < result.best_val) {
            result.best_val = val;
            result.best_step = step;
            snapshot_best();
            if (write_files) {
                save_checkpoint(best_path, make_training_checkpoint(model, &adam, step, meta_config_json));
            }
        }
        return val;
    };

    if (total_steps == 0) {
        // No training requested: the initialized model is the best checkpoint.
        result.best_val = validation_criterion(model, val_images, sched, noise_base, cfg, run_seed);
        result.best_step = start_step;
        snapshot_best();
        if (write_files) {
            save_checkpoint(best_path, make_training_checkpoint(model, &adam, start_step, meta_config_json));
            save_checkpoint(last_path, make_training_checkpoint(model, &adam, start_step, meta_config_json));
            result.best_checkpoint_path = best_path;
            result.last_checkpoint_path = last_path;
        }
        return result;
    }

    for (int64_t step = start_step; step < total_steps; ++step) {
        // Batch composition is a pure function of (seed, step).
        SplitMix64 brng(derive_seed(run_seed, seed_tag::kBatch, static_cast<uint64_t>(step)));
        std::vector<const Tensor*> batch;
        batch.reserve(static_cast<size_t>(B));
        for (int64_t j = 0; j < B; ++j) {
            batch.push_back(&train_images[static_cast<size_t>(brng.uniform_int(0, n - 1))]);
        }
        double loss = train_step(model, adam, batch, sched, noise_base, cfg, run_seed, step);
        result.losses.push_back(loss);
        ++result.steps_run;

        const bool is_last = step + 1 == total_steps;
        const bool do_val = is_last || (cfg.val_every > 0 && (step + 1) % cfg.val_every == 0);
        double val = 0.0;
        if (do_val) val = validate_and_track(step + 1);
        if ((cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) || is_last || do_val) {
            emit(step + 1, loss, val, do_val);
        }
    }

    if (write_files) {
        save_checkpoint(last_path, make_training_checkpoint(model, &adam, total_steps, meta_config_json));
        result.last_checkpoint_path = last_path;
        result.best_checkpoint_path = best_path;
    }

    // Leave the model at its best-validation parameters.
    if (!best_params.empty()) {
        const auto& params = model.registry().params();
        for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    }
    return result;
}

} // namespace maediff
