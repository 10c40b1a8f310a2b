// SPDX-License-Identifier: Apache-2.0
#include "maediff/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "maediff/panel.hpp"

namespace maediff::cli {

namespace fs = std::filesystem;

DenoiserModel build_model(const RunConfig& cfg) {
    return DenoiserModel(cfg.unet, cfg.mae, plan_from_config(cfg), derive_seed(cfg.seed, seed_tag::kInit));
}

DenoiserModel load_model(const RunConfig& cfg, const std::string& checkpoint_path) {
    DenoiserModel model = build_model(cfg);
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    load_registry(ckpt, model.registry());
    return model;
}

std::string cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    write_resolved_config(cfg, out_dir);
    DatasetManifest manifest = build_manifest(out_dir, cfg.data, cfg.seed);
    int train = 0, vh = 0, vu = 0, th = 0, tu = 0;
    for (const ManifestEntry& e : manifest.entries) {
        if (e.split == kSplitTrain) ++train;
        else if (e.split == kSplitValHealthy) ++vh;
        else if (e.split == kSplitValUnhealthy) ++vu;
        else if (e.split == kSplitTestHealthy) ++th;
        else if (e.split == kSplitTestUnhealthy) ++tu;
    }
    std::cout << "generated " << manifest.entries.size() << " phantoms at " << cfg.data.H << "x" << cfg.data.W
              << " (train " << train << ", val-healthy " << vh << ", val-unhealthy " << vu << ", test-healthy " << th
              << ", test-unhealthy " << tu << ")\n";
    return (fs::path(out_dir) / "manifest.json").string();
}

namespace {

std::vector<Tensor> load_split_images(const DatasetManifest& manifest, const std::string& split) {
    std::vector<Tensor> images;
    for (const ManifestEntry& e : manifest.split(split)) {
        images.push_back(load_phantom(manifest, e).image);
    }
    return images;
}

} // namespace

std::string cmd_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir,
                      const std::string& resume_checkpoint, FitResult* result_out) {
    write_resolved_config(cfg, out_dir);
    DatasetManifest manifest = load_manifest(manifest_path);
    std::vector<Tensor> train_images = load_split_images(manifest, kSplitTrain);
    std::vector<Tensor> val_images = load_split_images(manifest, kSplitValHealthy);
    if (train_images.empty()) throw ConfigError("train: manifest has an empty train split");
    if (val_images.empty()) throw ConfigError("train: manifest has an empty val-healthy split");

    NoiseSchedule sched = build_linear_schedule(cfg.diffusion);
    DenoiserModel model = build_model(cfg);
    Adam adam(cfg.train.lr, cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps);

    int64_t start_step = 0;
    if (!resume_checkpoint.empty()) {
        start_step = restore_training_checkpoint(load_checkpoint(resume_checkpoint), model, &adam);
    }

    std::ofstream log_file(fs::path(out_dir) / "train_log.jsonl", start_step > 0 ? std::ios::app : std::ios::trunc);
    auto log = [&](const std::string& line) {
        log_file << line << "\n";
        log_file.flush();
        std::cout << line << "\n";
    };

    FitResult result = fit(model, adam, train_images, val_images, sched, cfg.simplex, cfg.train, cfg.seed, out_dir,
                           config_to_json_string(cfg, -1), log, start_step);
    if (result_out) *result_out = result;
    std::cout << "best validation " << result.best_val << " at step " << result.best_step << "\n";
    return result.best_checkpoint_path;
}

std::string cmd_reconstruct(const RunConfig& cfg, const std::string& manifest_path,
                            const std::string& checkpoint_path, const std::string& split, const std::string& out_dir) {
    write_resolved_config(cfg, out_dir);
    DatasetManifest manifest = load_manifest(manifest_path);
    const auto entries = manifest.split(split);
    if (entries.empty()) throw ConfigError("reconstruct: no entries in split '" + split + "'");

    DenoiserModel model = load_model(cfg, checkpoint_path);
    ModelDenoiser denoiser(model);
    PatchPlan plan = plan_from_config(cfg);
    NoiseSchedule sched = build_linear_schedule(cfg.diffusion);

    fs::create_directories(fs::path(out_dir) / "recon");
    for (const ManifestEntry& e : entries) {
        Phantom ph = load_phantom(manifest, e);
        SimplexParams noise = cfg.simplex;
        noise.seed = derive_seed(cfg.seed, seed_tag::kReconNoise, e.seed);
        ReconstructionResult r = reconstruct(ph.image, denoiser, sched, plan, cfg.diffusion.t_test, noise);
        const std::string base = (fs::path(out_dir) / "recon" / e.id).string();
        save_tensor(base + "_rec.maed", r.x0_rec);
        save_tensor(base + "_score.maed", r.score);
    }
    std::cout << "reconstructed " << entries.size() << " images from split '" << split << "'\n";
    return (fs::path(out_dir) / "recon").string();
}

std::string cmd_evaluate(const RunConfig& cfg, const std::string& manifest_path, const std::string& checkpoint_path,
                         const std::string& out_dir, bool panels, EvalReport* report_out) {
    write_resolved_config(cfg, out_dir);
    DatasetManifest manifest = load_manifest(manifest_path);
    DenoiserModel model = load_model(cfg, checkpoint_path);
    ModelDenoiser denoiser(model);
    EvalReport report = evaluate_model(denoiser, manifest, cfg, out_dir, panels);
    if (report_out) *report_out = report;
    std::cout << "threshold " << report.threshold << ", DICE " << report.dice_mean << " +/- " << report.dice_std
              << ", AUPRC " << report.auprc << ", l1 " << report.l1_mean << "\n";
    return (fs::path(out_dir) / "report.json").string();
}

std::string cmd_plot(const std::string& manifest_path, const std::string& recon_dir, const std::string& out_dir) {
    DatasetManifest manifest = load_manifest(manifest_path);
    fs::create_directories(out_dir);
    int written = 0;
    for (const ManifestEntry& e : manifest.entries) {
        const std::string base = (fs::path(recon_dir) / e.id).string();
        if (!fs::exists(base + "_rec.maed")) continue;
        Phantom ph = load_phantom(manifest, e);
        Tensor rec = load_tensor(base + "_rec.maed");
        Tensor score = load_tensor(base + "_score.maed");
        write_panel_png((fs::path(out_dir) / (e.id + ".png")).string(), {ph.image, rec, score, ph.anomaly_mask},
                        {PanelNorm::Clamp01, PanelNorm::Clamp01, PanelNorm::MaxScale, PanelNorm::Binary});
        ++written;
    }
    if (written == 0) throw ConfigError("plot: no reconstruction tensors found under " + recon_dir);
    std::cout << "wrote " << written << " panels\n";
    return out_dir;
}

} // namespace maediff::cli
