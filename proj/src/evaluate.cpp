// SPDX-License-Identifier: Apache-2.0
#include "maediff/evaluate.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "maediff/panel.hpp"

namespace maediff {

namespace fs = std::filesystem;

Tensor preprocess_score(const Tensor& score, const Tensor& brain_mask, const PostprocessConfig& ppc) {
    Tensor s = median_filter(score, ppc.median_kernel);
    Tensor eroded = erode_mask(brain_mask, ppc.erosion_cycles);
    for (int64_t i = 0; i < s.numel(); ++i) {
        if (eroded[i] <= 0.5f) s[i] = 0.0f;
    }
    return s;
}

std::string EvalReport::to_json_string(int indent) const {
    nlohmann::json j;
    j["threshold"] = threshold;
    j["dice_mean"] = dice_mean;
    j["dice_std"] = dice_std;
    j["auprc"] = auprc;
    j["l1_mean"] = l1_mean;
    j["per_image"] = nlohmann::json::array();
    for (const EvalImageRecord& r : per_image) {
        nlohmann::json e;
        e["id"] = r.id;
        if (r.dice >= 0.0) e["dice"] = r.dice;
        if (r.l1 >= 0.0) e["l1"] = r.l1;
        j["per_image"].push_back(e);
    }
    return j.dump(indent);
}

namespace {

struct ReconOutputs {
    std::vector<Phantom> phantoms;
    std::vector<ReconstructionResult> recs;
    std::vector<std::string> ids;
};

ReconOutputs reconstruct_split(Denoiser& denoiser, const DatasetManifest& manifest, const std::string& split,
                               const RunConfig& cfg, const NoiseSchedule& sched, const PatchPlan& plan) {
    ReconOutputs out;
    for (const ManifestEntry& e : manifest.split(split)) {
        Phantom ph = load_phantom(manifest, e);
        SimplexParams noise = cfg.simplex;
        noise.seed = derive_seed(cfg.seed, seed_tag::kReconNoise, e.seed);
        out.recs.push_back(reconstruct(ph.image, denoiser, sched, plan, cfg.diffusion.t_test, noise));
        out.phantoms.push_back(std::move(ph));
        out.ids.push_back(e.id);
    }
    return out;
}

void save_recon_files(const std::string& out_dir, const ReconOutputs& ro, bool panels) {
    fs::create_directories(fs::path(out_dir) / "recon");
    if (panels) fs::create_directories(fs::path(out_dir) / "panels");
    for (size_t i = 0; i < ro.recs.size(); ++i) {
        const std::string base = (fs::path(out_dir) / "recon" / ro.ids[i]).string();
        save_tensor(base + "_rec.maed", ro.recs[i].x0_rec);
        save_tensor(base + "_score.maed", ro.recs[i].score);
        if (panels) {
            write_panel_png((fs::path(out_dir) / "panels" / (ro.ids[i] + ".png")).string(),
                            {ro.phantoms[i].image, ro.recs[i].x0_rec, ro.recs[i].score, ro.phantoms[i].anomaly_mask},
                            {PanelNorm::Clamp01, PanelNorm::Clamp01, PanelNorm::MaxScale, PanelNorm::Binary});
        }
    }
}

} // namespace

EvalReport evaluate_model(Denoiser& denoiser, const DatasetManifest& manifest, const RunConfig& cfg,
                          const std::string& out_dir, bool write_panels) {
    const PatchPlan plan = plan_from_config(cfg);
    const NoiseSchedule sched = build_linear_schedule(cfg.diffusion);
    const PostprocessConfig& ppc = cfg.postprocess;

    // 1. threshold search on the unhealthy validation split
    ReconOutputs val = reconstruct_split(denoiser, manifest, kSplitValUnhealthy, cfg, sched, plan);
    if (val.recs.empty()) throw ConfigError("evaluate: manifest has no val-unhealthy split");
    std::vector<Tensor> val_scores, val_labels;
    for (size_t i = 0; i < val.recs.size(); ++i) {
        val_scores.push_back(preprocess_score(val.recs[i].score, val.phantoms[i].brain_mask, ppc));
        val_labels.push_back(val.phantoms[i].anomaly_mask);
    }
    EvalReport report;
    report.threshold = greedy_threshold(val_scores, val_labels, ppc);

    // 2. DICE + pooled AUPRC on test-unhealthy
    ReconOutputs test_u = reconstruct_split(denoiser, manifest, kSplitTestUnhealthy, cfg, sched, plan);
    if (test_u.recs.empty()) throw ConfigError("evaluate: manifest has no test-unhealthy split");
    std::vector<double> dices;
    std::vector<float> pooled_scores;
    std::vector<uint8_t> pooled_labels;
    std::vector<double> per_image_auprc;
    for (size_t i = 0; i < test_u.recs.size(); ++i) {
        Tensor s = preprocess_score(test_u.recs[i].score, test_u.phantoms[i].brain_mask, ppc);
        Tensor bin(s.shape());
        for (int64_t px = 0; px < s.numel(); ++px) bin[px] = s[px] > report.threshold ? 1.0f : 0.0f;
        bin = remove_small_components(bin, ppc.min_component_size, ppc.connectivity);
        const double d = dice(bin, test_u.phantoms[i].anomaly_mask);
        dices.push_back(d);
        EvalImageRecord rec;
        rec.id = test_u.ids[i];
        rec.dice = d;
        report.per_image.push_back(rec);

        // pool pixels inside the eroded brain mask
        Tensor eroded = erode_mask(test_u.phantoms[i].brain_mask, ppc.erosion_cycles);
        std::vector<float> img_scores;
        std::vector<uint8_t> img_labels;
        for (int64_t px = 0; px < s.numel(); ++px) {
            if (eroded[px] > 0.5f) {
                img_scores.push_back(s[px]);
                img_labels.push_back(test_u.phantoms[i].anomaly_mask[px] > 0.5f ? 1 : 0);
            }
        }
        if (ppc.auprc_per_image) {
            bool has_pos = false;
            for (uint8_t l : img_labels) has_pos = has_pos || l;
            if (has_pos) per_image_auprc.push_back(auprc(img_scores, img_labels));
        } else {
            pooled_scores.insert(pooled_scores.end(), img_scores.begin(), img_scores.end());
            pooled_labels.insert(pooled_labels.end(), img_labels.begin(), img_labels.end());
        }
    }
    double dsum = 0.0;
    for (double d : dices) dsum += d;
    report.dice_mean = dsum / static_cast<double>(dices.size());
    double dvar = 0.0;
    for (double d : dices) dvar += (d - report.dice_mean) * (d - report.dice_mean);
    report.dice_std = std::sqrt(dvar / static_cast<double>(dices.size()));
    if (ppc.auprc_per_image) {
        double asum = 0.0;
        for (double a : per_image_auprc) asum += a;
        report.auprc = per_image_auprc.empty() ? 0.0 : asum / static_cast<double>(per_image_auprc.size());
    } else {
        report.auprc = auprc(pooled_scores, pooled_labels);
    }

    // 3. l1 on test-healthy
    ReconOutputs test_h = reconstruct_split(denoiser, manifest, kSplitTestHealthy, cfg, sched, plan);
    double lsum = 0.0;
    for (size_t i = 0; i < test_h.recs.size(); ++i) {
        const double l1 = l1_error(test_h.phantoms[i].image, test_h.recs[i].x0_rec, test_h.phantoms[i].brain_mask);
        lsum += l1;
        EvalImageRecord rec;
        rec.id = test_h.ids[i];
        rec.l1 = l1;
        report.per_image.push_back(rec);
    }
    report.l1_mean = test_h.recs.empty() ? 0.0 : lsum / static_cast<double>(test_h.recs.size());

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_recon_files(out_dir, test_u, write_panels);
        save_recon_files(out_dir, test_h, write_panels);
        std::ofstream f(fs::path(out_dir) / "report.json");
        if (!f) throw IoError("cannot write report under " + out_dir);
        f << report.to_json_string() << "\n";
    }
    return report;
}

} // namespace maediff
