// SPDX-License-Identifier: Apache-2.0
#include "maediff/config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace maediff {

namespace {

using nlohmann::json;

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

RunConfig config_from_json(const json& j) {
    RunConfig c;
    get_if(j, "seed", c.seed);
    if (j.contains("data")) {
        const json& d = j.at("data");
        get_if(d, "H", c.data.H);
        get_if(d, "W", c.data.W);
        get_if(d, "n_train", c.data.n_train);
        get_if(d, "n_val_healthy", c.data.n_val_healthy);
        get_if(d, "n_val_unhealthy", c.data.n_val_unhealthy);
        get_if(d, "n_test_healthy", c.data.n_test_healthy);
        get_if(d, "n_test_unhealthy", c.data.n_test_unhealthy);
    }
    if (j.contains("plan")) {
        const json& p = j.at("plan");
        get_if(p, "p", c.plan.p);
        get_if(p, "s", c.plan.s);
        get_if(p, "r", c.plan.r);
    }
    if (j.contains("diffusion")) {
        const json& d = j.at("diffusion");
        get_if(d, "T", c.diffusion.T);
        get_if(d, "beta_min", c.diffusion.beta_min);
        get_if(d, "beta_max", c.diffusion.beta_max);
        get_if(d, "t_test", c.diffusion.t_test);
    }
    if (j.contains("simplex")) {
        const json& s = j.at("simplex");
        get_if(s, "nu", c.simplex.nu);
        get_if(s, "octaves", c.simplex.octaves);
        get_if(s, "gamma", c.simplex.gamma);
    }
    if (j.contains("unet")) {
        const json& u = j.at("unet");
        get_if(u, "in_channels", c.unet.in_channels);
        get_if(u, "base_channels", c.unet.base_channels);
        get_if(u, "channel_mults", c.unet.channel_mults);
        get_if(u, "res_blocks_per_level", c.unet.res_blocks_per_level);
        get_if(u, "attention_resolutions", c.unet.attention_resolutions);
        get_if(u, "time_embed_dim", c.unet.time_embed_dim);
        get_if(u, "num_heads", c.unet.num_heads);
        get_if(u, "use_global_attention", c.unet.use_global_attention);
        get_if(u, "use_mae", c.unet.use_mae);
    }
    if (j.contains("mae")) {
        const json& m = j.at("mae");
        get_if(m, "d1", c.mae.d1);
        get_if(m, "enc_blocks", c.mae.enc_blocks);
        get_if(m, "enc_heads", c.mae.enc_heads);
        get_if(m, "d2", c.mae.d2);
        get_if(m, "dec_blocks", c.mae.dec_blocks);
        get_if(m, "dec_heads", c.mae.dec_heads);
        get_if(m, "use_timestep", c.mae.use_timestep);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        get_if(t, "epochs", c.train.epochs);
        get_if(t, "max_steps", c.train.max_steps);
        get_if(t, "batch_size", c.train.batch_size);
        get_if(t, "lr", c.train.lr);
        get_if(t, "adam_beta1", c.train.adam_beta1);
        get_if(t, "adam_beta2", c.train.adam_beta2);
        get_if(t, "adam_eps", c.train.adam_eps);
        get_if(t, "t_min", c.train.t_min);
        get_if(t, "t_max", c.train.t_max);
        get_if(t, "val_every", c.train.val_every);
        get_if(t, "val_pairs_per_image", c.train.val_pairs_per_image);
        get_if(t, "log_every", c.train.log_every);
        get_if(t, "workers", c.train.workers);
    }
    if (j.contains("postprocess")) {
        const json& p = j.at("postprocess");
        get_if(p, "median_kernel", c.postprocess.median_kernel);
        get_if(p, "erosion_cycles", c.postprocess.erosion_cycles);
        get_if(p, "min_component_size", c.postprocess.min_component_size);
        get_if(p, "connectivity", c.postprocess.connectivity);
        get_if(p, "threshold_candidates", c.postprocess.threshold_candidates);
        get_if(p, "auprc_per_image", c.postprocess.auprc_per_image);
    }
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["data"] = {{"H", c.data.H},
                 {"W", c.data.W},
                 {"n_train", c.data.n_train},
                 {"n_val_healthy", c.data.n_val_healthy},
                 {"n_val_unhealthy", c.data.n_val_unhealthy},
                 {"n_test_healthy", c.data.n_test_healthy},
                 {"n_test_unhealthy", c.data.n_test_unhealthy}};
    j["plan"] = {{"p", c.plan.p}, {"s", c.plan.s}, {"r", c.plan.r}};
    j["diffusion"] = {{"T", c.diffusion.T},
                      {"beta_min", c.diffusion.beta_min},
                      {"beta_max", c.diffusion.beta_max},
                      {"t_test", c.diffusion.t_test}};
    j["simplex"] = {{"nu", c.simplex.nu}, {"octaves", c.simplex.octaves}, {"gamma", c.simplex.gamma}};
    j["unet"] = {{"in_channels", c.unet.in_channels},
                 {"base_channels", c.unet.base_channels},
                 {"channel_mults", c.unet.channel_mults},
                 {"res_blocks_per_level", c.unet.res_blocks_per_level},
                 {"attention_resolutions", c.unet.attention_resolutions},
                 {"time_embed_dim", c.unet.time_embed_dim},
                 {"num_heads", c.unet.num_heads},
                 {"use_global_attention", c.unet.use_global_attention},
                 {"use_mae", c.unet.use_mae}};
    j["mae"] = {{"d1", c.mae.d1},
                {"enc_blocks", c.mae.enc_blocks},
                {"enc_heads", c.mae.enc_heads},
                {"d2", c.mae.d2},
                {"dec_blocks", c.mae.dec_blocks},
                {"dec_heads", c.mae.dec_heads},
                {"use_timestep", c.mae.use_timestep}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"max_steps", c.train.max_steps},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"t_min", c.train.t_min},
                  {"t_max", c.train.t_max},
                  {"val_every", c.train.val_every},
                  {"val_pairs_per_image", c.train.val_pairs_per_image},
                  {"log_every", c.train.log_every},
                  {"workers", c.train.workers}};
    j["postprocess"] = {{"median_kernel", c.postprocess.median_kernel},
                        {"erosion_cycles", c.postprocess.erosion_cycles},
                        {"min_component_size", c.postprocess.min_component_size},
                        {"connectivity", c.postprocess.connectivity},
                        {"threshold_candidates", c.postprocess.threshold_candidates},
                        {"auprc_per_image", c.postprocess.auprc_per_image}};
    return j;
}

void apply_override(json& j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must be key.path=value, got '" + assignment + "'");
    }
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    std::string pointer = "/";
    for (char ch : key) pointer += ch == '.' ? '/' : ch;
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value; // plain string
    }
    try {
        j[json::json_pointer(pointer)] = parsed;
    } catch (const json::exception& e) {
        throw ConfigError("cannot apply override '" + assignment + "': " + e.what());
    }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file: " + path);
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
        }
    }
    for (const std::string& o : overrides) apply_override(j, o);
    RunConfig cfg;
    try {
        cfg = config_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError("config field has wrong type: " + std::string(e.what()));
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const RunConfig& c) {
    if (c.data.H < 32 || c.data.W < 32) throw ConfigError("data: image sides must be >= 32");
    if (c.data.n_train < 1) throw ConfigError("data: n_train must be >= 1");
    if (c.data.n_val_healthy < 0 || c.data.n_val_unhealthy < 0 || c.data.n_test_healthy < 0 ||
        c.data.n_test_unhealthy < 0) {
        throw ConfigError("data: split counts must be >= 0");
    }

    // geometry: rejects anything that does not tile exactly
    enumerate_patches(c.data.H, c.data.W, c.plan.p, c.plan.s, c.plan.r);
    if (c.data.H % 4 != 0 || c.data.W % 4 != 0) throw ConfigError("data: image sides must be divisible by 4");
    if (c.plan.r % 4 != 0) throw ConfigError("plan: r must be divisible by 4 (feature-map grid cells)");
    const int64_t cell = c.plan.r / 4;
    if ((cell & (cell - 1)) != 0) throw ConfigError("plan: r/4 must be a power of two (deconvolution ladder)");

    // diffusion
    build_linear_schedule(c.diffusion);

    // simplex
    if (!(c.simplex.nu > 0.0)) throw ConfigError("simplex: nu must be > 0");
    if (c.simplex.octaves < 1) throw ConfigError("simplex: octaves must be >= 1");
    if (!(c.simplex.gamma > 0.0 && c.simplex.gamma < 1.0)) throw ConfigError("simplex: gamma must lie in (0,1)");

    // unet
    if (c.unet.in_channels != 1) throw ConfigError("unet: only single-channel images are supported");
    if (c.unet.channel_mults.size() != 2) {
        throw ConfigError("unet: channel_mults must list exactly two levels (fusion at H/4)");
    }
    if (c.unet.base_channels < 1 || c.unet.res_blocks_per_level < 1) {
        throw ConfigError("unet: base_channels and res_blocks_per_level must be positive");
    }
    for (int m : c.unet.channel_mults) {
        if (m < 1) throw ConfigError("unet: channel multipliers must be positive");
    }
    if (c.unet.use_global_attention) {
        if (c.unet.num_heads < 1) throw ConfigError("unet: num_heads must be >= 1");
        for (int m : c.unet.channel_mults) {
            if ((c.unet.base_channels * m) % c.unet.num_heads != 0) {
                throw ConfigError("unet: channel widths must be divisible by num_heads");
            }
        }
    }

    // mae
    if (c.unet.use_mae) {
        if (c.mae.d1 < 1 || c.mae.d2 < 1) throw ConfigError("mae: hidden sizes must be positive");
        if (c.mae.enc_heads < 1 || c.mae.d1 % c.mae.enc_heads != 0) {
            throw ConfigError("mae: d1 must be divisible by enc_heads");
        }
        if (c.mae.dec_heads < 1 || c.mae.d2 % c.mae.dec_heads != 0) {
            throw ConfigError("mae: d2 must be divisible by dec_heads");
        }
        if (c.mae.dec_blocks < 1 || c.mae.dec_blocks > c.mae.enc_blocks) {
            throw ConfigError("mae: need 1 <= dec_blocks <= enc_blocks");
        }
    }

    // train
    if (c.train.epochs < 0 || c.train.max_steps < 0) throw ConfigError("train: step counts must be >= 0");
    if (c.train.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(c.train.lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (c.train.t_min < 1 || c.train.t_max > c.diffusion.T || c.train.t_min > c.train.t_max) {
        throw ConfigError("train: t range must satisfy 1 <= t_min <= t_max <= T");
    }
    if (c.train.workers < 1) throw ConfigError("train: workers must be >= 1");

    // postprocess
    if (c.postprocess.median_kernel < 1 || c.postprocess.median_kernel % 2 == 0) {
        throw ConfigError("postprocess: median_kernel must be odd");
    }
    if (c.postprocess.erosion_cycles < 0) throw ConfigError("postprocess: erosion_cycles must be >= 0");
    if (c.postprocess.min_component_size < 1) throw ConfigError("postprocess: min_component_size must be >= 1");
    if (c.postprocess.connectivity != 4 && c.postprocess.connectivity != 8) {
        throw ConfigError("postprocess: connectivity must be 4 or 8");
    }
    if (c.postprocess.threshold_candidates < 1) {
        throw ConfigError("postprocess: threshold_candidates must be >= 1");
    }
}

PatchPlan plan_from_config(const RunConfig& c) {
    return enumerate_patches(c.data.H, c.data.W, c.plan.p, c.plan.s, c.plan.r);
}

std::string config_to_json_string(const RunConfig& cfg, int indent) { return config_to_json(cfg).dump(indent); }

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "config.resolved.json");
    if (!f) throw IoError("cannot write resolved config under " + out_dir);
    f << config_to_json_string(cfg) << "\n";
}

} // namespace maediff
