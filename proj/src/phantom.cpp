// SPDX-License-Identifier: Apache-2.0
#include "maediff/phantom.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "maediff/rng.hpp"
#include "maediff/simplex.hpp"

namespace maediff {

namespace {

namespace fs = std::filesystem;

struct Ellipse {
    double cy, cx, ay, ax, cos_t, sin_t;
    bool contains(double y, double x, double shrink = 1.0) const {
        const double dy = y - cy, dx = x - cx;
        const double u = (cos_t * dx + sin_t * dy) / (ax * shrink);
        const double v = (-sin_t * dx + cos_t * dy) / (ay * shrink);
        return u * u + v * v <= 1.0;
    }
};

} // namespace

Phantom generate_phantom(uint64_t seed, int64_t H, int64_t W) {
    if (H < 32 || W < 32) throw ConfigError("phantom size too small (need >= 32 per side)");
    SplitMix64 rng(derive_seed(seed, 0xF0F0u));

    Ellipse brain;
    brain.cy = static_cast<double>(H) * (0.5 + 0.04 * (rng.uniform() * 2.0 - 1.0));
    brain.cx = static_cast<double>(W) * (0.5 + 0.04 * (rng.uniform() * 2.0 - 1.0));
    brain.ay = static_cast<double>(H) * (0.33 + 0.09 * rng.uniform());
    brain.ax = static_cast<double>(W) * (0.33 + 0.11 * rng.uniform());
    const double theta = 0.3 * (rng.uniform() * 2.0 - 1.0);
    brain.cos_t = std::cos(theta);
    brain.sin_t = std::sin(theta);

    Phantom ph;
    ph.brain_mask = Tensor({H, W});
    ph.anomaly_mask = Tensor({H, W});
    for (int64_t i = 0; i < H; ++i) {
        for (int64_t j = 0; j < W; ++j) {
            if (brain.contains(i, j)) ph.brain_mask.at(i, j) = 1.0f;
        }
    }

    // Smooth low-frequency texture plus nested tissue bands.
    SimplexParams tex;
    tex.nu = 2.5 / static_cast<double>(std::max(H, W));
    tex.octaves = 2;
    tex.gamma = 0.5;
    tex.seed = derive_seed(seed, 0x7E47u);
    Tensor texture = fractal_field(H, W, tex);

    const int n_bands = static_cast<int>(rng.uniform_int(2, 4));
    std::vector<double> shrinks;
    std::vector<double> offsets;
    double hi = 0.92;
    for (int b = 0; b < n_bands; ++b) {
        const double lo = 0.92 - 0.8 * static_cast<double>(b + 1) / n_bands;
        shrinks.push_back(lo + (hi - lo) * 0.5 + 0.1 * (rng.uniform() - 0.5));
        offsets.push_back((rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.10 + 0.14 * rng.uniform()));
        hi = lo;
    }

    ph.image = Tensor({H, W});
    float vmin = 1e30f, vmax = -1e30f;
    for (int64_t i = 0; i < H; ++i) {
        for (int64_t j = 0; j < W; ++j) {
            if (ph.brain_mask.at(i, j) == 0.0f) continue;
            double v = 0.55 + 0.11 * texture.at(i, j);
            for (int b = 0; b < n_bands; ++b) {
                if (brain.contains(i, j, shrinks[static_cast<size_t>(b)])) v += offsets[static_cast<size_t>(b)];
            }
            const float vf = static_cast<float>(v);
            ph.image.at(i, j) = vf;
            vmin = std::min(vmin, vf);
            vmax = std::max(vmax, vf);
        }
    }
    // min-max normalize the interior to [0, 1]
    const double span = vmax > vmin ? static_cast<double>(vmax) - vmin : 1.0;
    for (int64_t i = 0; i < ph.image.numel(); ++i) {
        if (ph.brain_mask[i] != 0.0f) {
            const double n = (static_cast<double>(ph.image[i]) - vmin) / span;
            ph.image[i] = static_cast<float>(std::clamp(n, 0.0, 1.0));
        }
    }
    return ph;
}

Phantom inject_anomaly(const Phantom& healthy, uint64_t seed) {
    const int64_t H = healthy.image.dim(0), W = healthy.image.dim(1);
    SplitMix64 rng(derive_seed(seed, 0x1E51u));
    Phantom ph = healthy;

    // Keep lesions off the mask boundary so they sit inside brain tissue.
    Tensor interior = healthy.brain_mask;
    {
        Tensor eroded(interior.shape());
        for (int64_t i = 1; i + 1 < H; ++i) {
            for (int64_t j = 1; j + 1 < W; ++j) {
                bool all = true;
                for (int di = -1; di <= 1 && all; ++di) {
                    for (int dj = -1; dj <= 1 && all; ++dj) {
                        all = interior.at(i + di, j + dj) > 0.5f;
                    }
                }
                eroded.at(i, j) = all ? 1.0f : 0.0f;
            }
        }
        interior = std::move(eroded);
    }
    std::vector<int64_t> candidates;
    for (int64_t i = 0; i < interior.numel(); ++i) {
        if (interior[i] > 0.5f) candidates.push_back(i);
    }
    if (candidates.size() < 16) throw ConfigError("inject_anomaly: brain mask too small to host a lesion");

    const int n_lesions = static_cast<int>(rng.uniform_int(1, 3));
    for (int lesion = 0; lesion < n_lesions; ++lesion) {
        const int64_t target = rng.uniform_int(10, 200);
        const int64_t start = candidates[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(candidates.size()) - 1))];
        std::vector<int64_t> region;
        std::vector<int64_t> frontier{start};
        std::vector<uint8_t> in_region(static_cast<size_t>(H * W), 0);
        // random-walk growth: pull a random frontier pixel, add it, extend the
        // frontier with its unvisited 4-neighbors inside the brain mask
        while (!frontier.empty() && static_cast<int64_t>(region.size()) < target) {
            const size_t pick = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(frontier.size()) - 1));
            const int64_t idx = frontier[pick];
            frontier[pick] = frontier.back();
            frontier.pop_back();
            if (in_region[static_cast<size_t>(idx)]) continue;
            in_region[static_cast<size_t>(idx)] = 1;
            region.push_back(idx);
            const int64_t ci = idx / W, cj = idx % W;
            const int64_t nbi[4] = {-1, 1, 0, 0}, nbj[4] = {0, 0, -1, 1};
            for (int nb = 0; nb < 4; ++nb) {
                const int64_t ni = ci + nbi[nb], nj = cj + nbj[nb];
                if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
                const int64_t nidx = ni * W + nj;
                if (!in_region[static_cast<size_t>(nidx)] && healthy.brain_mask[nidx] > 0.5f) {
                    frontier.push_back(nidx);
                }
            }
        }
        if (static_cast<int64_t>(region.size()) < 10) {
            throw ConfigError("inject_anomaly: could not grow a lesion of at least 10 pixels");
        }
        double region_mean = 0.0;
        for (int64_t idx : region) region_mean += ph.image[idx];
        region_mean /= static_cast<double>(region.size());
        const double mag = 0.2 + 0.3 * rng.uniform();
        const double delta = region_mean > 0.5 ? -mag : mag;
        for (int64_t idx : region) {
            const float old = ph.image[idx];
            float nv = static_cast<float>(std::clamp(static_cast<double>(old) + delta, 0.0, 1.0));
            if (std::fabs(nv - old) < 0.05f) {
                nv = static_cast<float>(std::clamp(static_cast<double>(old) - delta, 0.0, 1.0));
            }
            ph.image[idx] = nv;
            ph.anomaly_mask[idx] = 1.0f;
        }
    }
    return ph;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const ManifestEntry& e : entries) {
        if (e.split == name) out.push_back(e);
    }
    return out;
}

DatasetManifest build_manifest(const std::string& out_dir, const DataConfig& cfg, uint64_t master_seed) {
    if (cfg.n_train < 1) throw ConfigError("build_manifest: n_train must be >= 1");
    fs::create_directories(fs::path(out_dir) / "tensors");

    DatasetManifest manifest;
    manifest.base_dir = out_dir;

    struct SplitSpec {
        const char* name;
        int count;
        bool unhealthy;
    };
    const SplitSpec specs[] = {
        {kSplitTrain, cfg.n_train, false},
        {kSplitValHealthy, cfg.n_val_healthy, false},
        {kSplitValUnhealthy, cfg.n_val_unhealthy, true},
        {kSplitTestHealthy, cfg.n_test_healthy, false},
        {kSplitTestUnhealthy, cfg.n_test_unhealthy, true},
    };

    uint64_t index = 0;
    for (const SplitSpec& spec : specs) {
        for (int i = 0; i < spec.count; ++i, ++index) {
            const uint64_t seed = derive_seed(master_seed, seed_tag::kPhantom, index);
            Phantom ph = generate_phantom(seed, cfg.H, cfg.W);
            if (spec.unhealthy) {
                ph = inject_anomaly(ph, derive_seed(master_seed, seed_tag::kLesion, index));
            }
            ManifestEntry e;
            char id[32];
            std::snprintf(id, sizeof(id), "%s_%04llu", spec.name, static_cast<unsigned long long>(index));
            e.id = id;
            e.split = spec.name;
            e.seed = seed;
            e.image = "tensors/" + e.id + "_img.maed";
            e.brain_mask = "tensors/" + e.id + "_brain.maed";
            e.anomaly_mask = "tensors/" + e.id + "_anom.maed";
            save_tensor((fs::path(out_dir) / e.image).string(), ph.image);
            save_tensor((fs::path(out_dir) / e.brain_mask).string(), ph.brain_mask);
            save_tensor((fs::path(out_dir) / e.anomaly_mask).string(), ph.anomaly_mask);
            manifest.entries.push_back(std::move(e));
        }
    }

    nlohmann::json gen;
    gen["H"] = cfg.H;
    gen["W"] = cfg.W;
    gen["n_train"] = cfg.n_train;
    gen["n_val_healthy"] = cfg.n_val_healthy;
    gen["n_val_unhealthy"] = cfg.n_val_unhealthy;
    gen["n_test_healthy"] = cfg.n_test_healthy;
    gen["n_test_unhealthy"] = cfg.n_test_unhealthy;
    gen["master_seed"] = master_seed;
    manifest.generation_config_json = gen.dump();

    nlohmann::json j;
    j["generation"] = gen;
    j["entries"] = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.entries) {
        j["entries"].push_back({{"id", e.id},
                                {"image", e.image},
                                {"brain_mask", e.brain_mask},
                                {"anomaly_mask", e.anomaly_mask},
                                {"split", e.split},
                                {"seed", e.seed}});
    }
    std::ofstream f(fs::path(out_dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest under " + out_dir);
    f << j.dump(2) << "\n";
    return manifest;
}

DatasetManifest load_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest: " + manifest_path);
    nlohmann::json j;
    f >> j;
    DatasetManifest m;
    m.base_dir = fs::path(manifest_path).parent_path().string();
    m.generation_config_json = j.value("generation", nlohmann::json::object()).dump();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.id = je.at("id").get<std::string>();
        e.image = je.at("image").get<std::string>();
        e.brain_mask = je.at("brain_mask").get<std::string>();
        e.anomaly_mask = je.at("anomaly_mask").get<std::string>();
        e.split = je.at("split").get<std::string>();
        e.seed = je.at("seed").get<uint64_t>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

Phantom load_phantom(const DatasetManifest& manifest, const ManifestEntry& entry) {
    Phantom ph;
    ph.image = load_tensor((fs::path(manifest.base_dir) / entry.image).string());
    ph.brain_mask = load_tensor((fs::path(manifest.base_dir) / entry.brain_mask).string());
    ph.anomaly_mask = load_tensor((fs::path(manifest.base_dir) / entry.anomaly_mask).string());
    return ph;
}

} // namespace maediff
