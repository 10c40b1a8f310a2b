// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maediff/diffusion.hpp"
#include "maediff/patching.hpp"
#include "maediff/phantom.hpp"
#include "maediff/postprocess.hpp"
#include "maediff/simplex.hpp"
#include "maediff/training.hpp"
#include "maediff/unet.hpp"

namespace maediff {

struct PlanConfig {
    int64_t p = 32;
    int64_t s = 16;
    int64_t r = 16;
};

// The merged run configuration: one JSON file, flat key overrides, validated
// against every module invariant before any work starts. A resolved copy is
// persisted alongside every artifact.
struct RunConfig {
    uint64_t seed = 1234;
    DataConfig data;       // desk-scale 64x64 defaults
    PlanConfig plan;       // (p=32, s=16, r=16) for 64x64; (48,16,16) at 96x96
    DiffusionConfig diffusion;
    SimplexParams simplex; // the seed field is derived per draw, not configured
    UNetConfig unet;
    MAEConfig mae;
    TrainConfig train;
    PostprocessConfig postprocess;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

// Applies "section.key=value" to a config JSON tree; value parsed as a JSON
// literal when possible, as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Loads (or defaults, when path is empty), applies overrides, validates.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

// Cross-module invariant checks; throws ConfigError naming the violation.
void validate_config(const RunConfig& cfg);

PatchPlan plan_from_config(const RunConfig& cfg);

std::string config_to_json_string(const RunConfig& cfg, int indent = 2);
void write_resolved_config(const RunConfig& cfg, const std::string& out_dir);

} // namespace maediff
