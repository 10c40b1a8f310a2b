// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maediff/nn.hpp"
#include "maediff/tensor.hpp"

namespace maediff {

// Single-archive checkpoint: parameter tensors keyed by hierarchical names
// plus the resolved run configuration (and any counters) as embedded JSON.
//   magic "MAEC", version u16, json length u64 + UTF-8 bytes,
//   tensor count u32, then per tensor: name length u32 + bytes,
//   ndim u16, dims u32 each, float32 payload.
struct Checkpoint {
    std::string meta_json;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies registry parameters into / out of a checkpoint. Loading matches by
// name and requires identical shapes.
void store_registry(Checkpoint& ckpt, const nn::ParamRegistry& reg);
void load_registry(const Checkpoint& ckpt, nn::ParamRegistry& reg);

} // namespace maediff
