// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "maediff/tensor.hpp"

namespace maediff {

// Synthetic 2D phantom standing in for a gated MRI slice: elliptical "brain"
// mask, smooth textured interior with nested tissue bands, optional injected
// lesions.
struct Phantom {
    Tensor image;        // {H,W} in [0,1], zero outside brain_mask
    Tensor brain_mask;   // {H,W} binary
    Tensor anomaly_mask; // {H,W} binary, all-zero for healthy phantoms
};

Phantom generate_phantom(uint64_t seed, int64_t H, int64_t W);

// Adds 1-3 blob lesions (random-walk-grown, 10-200 px) inside the brain mask
// with an intensity shift of magnitude in [0.2, 0.5]; every lesion pixel is
// guaranteed to change value.
Phantom inject_anomaly(const Phantom& healthy, uint64_t seed);

struct DataConfig {
    int64_t H = 64, W = 64;
    int n_train = 40;
    int n_val_healthy = 8;
    int n_val_unhealthy = 8;
    int n_test_healthy = 8;
    int n_test_unhealthy = 8;
};

inline constexpr const char* kSplitTrain = "train";
inline constexpr const char* kSplitValHealthy = "val-healthy";
inline constexpr const char* kSplitValUnhealthy = "val-unhealthy";
inline constexpr const char* kSplitTestHealthy = "test-healthy";
inline constexpr const char* kSplitTestUnhealthy = "test-unhealthy";

struct ManifestEntry {
    std::string id;
    std::string image;        // paths relative to the manifest directory
    std::string brain_mask;
    std::string anomaly_mask;
    std::string split;
    uint64_t seed = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::string generation_config_json; // snapshot of DataConfig + master seed
    std::string base_dir;               // directory of the manifest file

    std::vector<ManifestEntry> split(const std::string& name) const;
};

// Writes phantom tensors plus manifest.json under out_dir; fully seeded and
// reproducible. Training and healthy splits contain no anomalous pixels.
DatasetManifest build_manifest(const std::string& out_dir, const DataConfig& cfg, uint64_t master_seed);

DatasetManifest load_manifest(const std::string& manifest_path);

Phantom load_phantom(const DatasetManifest& manifest, const ManifestEntry& entry);

} // namespace maediff
