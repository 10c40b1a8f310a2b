// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maediff/errors.hpp"
#include "maediff/rng.hpp"

namespace maediff {

// Dense row-major float32 tensor. Images are {H,W}, feature maps {C,H,W},
// token matrices {N,d}. Value semantics throughout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, float fill);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, float v) { return Tensor(std::move(shape), v); }
    static Tensor randn(std::vector<int64_t> shape, SplitMix64& rng, double stddev = 1.0);
    static Tensor rand_uniform(std::vector<int64_t> shape, SplitMix64& rng);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2D / 3D indexed access (row-major).
    float& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    float at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    float& at(int64_t c, int64_t i, int64_t j) {
        return data_[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
    }
    float at(int64_t c, int64_t i, int64_t j) const {
        return data_[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // Returns a copy with a new shape; element count must match.
    Tensor reshaped(std::vector<int64_t> shape) const;

    void fill(float v);
    bool all_finite() const;

    double sum() const;       // double accumulation
    double mean() const;
    double min() const;
    double max() const;

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

// Elementwise helpers used by the diffusion/patching algebra. All of them
// check shapes and throw ConfigError on mismatch.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor abs_diff(const Tensor& a, const Tensor& b);
// a*c1 + b*c2 with per-element double arithmetic.
Tensor axpby(double c1, const Tensor& a, double c2, const Tensor& b);

// Bit-exact binary tensor file format:
//   magic "MAED" (4 bytes), version u16 LE, ndim u16 LE, dims u32 LE each,
//   then row-major IEEE-754 float32 payload, little-endian.
inline constexpr uint16_t kTensorFormatVersion = 1;
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

} // namespace maediff
