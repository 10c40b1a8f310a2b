// SPDX-License-Identifier: Apache-2.0
#include "maediff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace maediff {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "}";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    for (int64_t d : shape_) {
        if (d <= 0) throw ConfigError("tensor dimension must be positive, got shape " + shape_str(shape_));
    }
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> shape, float fill) : Tensor(std::move(shape)) {
    std::fill(data_.begin(), data_.end(), fill);
}

Tensor Tensor::randn(std::vector<int64_t> shape, SplitMix64& rng, double stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.gaussian() * stddev);
    return t;
}

Tensor Tensor::rand_uniform(std::vector<int64_t> shape, SplitMix64& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel()) {
        throw ConfigError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) s += v;
    return s;
}

double Tensor::mean() const { return empty() ? 0.0 : sum() / static_cast<double>(numel()); }

double Tensor::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (float v : data_) m = std::min(m, static_cast<double>(v));
    return m;
}

double Tensor::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (float v : data_) m = std::max(m, static_cast<double>(v));
    return m;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor r(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) r[i] = a[i] + b[i];
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor r(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) r[i] = a[i] - b[i];
    return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor r(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) r[i] = a[i] * b[i];
    return r;
}

Tensor scale(const Tensor& a, double c) {
    Tensor r(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) r[i] = static_cast<float>(c * a[i]);
    return r;
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "abs_diff");
    Tensor r(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) r[i] = std::fabs(a[i] - b[i]);
    return r;
}

Tensor axpby(double c1, const Tensor& a, double c2, const Tensor& b) {
    check_same_shape(a, b, "axpby");
    Tensor r(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        r[i] = static_cast<float>(c1 * static_cast<double>(a[i]) + c2 * static_cast<double>(b[i]));
    }
    return r;
}

namespace {

void write_bytes(std::ofstream& f, const void* p, size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& f, void* p, size_t n, const std::string& path) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f.gcount()) != n) {
        throw IoError("truncated tensor file: " + path);
    }
}

} // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    write_bytes(f, "MAED", 4);
    uint16_t version = kTensorFormatVersion;
    uint16_t ndim = static_cast<uint16_t>(t.ndim());
    write_bytes(f, &version, 2);
    write_bytes(f, &ndim, 2);
    for (int64_t d : t.shape()) {
        uint32_t d32 = static_cast<uint32_t>(d);
        write_bytes(f, &d32, 4);
    }
    write_bytes(f, t.data(), static_cast<size_t>(t.numel()) * 4);
    if (!f) throw IoError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    read_bytes(f, magic, 4, path);
    if (std::memcmp(magic, "MAED", 4) != 0) throw IoError("bad magic in tensor file: " + path);
    uint16_t version = 0, ndim = 0;
    read_bytes(f, &version, 2, path);
    if (version != kTensorFormatVersion) {
        throw IoError("unsupported tensor format version " + std::to_string(version) + " in " + path);
    }
    read_bytes(f, &ndim, 2, path);
    std::vector<int64_t> shape(ndim);
    for (uint16_t i = 0; i < ndim; ++i) {
        uint32_t d32 = 0;
        read_bytes(f, &d32, 4, path);
        shape[i] = d32;
    }
    Tensor t(shape);
    read_bytes(f, t.data(), static_cast<size_t>(t.numel()) * 4, path);
    return t;
}

} // namespace maediff
