// SPDX-License-Identifier: Apache-2.0
#include "maediff/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace maediff {

namespace {

void write_bytes(std::ofstream& f, const void* p, size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& f, void* p, size_t n, const std::string& path) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f.gcount()) != n) throw IoError("truncated checkpoint: " + path);
}

} // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    write_bytes(f, "MAEC", 4);
    uint16_t version = kCheckpointVersion;
    write_bytes(f, &version, 2);
    uint64_t json_len = ckpt.meta_json.size();
    write_bytes(f, &json_len, 8);
    write_bytes(f, ckpt.meta_json.data(), ckpt.meta_json.size());
    uint32_t count = static_cast<uint32_t>(ckpt.tensors.size());
    write_bytes(f, &count, 4);
    for (const auto& [name, t] : ckpt.tensors) {
        uint32_t name_len = static_cast<uint32_t>(name.size());
        write_bytes(f, &name_len, 4);
        write_bytes(f, name.data(), name.size());
        uint16_t ndim = static_cast<uint16_t>(t.ndim());
        write_bytes(f, &ndim, 2);
        for (int64_t d : t.shape()) {
            uint32_t d32 = static_cast<uint32_t>(d);
            write_bytes(f, &d32, 4);
        }
        write_bytes(f, t.data(), static_cast<size_t>(t.numel()) * 4);
    }
    if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    read_bytes(f, magic, 4, path);
    if (std::memcmp(magic, "MAEC", 4) != 0) throw IoError("bad magic in checkpoint: " + path);
    uint16_t version = 0;
    read_bytes(f, &version, 2, path);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    Checkpoint ckpt;
    uint64_t json_len = 0;
    read_bytes(f, &json_len, 8, path);
    ckpt.meta_json.resize(json_len);
    if (json_len > 0) read_bytes(f, ckpt.meta_json.data(), json_len, path);
    uint32_t count = 0;
    read_bytes(f, &count, 4, path);
    ckpt.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = 0;
        read_bytes(f, &name_len, 4, path);
        std::string name(name_len, '\0');
        read_bytes(f, name.data(), name_len, path);
        uint16_t ndim = 0;
        read_bytes(f, &ndim, 2, path);
        std::vector<int64_t> shape(ndim);
        for (uint16_t d = 0; d < ndim; ++d) {
            uint32_t d32 = 0;
            read_bytes(f, &d32, 4, path);
            shape[d] = d32;
        }
        Tensor t(shape);
        read_bytes(f, t.data(), static_cast<size_t>(t.numel()) * 4, path);
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void store_registry(Checkpoint& ckpt, const nn::ParamRegistry& reg) {
    for (const nn::Parameter* p : reg.params()) {
        ckpt.tensors.emplace_back(p->name, p->value);
    }
}

void load_registry(const Checkpoint& ckpt, nn::ParamRegistry& reg) {
    for (nn::Parameter* p : reg.params()) {
        const Tensor* t = ckpt.find(p->name);
        if (!t) throw IoError("checkpoint is missing parameter '" + p->name + "'");
        if (!t->same_shape(p->value)) {
            throw IoError("checkpoint parameter '" + p->name + "' has shape " + shape_str(t->shape()) +
                          ", model expects " + shape_str(p->value.shape()));
        }
        p->value = *t;
    }
}

} // namespace maediff
