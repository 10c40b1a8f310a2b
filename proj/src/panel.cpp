// SPDX-License-Identifier: Apache-2.0
#include "maediff/panel.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace maediff {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> head;
    put_u32be(head, static_cast<uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<uint8_t> tail;
    put_u32be(tail, static_cast<uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

} // namespace

void write_png_gray8(const std::string& path, const std::vector<uint8_t>& pixels, int64_t width, int64_t height) {
    if (width < 1 || height < 1 || pixels.size() != static_cast<size_t>(width * height)) {
        throw ConfigError("write_png_gray8: pixel buffer does not match dimensions");
    }
    // filter byte 0 at the start of every scanline
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height * (width + 1)));
    for (int64_t y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + y * width, pixels.begin() + (y + 1) * width);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw IoError("write_png_gray8: zlib compression failed");
    }
    compressed.resize(bound);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(width));
    put_u32be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(0); // grayscale
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter
    ihdr.push_back(0); // no interlace
    write_chunk(f, "IHDR", ihdr);
    write_chunk(f, "IDAT", compressed);
    write_chunk(f, "IEND", {});
    if (!f) throw IoError("write failed: " + path);
}

void write_panel_png(const std::string& path, const std::vector<Tensor>& columns,
                     const std::vector<PanelNorm>& norms) {
    if (columns.empty() || columns.size() != norms.size()) {
        throw ConfigError("write_panel_png: columns/norms mismatch");
    }
    const int64_t H = columns[0].dim(0), W = columns[0].dim(1);
    for (const Tensor& c : columns) {
        if (c.ndim() != 2 || c.dim(0) != H || c.dim(1) != W) {
            throw ConfigError("write_panel_png: all columns must share one shape");
        }
    }
    const int64_t sep = 2;
    const int64_t total_w = static_cast<int64_t>(columns.size()) * W + (static_cast<int64_t>(columns.size()) - 1) * sep;
    std::vector<uint8_t> pixels(static_cast<size_t>(H * total_w), 220);

    auto to_byte = [](double v) {
        return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    int64_t x0 = 0;
    for (size_t c = 0; c < columns.size(); ++c) {
        const Tensor& img = columns[c];
        double scale = 1.0;
        if (norms[c] == PanelNorm::MaxScale) {
            double mx = img.max();
            scale = mx > 1e-12 ? 1.0 / mx : 1.0;
        }
        for (int64_t i = 0; i < H; ++i) {
            for (int64_t j = 0; j < W; ++j) {
                double v = img.at(i, j);
                if (norms[c] == PanelNorm::Binary) {
                    v = v > 0.5 ? 1.0 : 0.0;
                } else {
                    v *= scale;
                }
                pixels[static_cast<size_t>(i * total_w + x0 + j)] = to_byte(v);
            }
        }
        x0 += W + sep;
    }
    write_png_gray8(path, pixels, total_w, H);
}

} // namespace maediff
