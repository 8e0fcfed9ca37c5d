// SPDX-License-Identifier: Apache-2.0
#include "awracle/awtf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace awracle {

namespace le {

void put_u16(std::ostream& out, std::uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(bytes, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 4);
}

std::uint16_t get_u16(std::istream& in) {
    unsigned char bytes[2];
    if (!in.read(reinterpret_cast<char*>(bytes), 2)) throw FormatError("truncated u16");
    return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError("truncated u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace le

std::vector<std::uint8_t> payload_bytes(const Tensor32& tensor) {
    std::vector<std::uint8_t> bytes(tensor.numel() * 4);
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(tensor[i]);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF);
    }
    return bytes;
}

void write_awtf(std::ostream& out, const Tensor32& tensor) {
    if (tensor.ndim() > 255) throw FormatError("AWTF supports at most 255 dims");
    out.write("AWTF", 4);
    le::put_u32(out, kAwtfVersion);
    out.put(0);
    out.put(static_cast<char>(tensor.ndim()));
    for (auto d : tensor.shape()) le::put_u32(out, static_cast<std::uint32_t>(d));
    const auto bytes = payload_bytes(tensor);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor32 read_awtf(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "AWTF", 4) != 0) throw FormatError("bad AWTF magic");
    const auto version = le::get_u32(in);
    if (version != kAwtfVersion) throw FormatError("unsupported AWTF version " + std::to_string(version));
    const int dtype = in.get();
    const int ndim = in.get();
    if (!in) throw FormatError("truncated AWTF header");
    if (dtype != 0) throw FormatError("unsupported AWTF dtype " + std::to_string(dtype));
    Shape shape;
    std::size_t count = 1;
    for (int i = 0; i < ndim; ++i) {
        const auto d = le::get_u32(in);
        if (d == 0) throw FormatError("AWTF dimension of size zero");
        shape.push_back(d);
        count *= d;
    }
    std::vector<unsigned char> raw(count * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw FormatError("truncated AWTF payload");
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
        values[i] = std::bit_cast<float>(bits);
    }
    return Tensor32(std::move(shape), std::move(values));
}

void save_awtf(const std::filesystem::path& path, const Tensor32& tensor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_awtf(out, tensor);
    if (!out) throw IoError("write failed for " + path.string());
}

Tensor32 load_awtf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return read_awtf(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace awracle
