// SPDX-License-Identifier: Apache-2.0
//
// "AWTF" tensor files: magic "AWTF", u32 LE version (1), u8 dtype (0 = f32),
// u8 ndim, ndim x u32 LE dims, row-major f32 LE payload.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "awracle/tensor.hpp"

namespace awracle {

inline constexpr std::uint32_t kAwtfVersion = 1;

void write_awtf(std::ostream& out, const Tensor32& tensor);
Tensor32 read_awtf(std::istream& in);

void save_awtf(const std::filesystem::path& path, const Tensor32& tensor);
Tensor32 load_awtf(const std::filesystem::path& path);

/// Raw little-endian f32 payload bytes, as stored after the AWTF header.
std::vector<std::uint8_t> payload_bytes(const Tensor32& tensor);

namespace le {
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
std::uint16_t get_u16(std::istream& in);
std::uint32_t get_u32(std::istream& in);
}  // namespace le

}  // namespace awracle
