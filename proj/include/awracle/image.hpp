// SPDX-License-Identifier: Apache-2.0
//
// Non-differentiable helpers for [3 x H x W] float images in [0, 1].
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "awracle/tensor.hpp"

namespace awracle {

using Image = Tensor32;

Image make_image(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);

/// Bilinear resize with half-pixel centers (no antialiasing).
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
Image crop(const Image& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
Image flip_horizontal(const Image& image);
Image clamp01(const Image& image);
/// Reflect-pads bottom/right so both sides become multiples of `multiple`.
Image pad_reflect_to_multiple(const Image& image, std::size_t multiple);

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
/// Loads `.ppm` (P6) or AWTF images, chosen by file magic.
Image load_image(const std::filesystem::path& path);
/// Writes AWTF unless the extension is `.ppm`.
void save_image(const std::filesystem::path& path, const Image& image);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t value);

}  // namespace awracle
