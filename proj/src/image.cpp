// SPDX-License-Identifier: Apache-2.0
#include "awracle/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "awracle/awtf.hpp"

namespace awracle {

namespace {

void require_image(const Image& image, const char* op) {
    if (!image.defined() || image.ndim() != 3) {
        throw DimensionError(std::string(op) + ": expected a [C x H x W] image, got " +
                             (image.defined() ? shape_str(image.shape()) : "<undefined>"));
    }
}

}  // namespace

Image make_image(std::size_t channels, std::size_t height, std::size_t width, float fill) {
    return Image::full({channels, height, width}, fill);
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    require_image(image, "resize_bilinear");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h == height && w == width) return image.detach();
    std::vector<float> out(c * height * width);
    const double sy = double(h) / double(height), sx = double(w) / double(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - double(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - double(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                auto px = [&](std::size_t yy, std::size_t xx) { return double(image[(ch * h + yy) * w + xx]); };
                const double top = px(y0, x0) * (1 - wx) + px(y0, x1) * wx;
                const double bottom = px(y1, x0) * (1 - wx) + px(y1, x1) * wx;
                out[(ch * height + y) * width + x] = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return Image({c, height, width}, std::move(out));
}

Image crop(const Image& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    require_image(image, "crop");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (top + height > h || left + width > w) {
        throw DimensionError("crop window exceeds image " + shape_str(image.shape()));
    }
    std::vector<float> out(c * height * width);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < height; ++y) {
            const auto src = image.data().begin() + (ch * h + top + y) * w + left;
            std::copy_n(src, width, out.begin() + (ch * height + y) * width);
        }
    }
    return Image({c, height, width}, std::move(out));
}

Image flip_horizontal(const Image& image) {
    require_image(image, "flip_horizontal");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::vector<float> out(image.numel());
    for (std::size_t row = 0; row < c * h; ++row) {
        for (std::size_t x = 0; x < w; ++x) out[row * w + x] = image[row * w + (w - 1 - x)];
    }
    return Image(image.shape(), std::move(out));
}

Image clamp01(const Image& image) {
    std::vector<float> out(image.data().begin(), image.data().end());
    for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
    return Image(image.shape(), std::move(out));
}

Image pad_reflect_to_multiple(const Image& image, std::size_t multiple) {
    require_image(image, "pad_reflect_to_multiple");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const std::size_t ph = (h + multiple - 1) / multiple * multiple;
    const std::size_t pw = (w + multiple - 1) / multiple * multiple;
    if (ph == h && pw == w) return image.detach();
    auto reflect = [](std::size_t i, std::size_t n) {
        if (n == 1) return std::size_t{0};
        const std::size_t period = 2 * (n - 1);
        i %= period;
        return i < n ? i : period - i;
    };
    std::vector<float> out(c * ph * pw);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < ph; ++y) {
            for (std::size_t x = 0; x < pw; ++x) {
                out[(ch * ph + y) * pw + x] = image[(ch * h + reflect(y, h)) * w + reflect(x, w)];
            }
        }
    }
    return Image({c, ph, pw}, std::move(out));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    require_image(image, "write_ppm");
    if (image.dim(0) != 3) throw DimensionError("write_ppm needs 3 channels");
    const std::size_t h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P6\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> pixels(h * w * 3);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float v = std::clamp(image[(ch * h + y) * w + x], 0.0f, 1.0f);
                pixels[(y * w + x) * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    auto next_token = [&]() {
        std::string token;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!token.empty()) break;
                continue;
            }
            token += ch;
        }
        return token;
    };
    if (next_token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(next_token());
        h = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PPM header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
        throw FormatError(path.string() + ": unsupported PPM geometry or maxval");
    }
    std::vector<unsigned char> pixels(h * w * 3);
    if (!in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw FormatError(path.string() + ": truncated PPM payload");
    }
    std::vector<float> out(3 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                out[(ch * h + y) * w + x] = float(pixels[(y * w + x) * 3 + ch]) / float(maxval);
            }
        }
    }
    return Image({3, h, w}, std::move(out));
}

Image load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    in.close();
    if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
    auto image = load_awtf(path);
    require_image(image, "load_image");
    return image;
}

void save_image(const std::filesystem::path& path, const Image& image) {
    if (path.extension() == ".ppm") {
        write_ppm(path, image);
    } else {
        save_awtf(path, image);
    }
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace awracle
