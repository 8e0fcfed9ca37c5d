// SPDX-License-Identifier: Apache-2.0
#include "awracle/metrics.hpp"

#include <cmath>

#include "awracle/errors.hpp"

namespace awracle {

namespace {

void check_pair(const Image& a, const Image& b, const char* what) {
    if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shapes differ (" + (a.defined() ? shape_str(a.shape()) : "?") +
                             " vs " + (b.defined() ? shape_str(b.shape()) : "?") + ")");
    }
}

}  // namespace

void CompensatedSum::add(double value) {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
        compensation_ += (sum_ - t) + value;
    } else {
        compensation_ += (value - t) + sum_;
    }
    sum_ = t;
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) throw UsageError("mean of an empty set");
    CompensatedSum s;
    for (double v : values) s.add(v);
    return s.value() / static_cast<double>(values.size());
}

double stddev_of(const std::vector<double>& values) {
    const double mu = mean_of(values);
    CompensatedSum s;
    for (double v : values) s.add((v - mu) * (v - mu));
    return std::sqrt(s.value() / static_cast<double>(values.size()));
}

double psnr(const Image& a, const Image& b, double max_val) {
    check_pair(a, b, "psnr");
    double total = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        total += d * d;
    }
    const double mse = total / static_cast<double>(a.numel());
    if (mse < 1e-12) return kPsnrCap;
    return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Image& a, const Image& b) {
    check_pair(a, b, "ssim");
    if (a.ndim() != 3) throw DimensionError("ssim: expected [C x H x W] images");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const std::size_t channels = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < kWin || w < kWin) {
        throw DimensionError("ssim: images must be at least 11x11, got " + shape_str(a.shape()));
    }
    double kernel[kWin][kWin];
    double norm = 0.0;
    for (int y = 0; y < kWin; ++y) {
        for (int x = 0; x < kWin; ++x) {
            const double dy = y - kWin / 2, dx = x - kWin / 2;
            kernel[y][x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
            norm += kernel[y][x];
        }
    }
    const std::size_t oh = h - kWin + 1, ow = w - kWin + 1;
    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        const float* pa = a.data().data() + c * h * w;
        const float* pb = b.data().data() + c * h * w;
        double channel_sum = 0.0;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int y = 0; y < kWin; ++y) {
                    for (int x = 0; x < kWin; ++x) {
                        const double k = kernel[y][x] / norm;
                        const double va = pa[(oy + y) * w + ox + x], vb = pb[(oy + y) * w + ox + x];
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
                channel_sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            }
        }
        total += channel_sum / static_cast<double>(oh * ow);
    }
    return total / static_cast<double>(channels);
}

}  // namespace awracle
