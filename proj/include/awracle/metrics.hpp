// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "awracle/image.hpp"

namespace awracle {

inline constexpr double kPsnrCap = 120.0;

/// 10 log10(max^2 / MSE) in dB; kPsnrCap when MSE < 1e-12.
double psnr(const Image& a, const Image& b, double max_val = 1.0);

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// data range 1, over valid window positions; per channel, then averaged.
double ssim(const Image& a, const Image& b);

/// Neumaier-compensated running sum, so means do not depend on the order
/// in which per-sample values arrive.
class CompensatedSum {
   public:
    void add(double value);
    double value() const { return sum_ + compensation_; }

   private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

double mean_of(const std::vector<double>& values);
/// Population standard deviation.
double stddev_of(const std::vector<double>& values);

}  // namespace awracle
