// Copyright (C) 2026 the mrpweights authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef MRPW_STATS_HPP_
#define MRPW_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace mrpw {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// Sample variance (denominator n-1); 0 for fewer than two points.
inline double variance(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(n - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

// Population standard deviation (denominator n).
inline double population_sd(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(n));
}

// Linear-interpolation quantile on a copy of the data (R type 7).
inline double quantile(std::span<const double> x, double p) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    if (s.empty()) return 0.0;
    if (s.size() == 1) return s[0];
    const double h = p * static_cast<double>(s.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double f = h - static_cast<double>(lo);
    return s[lo] + f * (s[hi] - s[lo]);
}

inline double median(std::span<const double> x) { return quantile(x, 0.5); }

inline double normal_logpdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * kLogTwoPi;
}

inline double normal_cdf(double x, double mu = 0.0, double sigma = 1.0) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

inline double half_normal_cdf(double x, double sigma = 1.0) {
    return x <= 0.0 ? 0.0 : std::erf(x / (sigma * std::sqrt(2.0)));
}

inline double half_cauchy_cdf(double x, double scale) {
    return x <= 0.0 ? 0.0 : (2.0 / M_PI) * std::atan(x / scale);
}

inline double invlogit(double x) {
    // Stable on both tails.
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace mrpw

#endif  // MRPW_STATS_HPP_
