#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace bartsel {

inline double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * d * d / var;
}

inline double mean_of(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean of empty vector");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// divisor n-1
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("sample variance needs n >= 2");
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

// Regularized lower incomplete gamma P(a, x), series/continued-fraction split.
inline double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_p domain");
    if (x == 0.0) return 0.0;
    const double log_pre = a * std::log(x) - x - std::lgamma(a);
    if (x < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < 500; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
        }
        return std::exp(log_pre) * sum;
    }
    // Lentz continued fraction for Q(a, x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 - std::exp(log_pre) * h;
}

inline double chi_squared_cdf(double x, double df) { return gamma_p(0.5 * df, 0.5 * x); }

// quantile by bisection; df and p are validated
inline double chi_squared_quantile(double p, double df) {
    if (!(df > 0.0) || !(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("chi_squared_quantile domain");
    double lo = 0.0, hi = df;
    while (chi_squared_cdf(hi, df) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (chi_squared_cdf(mid, df) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace bartsel
