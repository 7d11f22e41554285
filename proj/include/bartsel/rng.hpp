#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace bartsel {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic generator: standardized mt19937_64 core with hand-rolled
// transforms, so draws are identical across platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent stream for parallel task `index` under `master` seed.
    static Rng stream(std::uint64_t master, std::uint64_t index) {
        return Rng(splitmix64(splitmix64(master) ^ splitmix64(index + 0x9E3779B97F4A7C15ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer on [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // Lemire's unbiased bounded draw
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    double normal() {
        // Box-Muller, no cached spare
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Marsaglia-Tsang; shape < 1 handled by the boost relation.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

    // index with probability weights[i] / sum(weights); weights enter normalized
    std::size_t discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("negative weight");
            total += w;
        }
        if (!(total > 0.0)) throw std::invalid_argument("weights sum to zero");
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i] / total;
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace bartsel
