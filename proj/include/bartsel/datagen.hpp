#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"
#include "bartsel/rng.hpp"

namespace bartsel {

enum class ScenarioKind { kNull, kLinear, kFriedman };

// One simulation cell. Null: everything independent standard normal.
// Linear: y = sum of the first p0 predictors plus noise. Friedman: the
// five-variable benchmark surface plus noise.
struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::kNull;
    std::size_t n = 250;
    std::size_t p = 20;
    std::size_t p0 = 0;
    double sigma_sq = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 2) throw ValidationError("scenario needs n >= 2");
        if (p < 1) throw ValidationError("scenario needs p >= 1");
        if (p0 > p) throw ValidationError("p0 cannot exceed p");
        if (!(sigma_sq >= 0.0)) throw ValidationError("sigma_sq must be nonnegative");
        if (kind == ScenarioKind::kNull && p0 != 0) throw ValidationError("null scenario has no true variables");
        if (kind == ScenarioKind::kFriedman && p < 5) throw ValidationError("friedman scenario needs p >= 5");
    }
};

struct GeneratedData {
    Dataset dataset;
    std::vector<std::size_t> true_set;
};

namespace detail {

inline std::vector<std::string> column_names(std::size_t p) {
    std::vector<std::string> names(p);
    for (std::size_t j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
    return names;
}

}  // namespace detail

inline Dataset gen_null(std::size_t n, std::size_t p, std::uint64_t seed) {
    ScenarioSpec{ScenarioKind::kNull, n, p, 0, 1.0, seed}.validate();
    Rng rng(seed);
    Dataset d;
    d.names = detail::column_names(p);
    d.predictors.assign(p, std::vector<double>(n));
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) d.predictors[j][i] = rng.normal();
    d.response.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.response[i] = rng.normal();
    return d;
}

inline GeneratedData gen_linear(std::size_t n, std::size_t p, std::size_t p0, double sigma_sq,
                                std::uint64_t seed) {
    ScenarioSpec{ScenarioKind::kLinear, n, p, p0, sigma_sq, seed}.validate();
    Rng rng(seed);
    GeneratedData out;
    out.dataset.names = detail::column_names(p);
    out.dataset.predictors.assign(p, std::vector<double>(n));
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) out.dataset.predictors[j][i] = rng.normal();
    out.dataset.response.assign(n, 0.0);
    const double sigma = std::sqrt(sigma_sq);
    for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < p0; ++j) y += out.dataset.predictors[j][i];
        out.dataset.response[i] = y + sigma * rng.normal();
    }
    for (std::size_t j = 0; j < p0; ++j) out.true_set.push_back(j);
    return out;
}

inline double friedman_function(std::span<const double> x) {
    return 10.0 * std::sin(M_PI * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4];
}

inline GeneratedData gen_friedman(std::size_t n, std::size_t p, double sigma_sq, std::uint64_t seed) {
    ScenarioSpec{ScenarioKind::kFriedman, n, p, 5, sigma_sq, seed}.validate();
    Rng rng(seed);
    GeneratedData out;
    out.dataset.names = detail::column_names(p);
    out.dataset.predictors.assign(p, std::vector<double>(n));
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) out.dataset.predictors[j][i] = rng.uniform();
    out.dataset.response.resize(n);
    const double sigma = std::sqrt(sigma_sq);
    std::vector<double> x(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 5; ++j) x[j] = out.dataset.predictors[j][i];
        out.dataset.response[i] = friedman_function(x) + sigma * rng.normal();
    }
    out.true_set = {0, 1, 2, 3, 4};
    return out;
}

inline GeneratedData generate(const ScenarioSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case ScenarioKind::kNull: return {gen_null(spec.n, spec.p, spec.seed), {}};
        case ScenarioKind::kLinear: return gen_linear(spec.n, spec.p, spec.p0, spec.sigma_sq, spec.seed);
        case ScenarioKind::kFriedman: return gen_friedman(spec.n, spec.p, spec.sigma_sq, spec.seed);
    }
    throw ValidationError("unknown scenario kind");
}

}  // namespace bartsel
