#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bartsel/errors.hpp"

namespace bartsel {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
};

inline ConfusionCounts confusion(std::span<const std::size_t> selected, std::span<const std::size_t> true_set,
                                 std::size_t p) {
    std::vector<bool> sel(p, false), tru(p, false);
    for (std::size_t k : selected) {
        if (k >= p) throw ValidationError("selected index out of range");
        sel[k] = true;
    }
    for (std::size_t k : true_set) {
        if (k >= p) throw ValidationError("true-set index out of range");
        tru[k] = true;
    }
    ConfusionCounts c;
    for (std::size_t k = 0; k < p; ++k) {
        if (sel[k] && tru[k]) ++c.tp;
        else if (sel[k]) ++c.fp;
        else if (tru[k]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// 0/0 conventions: precision 0 when nothing selected, recall 0 when the true
// set is empty, f1 0 when precision + recall is 0.
inline PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
    PrecisionRecallF1 out;
    out.precision = (c.tp + c.fp == 0) ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    out.recall = (c.tp + c.fn == 0) ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    out.f1 = (out.precision + out.recall == 0.0)
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

inline double rmse(std::span<const double> predictions, std::span<const double> actual) {
    if (predictions.size() != actual.size() || predictions.empty())
        throw ValidationError("rmse needs matching non-empty vectors");
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - actual[i];
        sum_sq += d * d;
    }
    return std::sqrt(sum_sq / static_cast<double>(predictions.size()));
}

inline double rmse_reduction_per_predictor(double rmse_null, double rmse_method, std::size_t num_predictors) {
    if (num_predictors == 0) throw ValidationError("undefined metric: no predictors selected");
    return (rmse_null - rmse_method) / static_cast<double>(num_predictors);
}

// Nested dispersion of p_ijk (dataset i, run j, variable k), reported as
// standard deviations with population divisors 1/J, 1/I, 1/K:
//   s_ik: run-to-run spread within a dataset,
//   s_k:  dataset-to-dataset spread of the run means,
//   s:    spread of the per-variable grand means.
struct NestedVarianceDecomposition {
    std::vector<std::vector<double>> s_ik;  // I x K
    std::vector<double> s_k;                // K
    double s = 0.0;
    std::vector<double> variable_means;     // K, the p-bar_{..k}
    double grand_mean = 0.0;                // p-bar_{...}
};

inline NestedVarianceDecomposition nested_variance_decomposition(
    const std::vector<std::vector<std::vector<double>>>& p_ijk) {
    const std::size_t n_datasets = p_ijk.size();
    if (n_datasets == 0) throw ValidationError("empty decomposition input");
    const std::size_t n_runs = p_ijk.front().size();
    if (n_runs == 0) throw ValidationError("decomposition needs at least one run");
    const std::size_t n_vars = p_ijk.front().front().size();
    if (n_vars == 0) throw ValidationError("decomposition needs at least one variable");
    for (const auto& runs : p_ijk) {
        if (runs.size() != n_runs) throw ValidationError("ragged decomposition input");
        for (const auto& vars : runs)
            if (vars.size() != n_vars) throw ValidationError("ragged decomposition input");
    }

    NestedVarianceDecomposition out;
    std::vector<std::vector<double>> dataset_means(n_datasets, std::vector<double>(n_vars, 0.0));
    out.s_ik.assign(n_datasets, std::vector<double>(n_vars, 0.0));
    for (std::size_t i = 0; i < n_datasets; ++i) {
        for (std::size_t k = 0; k < n_vars; ++k) {
            double m = 0.0;
            for (std::size_t j = 0; j < n_runs; ++j) m += p_ijk[i][j][k];
            m /= static_cast<double>(n_runs);
            dataset_means[i][k] = m;
            double v = 0.0;
            for (std::size_t j = 0; j < n_runs; ++j) v += (p_ijk[i][j][k] - m) * (p_ijk[i][j][k] - m);
            out.s_ik[i][k] = std::sqrt(v / static_cast<double>(n_runs));
        }
    }
    out.variable_means.assign(n_vars, 0.0);
    for (std::size_t k = 0; k < n_vars; ++k) {
        for (std::size_t i = 0; i < n_datasets; ++i) out.variable_means[k] += dataset_means[i][k];
        out.variable_means[k] /= static_cast<double>(n_datasets);
    }
    out.s_k.assign(n_vars, 0.0);
    for (std::size_t k = 0; k < n_vars; ++k) {
        double v = 0.0;
        for (std::size_t i = 0; i < n_datasets; ++i)
            v += (dataset_means[i][k] - out.variable_means[k]) * (dataset_means[i][k] - out.variable_means[k]);
        out.s_k[k] = std::sqrt(v / static_cast<double>(n_datasets));
    }
    out.grand_mean = 0.0;
    for (double m : out.variable_means) out.grand_mean += m;
    out.grand_mean /= static_cast<double>(n_vars);
    double v = 0.0;
    for (double m : out.variable_means) v += (m - out.grand_mean) * (m - out.grand_mean);
    out.s = std::sqrt(v / static_cast<double>(n_vars));
    return out;
}

}  // namespace bartsel
