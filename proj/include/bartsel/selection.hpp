#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"
#include "bartsel/inclusion.hpp"
#include "bartsel/model.hpp"
#include "bartsel/parallel.hpp"
#include "bartsel/rng.hpp"
#include "bartsel/sampler.hpp"
#include "bartsel/split_prior.hpp"

namespace bartsel {

enum class Strategy { kLocal, kGlobalMax, kGlobalSe, kCvBest };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::kLocal: return "local";
        case Strategy::kGlobalMax: return "global-max";
        case Strategy::kGlobalSe: return "global-se";
        case Strategy::kCvBest: return "cv";
    }
    return "?";
}

// P x K inclusion proportions from permuted-response runs.
struct NullProportionMatrix {
    std::vector<std::vector<double>> rows;

    std::size_t p() const { return rows.size(); }
    std::size_t k() const { return rows.empty() ? 0 : rows.front().size(); }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> col(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][j];
        return col;
    }
};

struct CvCellError {
    Strategy strategy;
    double c = 0.0;
    double total_sq_error = 0.0;
};

struct SelectionResult {
    Strategy strategy = Strategy::kLocal;
    std::vector<double> proportions;     // K
    std::vector<double> thresholds;      // K; the global-max scalar is broadcast
    std::vector<std::size_t> selected;   // exactly { k : proportions[k] > thresholds[k] }
    double alpha = 0.05;

    // run metadata, enough to replay the run
    std::size_t permutations = 0;
    std::uint64_t master_seed = 0;
    std::size_t perm_restarts = 1;
    std::size_t unpermuted_restarts = 1;
    double prior_c = 0.0;
    double c_star = std::numeric_limits<double>::quiet_NaN();
    double global_max_threshold = std::numeric_limits<double>::quiet_NaN();
    Strategy cv_winner = Strategy::kLocal;
    double cv_winner_c = 0.0;
    std::vector<CvCellError> cv_errors;
    NullProportionMatrix null_matrix;  // the null the thresholds came from
};

// Shared quantile convention for all three strategies: the smallest order
// statistic whose empirical CDF reaches `level`.
inline double empirical_quantile(std::vector<double> values, double level) {
    if (values.empty()) throw ValidationError("quantile of empty sample");
    if (!(level > 0.0) || !(level <= 1.0)) throw ValidationError("quantile level outside (0, 1]");
    std::sort(values.begin(), values.end());
    const double target = level * static_cast<double>(values.size());
    auto idx = static_cast<std::size_t>(std::ceil(target - 1e-12));
    if (idx < 1) idx = 1;
    if (idx > values.size()) idx = values.size();
    return values[idx - 1];
}

inline std::vector<std::size_t> select_indices(std::span<const double> p, std::span<const double> thresholds) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k] > thresholds[k]) out.push_back(k);
    return out;
}

namespace detail {

inline void check_threshold_inputs(std::span<const double> p, const NullProportionMatrix& null_matrix,
                                   double alpha) {
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
    if (null_matrix.p() < 1) throw ValidationError("null matrix needs at least one permutation row");
    if (null_matrix.k() != p.size()) throw ValidationError("null matrix width mismatch");
}

}  // namespace detail

// Per-variable 1-alpha quantile of that variable's own null column.
inline SelectionResult threshold_local(std::span<const double> p, const NullProportionMatrix& null_matrix,
                                       double alpha) {
    detail::check_threshold_inputs(p, null_matrix, alpha);
    SelectionResult res;
    res.strategy = Strategy::kLocal;
    res.alpha = alpha;
    res.proportions.assign(p.begin(), p.end());
    res.permutations = null_matrix.p();
    res.thresholds.resize(p.size());
    for (std::size_t k = 0; k < p.size(); ++k)
        res.thresholds[k] = empirical_quantile(null_matrix.column(k), 1.0 - alpha);
    res.selected = select_indices(p, res.thresholds);
    return res;
}

// 1-alpha quantile of the per-permutation maximum proportion.
inline SelectionResult threshold_global_max(std::span<const double> p, const NullProportionMatrix& null_matrix,
                                            double alpha) {
    detail::check_threshold_inputs(p, null_matrix, alpha);
    std::vector<double> maxima(null_matrix.p());
    for (std::size_t i = 0; i < null_matrix.p(); ++i)
        maxima[i] = *std::max_element(null_matrix.rows[i].begin(), null_matrix.rows[i].end());
    SelectionResult res;
    res.strategy = Strategy::kGlobalMax;
    res.alpha = alpha;
    res.proportions.assign(p.begin(), p.end());
    res.permutations = null_matrix.p();
    res.global_max_threshold = empirical_quantile(std::move(maxima), 1.0 - alpha);
    res.thresholds.assign(p.size(), res.global_max_threshold);
    res.selected = select_indices(p, res.thresholds);
    return res;
}

// Thresholds m_k + C* s_k where C* is the smallest multiplier giving every
// column strictly more than 1-alpha empirical coverage. C* is exact: per
// column the binding candidate is the order statistic at the first count
// exceeding (1-alpha) P, so C* is the largest of those per-column candidates
// (clamped at zero; zero-spread columns are covered at any C).
inline SelectionResult threshold_global_se(std::span<const double> p, const NullProportionMatrix& null_matrix,
                                           double alpha) {
    detail::check_threshold_inputs(p, null_matrix, alpha);
    const std::size_t n_perm = null_matrix.p();
    if (n_perm < 2) throw ValidationError("global-se threshold needs at least two permutations");
    const auto cover_count =
        static_cast<std::size_t>(std::floor((1.0 - alpha) * static_cast<double>(n_perm) + 1e-12)) + 1;

    SelectionResult res;
    res.strategy = Strategy::kGlobalSe;
    res.alpha = alpha;
    res.proportions.assign(p.begin(), p.end());
    res.permutations = n_perm;

    const std::size_t k_vars = p.size();
    std::vector<double> means(k_vars), sds(k_vars);
    double c_star = 0.0;
    for (std::size_t k = 0; k < k_vars; ++k) {
        auto col = null_matrix.column(k);
        means[k] = mean_of(col);
        const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
        // a constant column is covered at any C; rounding in the mean can
        // leave sample_sd at noise scale, so test constancy exactly
        if (*mx == *mn) {
            sds[k] = 0.0;
            means[k] = *mn;
            continue;
        }
        sds[k] = sample_sd(col);
        std::sort(col.begin(), col.end());
        c_star = std::max(c_star, (col[cover_count - 1] - means[k]) / sds[k]);
    }
    res.c_star = c_star;
    res.thresholds.resize(k_vars);
    for (std::size_t k = 0; k < k_vars; ++k) res.thresholds[k] = means[k] + c_star * sds[k];
    res.selected = select_indices(p, res.thresholds);
    return res;
}

struct PermutationOptions {
    std::size_t permutations = 100;
    std::size_t restarts = 1;  // restarts per permuted run
    std::size_t workers = 1;
};

// Null distribution of inclusion proportions: refit on uniformly permuted
// responses with the split prior reset to uniform. Predictors are never
// touched, preserving dependence among them.
inline NullProportionMatrix permutation_null(const Dataset& data, const Hyperparams& hp,
                                             const PermutationOptions& opts, std::uint64_t master_seed) {
    if (opts.permutations < 1) throw ValidationError("need at least one permutation");
    data.validate();
    NullProportionMatrix null_matrix;
    null_matrix.rows.assign(opts.permutations, {});
    const auto weights = uniform_weights(data.k());
    Hyperparams perm_hp = hp;
    perm_hp.n_restarts = opts.restarts;
    parallel_for(opts.permutations, opts.workers, [&](std::size_t i) {
        Rng shuffle_rng = Rng::stream(master_seed, 2 * i);
        std::vector<double> permuted = data.response;
        shuffle_rng.shuffle(permuted);
        const Dataset permuted_data = data.with_response(std::move(permuted));
        const std::uint64_t chain_seed = Rng::stream(master_seed, 2 * i + 1).next_u64();
        null_matrix.rows[i] =
            restart_averaged_proportions(permuted_data, perm_hp, weights, chain_seed, 1);
    });
    return null_matrix;
}

struct StrategyRunOptions {
    double alpha = 0.05;
    std::size_t permutations = 100;
    std::size_t perm_restarts = 1;
    std::size_t workers = 1;
};

namespace detail {

constexpr std::uint64_t kUnpermutedStream = 0x1001;
constexpr std::uint64_t kNullStream = 0x1002;
constexpr std::uint64_t kFoldStream = 0x1003;
constexpr std::uint64_t kCvFinalStream = 0x1004;

inline SelectionResult apply_strategy(Strategy strategy, std::span<const double> p,
                                      const NullProportionMatrix& null_matrix, double alpha) {
    switch (strategy) {
        case Strategy::kLocal: return threshold_local(p, null_matrix, alpha);
        case Strategy::kGlobalMax: return threshold_global_max(p, null_matrix, alpha);
        case Strategy::kGlobalSe: return threshold_global_se(p, null_matrix, alpha);
        case Strategy::kCvBest: break;
    }
    throw ValidationError("apply_strategy: not a direct strategy");
}

}  // namespace detail

inline std::uint64_t cv_final_seed(std::uint64_t master_seed) {
    return Rng::stream(master_seed, detail::kCvFinalStream).next_u64();
}

// One full selection pass: restart-averaged proportions on the real response,
// a permutation null, one thresholding strategy.
inline SelectionResult run_strategy(const Dataset& data, const Hyperparams& hp,
                                    std::span<const double> split_weights, Strategy strategy,
                                    const StrategyRunOptions& opts, std::uint64_t master_seed) {
    const std::uint64_t unpermuted_seed = Rng::stream(master_seed, detail::kUnpermutedStream).next_u64();
    const std::uint64_t null_seed = Rng::stream(master_seed, detail::kNullStream).next_u64();
    const auto proportions =
        restart_averaged_proportions(data, hp, split_weights, unpermuted_seed, opts.workers);
    const auto null_matrix = permutation_null(
        data, hp, {.permutations = opts.permutations, .restarts = opts.perm_restarts, .workers = opts.workers},
        null_seed);
    SelectionResult res = detail::apply_strategy(strategy, proportions, null_matrix, opts.alpha);
    res.master_seed = master_seed;
    res.perm_restarts = opts.perm_restarts;
    res.unpermuted_restarts = hp.n_restarts;
    res.null_matrix = null_matrix;
    return res;
}

inline std::vector<double> default_c_grid() { return {0.0, 0.5, 1.0, 2.0, 4.0, 10000.0}; }

struct CvOptions {
    std::size_t folds = 5;
    double alpha = 0.05;
    std::size_t permutations = 100;
    std::size_t perm_restarts = 1;
    std::size_t workers = 1;
    std::vector<Strategy> strategies = {Strategy::kLocal, Strategy::kGlobalMax, Strategy::kGlobalSe};
};

namespace detail {

// Deterministic near-equal fold assignment: shuffled indices dealt round-robin.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds,
                                                        std::uint64_t master_seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::stream(master_seed, kFoldStream);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out(folds);
    for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(order[i]);
    return out;
}

// Holdout predictions from a refit on the selected columns; an empty
// selection falls back to the training-response mean (the null model).
inline double holdout_sq_error(const Dataset& train, const Dataset& test,
                               std::span<const std::size_t> selected, const Hyperparams& hp,
                               std::uint64_t seed) {
    double err = 0.0;
    if (selected.empty()) {
        const double mean = mean_of(train.response);
        for (double y : test.response) err += (y - mean) * (y - mean);
        return err;
    }
    const Dataset train_sel = train.select_columns(selected);
    const Dataset test_sel = test.select_columns(selected);
    auto samples = run_chain(train_sel, hp, uniform_weights(train_sel.k()), seed);
    for (std::size_t i = 0; i < test_sel.n(); ++i) {
        const auto x = test_sel.row(i);
        const double pred = posterior_mean_prediction(samples, x);
        err += (test_sel.response[i] - pred) * (test_sel.response[i] - pred);
    }
    return err;
}

}  // namespace detail

// Cross-validated choice among thresholding strategies and prior influence
// values: every (strategy, c) pair competes on aggregate holdout L2 error;
// the winner is rerun on the full data.
inline SelectionResult select_cv_best(const Dataset& data, const Hyperparams& hp,
                                      const std::optional<PriorSpec>& prior_spec,
                                      std::vector<double> c_grid, const CvOptions& opts,
                                      std::uint64_t master_seed) {
    data.validate();
    if (opts.folds < 2) throw ValidationError("cross-validation needs at least two folds");
    if (opts.strategies.empty()) throw ValidationError("no strategies to compare");
    if (c_grid.empty()) c_grid = prior_spec ? default_c_grid() : std::vector<double>{0.0};
    if (prior_spec && prior_spec->probabilities.size() != data.k())
        throw ValidationError("prior spec length mismatch");

    const auto folds = detail::make_folds(data.n(), opts.folds, master_seed);
    const std::size_t n_strategies = opts.strategies.size();
    const std::size_t n_cells = n_strategies * c_grid.size();
    std::vector<double> total_error(n_cells, 0.0);

    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train_rows;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
        const Dataset train = data.subset_rows(train_rows);
        const Dataset test = data.subset_rows(folds[f]);

        // the null is weight-free (uniform reset), so it is shared across c
        const std::uint64_t null_seed = Rng::stream(master_seed, 0x2000 + f).next_u64();
        const auto null_matrix = permutation_null(
            train, hp,
            {.permutations = opts.permutations, .restarts = opts.perm_restarts, .workers = opts.workers},
            null_seed);

        for (std::size_t ci = 0; ci < c_grid.size(); ++ci) {
            std::vector<double> weights;
            if (prior_spec) {
                PriorSpec spec = *prior_spec;
                spec.c = c_grid[ci];
                weights = compute_weights(spec);
            } else {
                weights = uniform_weights(data.k());
            }
            const std::uint64_t prop_seed =
                Rng::stream(master_seed, 0x3000 + f * c_grid.size() + ci).next_u64();
            const auto proportions =
                restart_averaged_proportions(train, hp, weights, prop_seed, opts.workers);
            for (std::size_t si = 0; si < n_strategies; ++si) {
                const auto sel =
                    detail::apply_strategy(opts.strategies[si], proportions, null_matrix, opts.alpha);
                const std::uint64_t refit_seed =
                    Rng::stream(master_seed, 0x4000 + (f * c_grid.size() + ci) * n_strategies + si).next_u64();
                total_error[si * c_grid.size() + ci] +=
                    detail::holdout_sq_error(train, test, sel.selected, hp, refit_seed);
            }
        }
    }

    std::size_t best_cell = 0;
    for (std::size_t cell = 1; cell < n_cells; ++cell)
        if (total_error[cell] < total_error[best_cell]) best_cell = cell;
    const Strategy winner = opts.strategies[best_cell / c_grid.size()];
    const double winner_c = c_grid[best_cell % c_grid.size()];

    std::vector<double> final_weights;
    if (prior_spec) {
        PriorSpec spec = *prior_spec;
        spec.c = winner_c;
        final_weights = compute_weights(spec);
    } else {
        final_weights = uniform_weights(data.k());
    }
    SelectionResult res = run_strategy(data, hp, final_weights, winner,
                                       {.alpha = opts.alpha,
                                        .permutations = opts.permutations,
                                        .perm_restarts = opts.perm_restarts,
                                        .workers = opts.workers},
                                       cv_final_seed(master_seed));
    res.strategy = Strategy::kCvBest;
    res.cv_winner = winner;
    res.cv_winner_c = winner_c;
    res.prior_c = winner_c;
    res.master_seed = master_seed;
    for (std::size_t si = 0; si < n_strategies; ++si)
        for (std::size_t ci = 0; ci < c_grid.size(); ++ci)
            res.cv_errors.push_back(
                {opts.strategies[si], c_grid[ci], total_error[si * c_grid.size() + ci]});
    return res;
}

}  // namespace bartsel
