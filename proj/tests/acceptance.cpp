// Acceptance suite: one line per criterion, nonzero exit when any fail.
// Criteria numbers can be passed as arguments; default runs all.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bartsel/datagen.hpp"
#include "bartsel/inclusion.hpp"
#include "bartsel/math.hpp"
#include "bartsel/metrics.hpp"
#include "bartsel/parallel.hpp"
#include "bartsel/sampler.hpp"
#include "bartsel/selection.hpp"
#include "bartsel/split_prior.hpp"

using namespace bartsel;

namespace {

struct Criterion {
    int number;
    const char* name;
    bool (*run)(std::string& detail);
};

double batch_mean_se(const std::vector<double>& draws, std::size_t batches = 20) {
    const std::size_t per = draws.size() / batches;
    std::vector<double> means(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t i = 0; i < per; ++i) means[b] += draws[b * per + i];
        means[b] /= static_cast<double>(per);
    }
    return sample_sd(means) / std::sqrt(static_cast<double>(batches));
}

double log_sc_inv_chisq(double x, double nu, double lambda) {
    return 0.5 * nu * std::log(0.5 * nu * lambda) - std::lgamma(0.5 * nu) -
           (1.0 + 0.5 * nu) * std::log(x) - 0.5 * nu * lambda / x;
}

// ---------------------------------------------------------------------------
// 1. Conjugate reduction: m = 1, no structure moves, the sampler must match a
//    quadrature oracle for the intercept-only semi-conjugate model.
bool criterion_conjugate(std::string& detail) {
    const std::size_t n = 100;
    Rng gen(2024);
    Dataset data;
    data.names = {"x1"};
    data.predictors.assign(1, std::vector<double>(n));
    data.response.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.predictors[0][i] = gen.normal();
        data.response[i] = gen.normal(3.0, 2.0);
    }

    Hyperparams hp;
    hp.m = 1;
    hp.disable_tree_moves = true;
    hp.n_burn = 200;
    hp.n_post = 2000;
    hp.n_restarts = 1;
    const auto samples = run_chain(data, hp, uniform_weights(1), 77);

    std::vector<double> mu_draws(samples.size()), sigma_draws = samples.sigma_sq_draws;
    for (std::size_t s = 0; s < samples.size(); ++s)
        mu_draws[s] = samples.forests[s].trees[0].node(0).leaf_value;

    // oracle on the standardized scale, built independently of the sampler:
    // range standardization, least-squares lambda calibration, then 1-D
    // quadrature over sigma^2 with the marginal density from a dense LDLT
    const auto [lo_it, hi_it] = std::minmax_element(data.response.begin(), data.response.end());
    const double shift = 0.5 * (*lo_it + *hi_it), scale = *hi_it - *lo_it;
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = (data.response[i] - shift) / scale;

    Eigen::MatrixXd design(n, 2);
    design.col(0).setOnes();
    for (std::size_t i = 0; i < n; ++i) design(static_cast<Eigen::Index>(i), 1) = data.predictors[0][i];
    const Eigen::VectorXd resid = y - design * design.colPivHouseholderQr().solve(y);
    const double sigma_hat_sq = resid.squaredNorm() / static_cast<double>(n - 1);
    const double nu = hp.nu;
    const double lambda = sigma_hat_sq * chi_squared_quantile(1.0 - hp.q, nu) / nu;
    const double sigma_mu = hp.sigma_mu();  // 0.25 for k_mu = 2, m = 1
    const double sigma_mu_sq = sigma_mu * sigma_mu;

    const double var_y = (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1);
    const int grid_points = 600;
    std::vector<double> grid(grid_points), log_w(grid_points);
    for (int g = 0; g < grid_points; ++g)
        grid[g] = var_y / 8.0 * std::exp(std::log(32.0) * g / (grid_points - 1.0));
    double max_log = -1e300;
    for (int g = 0; g < grid_points; ++g) {
        const double s2 = grid[g];
        Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(n, n, sigma_mu_sq);
        cov.diagonal().array() += s2;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
        const double log_det = ldlt.vectorD().array().log().sum();
        const double quad = y.dot(ldlt.solve(y));
        const double log_marginal =
            -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI) - 0.5 * log_det - 0.5 * quad;
        log_w[g] = log_sc_inv_chisq(s2, nu, lambda) + log_marginal;
        max_log = std::max(max_log, log_w[g]);
    }
    double z = 0.0, e_sigma = 0.0, e_mu = 0.0;
    const double s_y = y.sum();
    for (int g = 0; g < grid_points; ++g) {
        const double dx = 0.5 * (grid[std::min(g + 1, grid_points - 1)] - grid[std::max(g - 1, 0)]);
        const double w = std::exp(log_w[g] - max_log) * dx;
        const double mu_hat = (s_y / grid[g]) / (static_cast<double>(n) / grid[g] + 1.0 / sigma_mu_sq);
        z += w;
        e_sigma += w * grid[g];
        e_mu += w * mu_hat;
    }
    e_sigma /= z;
    e_mu /= z;

    const double mu_mean = mean_of(mu_draws);
    const double sigma_mean = mean_of(sigma_draws);
    const double mu_se = batch_mean_se(mu_draws);
    const double sigma_se = batch_mean_se(sigma_draws);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "mu %.5f vs %.5f (3se %.5f), sigma^2 %.6f vs %.6f (3se %.6f)", mu_mean, e_mu,
                  3.0 * mu_se, sigma_mean, e_sigma, 3.0 * sigma_se);
    detail = buf;
    return std::fabs(mu_mean - e_mu) <= 3.0 * mu_se && std::fabs(sigma_mean - e_sigma) <= 3.0 * sigma_se;
}

// ---------------------------------------------------------------------------
// 2. Tree-prior frequency under prior-only sampling.
bool criterion_tree_prior(std::string& detail) {
    const auto data = gen_null(250, 40, 555);
    Hyperparams hp;
    hp.m = 10;
    hp.prior_only = true;
    const auto weights = uniform_weights(40);
    auto [y_std, std_map] = standardize_response(data.response);
    auto state = init_chain_state(data, y_std, hp, calibrate_lambda(data, y_std, hp), 321);
    for (int it = 0; it < 500; ++it) gibbs_iteration(state, data, hp, weights);

    std::vector<std::size_t> internal_at(3, 0), present_at(3, 0);
    for (int it = 0; it < 2000; ++it) {  // 20,000 retained tree draws
        gibbs_iteration(state, data, hp, weights);
        for (const auto& tree : state.forest.trees)
            for (const auto& nd : tree.nodes()) {
                if (nd.depth > 2) continue;
                ++present_at[nd.depth];
                if (!nd.is_leaf()) ++internal_at[nd.depth];
            }
    }
    bool pass = true;
    std::string parts;
    for (int d = 0; d < 3; ++d) {
        const double target = 0.95 * std::pow(1.0 + d, -2.0);
        const double observed = static_cast<double>(internal_at[d]) / static_cast<double>(present_at[d]);
        char buf[96];
        std::snprintf(buf, sizeof buf, "d%d %.4f vs %.4f ", d, observed, target);
        parts += buf;
        pass = pass && std::fabs(observed - target) <= 0.02;
    }
    detail = parts + "(tolerance 0.02)";
    return pass;
}

// ---------------------------------------------------------------------------
// 3. Null calibration: simplex closure and per-variable grand mean near 1/K.
bool criterion_null_calibration(std::string& detail) {
    const std::size_t n_datasets = 20, k = 40;
    Hyperparams hp;  // defaults: m = 20, 5 restarts
    std::vector<std::vector<double>> averaged(n_datasets);
    parallel_for(n_datasets, default_workers(), [&](std::size_t i) {
        const auto data = gen_null(250, k, 7000 + i);
        averaged[i] = restart_averaged_proportions(data, hp, uniform_weights(k), 9000 + i, 1);
    });
    double worst_sum_err = 0.0, worst_mean_err = 0.0;
    for (const auto& v : averaged) {
        const double total = std::accumulate(v.begin(), v.end(), 0.0);
        worst_sum_err = std::max(worst_sum_err, std::fabs(total - 1.0));
    }
    for (std::size_t j = 0; j < k; ++j) {
        double m = 0.0;
        for (const auto& v : averaged) m += v[j];
        m /= static_cast<double>(n_datasets);
        worst_mean_err = std::max(worst_mean_err, std::fabs(m - 0.025));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max |sum-1| = %.2e (<=1e-10), max |mean_k - 0.025| = %.4f (<=0.005)",
                  worst_sum_err, worst_mean_err);
    detail = buf;
    return worst_sum_err <= 1e-10 && worst_mean_err <= 0.005;
}

// ---------------------------------------------------------------------------
// 4. Threshold nesting and exact C* vs dense grid.
bool criterion_nesting(std::string& detail) {
    Rng rng(4242);
    std::size_t instances = 0;
    double worst_gap = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t k = 1 + rng.uniform_int(12);
        const std::size_t p_rows = 2 + rng.uniform_int(40);
        NullProportionMatrix nm;
        nm.rows.assign(p_rows, std::vector<double>(k));
        std::vector<double> base(k);
        for (auto& b : base) b = 0.02 + rng.uniform();
        std::vector<bool> degenerate(k);
        for (std::size_t j = 0; j < k; ++j) degenerate[j] = rng.uniform() < 0.25;
        for (std::size_t i = 0; i < p_rows; ++i)
            for (std::size_t j = 0; j < k; ++j)
                nm.rows[i][j] = degenerate[j] ? base[j] : base[j] * (0.1 + rng.uniform());
        std::vector<double> props(k);
        for (auto& v : props) v = rng.uniform();
        const double alpha = 0.02 + 0.6 * rng.uniform();

        const auto local = threshold_local(props, nm, alpha);
        const auto gmax = threshold_global_max(props, nm, alpha);
        const auto gse = threshold_global_se(props, nm, alpha);
        const std::set<std::size_t> local_set(local.selected.begin(), local.selected.end());
        for (std::size_t j : gmax.selected)
            if (!local_set.count(j)) {
                detail = "global-max selection escaped the local set";
                return false;
            }
        for (std::size_t j : gse.selected)
            if (!local_set.count(j)) {
                detail = "global-se selection escaped the local set";
                return false;
            }

        // dense grid search for C*
        std::vector<double> means(k), sds(k);
        std::vector<bool> constant(k);
        for (std::size_t j = 0; j < k; ++j) {
            const auto col = nm.column(j);
            means[j] = mean_of(col);
            sds[j] = sample_sd(col);
            constant[j] =
                *std::max_element(col.begin(), col.end()) == *std::min_element(col.begin(), col.end());
        }
        const double step = 1e-4;
        double grid_c = -1.0;
        for (double c = 0.0; c < 1e4; c += step) {
            bool covered = true;
            for (std::size_t j = 0; j < k && covered; ++j) {
                if (constant[j]) continue;
                std::size_t count = 0;
                for (std::size_t i = 0; i < p_rows; ++i)
                    if (nm.rows[i][j] <= means[j] + c * sds[j]) ++count;
                covered = static_cast<double>(count) / static_cast<double>(p_rows) > 1.0 - alpha;
            }
            if (covered) {
                grid_c = c;
                break;
            }
        }
        if (grid_c < 0.0 || std::fabs(gse.c_star - grid_c) > step + 1e-12) {
            detail = "C* enumeration disagrees with grid search";
            return false;
        }
        worst_gap = std::max(worst_gap, std::fabs(gse.c_star - grid_c));
        ++instances;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu instances, nesting exact, max |C*-grid| = %.2e", instances,
                  worst_gap);
    detail = buf;
    return true;
}

// shared helper for the recovery criteria: one replicate's strategy scores
struct RecoveryScores {
    PrecisionRecallF1 by_strategy[3];  // local, global-max, global-se
    std::size_t selected_counts[3];
};

RecoveryScores run_recovery_replicate(const Dataset& data, const std::vector<std::size_t>& true_set,
                                      const Hyperparams& hp, std::span<const double> weights,
                                      std::size_t permutations, std::uint64_t seed) {
    const auto res = run_strategy(data, hp, weights, Strategy::kLocal,
                                  {.alpha = 0.05, .permutations = permutations, .perm_restarts = 1,
                                   .workers = default_workers()},
                                  seed);
    const auto gmax = threshold_global_max(res.proportions, res.null_matrix, 0.05);
    const auto gse = threshold_global_se(res.proportions, res.null_matrix, 0.05);
    RecoveryScores out;
    const SelectionResult* results[3] = {&res, &gmax, &gse};
    for (int s = 0; s < 3; ++s) {
        out.by_strategy[s] = precision_recall_f1(confusion(results[s]->selected, true_set, data.k()));
        out.selected_counts[s] = results[s]->selected.size();
    }
    return out;
}

// ---------------------------------------------------------------------------
// 5. Friedman recovery: global-se F1 at least 0.8 and at least local's.
bool criterion_friedman(std::string& detail) {
    const std::size_t reps = 10;
    Hyperparams hp;
    double f1_local = 0.0, f1_gse = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto g = gen_friedman(250, 25, 5.0, 110 + rep);
        const auto scores =
            run_recovery_replicate(g.dataset, g.true_set, hp, uniform_weights(25), 50, 2200 + rep);
        f1_local += scores.by_strategy[0].f1;
        f1_gse += scores.by_strategy[2].f1;
    }
    f1_local /= reps;
    f1_gse /= reps;
    char buf[128];
    std::snprintf(buf, sizeof buf, "global-se F1 %.3f (>=0.8), local F1 %.3f", f1_gse, f1_local);
    detail = buf;
    return f1_gse >= 0.8 && f1_gse >= f1_local;
}

// ---------------------------------------------------------------------------
// 6. Sparse linear recovery under global-max.
bool criterion_sparse_linear(std::string& detail) {
    const std::size_t reps = 10;
    Hyperparams hp;
    double f1 = 0.0, recall = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto g = gen_linear(250, 100, 5, 1.0, 310 + rep);
        const auto scores =
            run_recovery_replicate(g.dataset, g.true_set, hp, uniform_weights(100), 50, 3300 + rep);
        f1 += scores.by_strategy[1].f1;
        recall += scores.by_strategy[1].recall;
    }
    f1 /= reps;
    recall /= reps;
    char buf[128];
    std::snprintf(buf, sizeof buf, "global-max F1 %.3f (>=0.7), recall %.3f (>=0.8)", f1, recall);
    detail = buf;
    return f1 >= 0.7 && recall >= 0.8;
}

// ---------------------------------------------------------------------------
// 7. Informed priors: correct information must not hurt, incorrect must not
//    degrade much. The permutation null is weight-free and shared.
bool criterion_prior_effect(std::string& detail) {
    const std::size_t reps = 10, p = 100, p0 = 5;
    Hyperparams hp;
    double f1_uniform = 0.0, f1_correct = 0.0, f1_incorrect = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto g = gen_linear(250, p, p0, 5.0, 410 + rep);
        const std::uint64_t seed = 4400 + rep;
        const auto null_matrix = permutation_null(
            g.dataset, hp, {.permutations = 50, .restarts = 1, .workers = default_workers()},
            Rng::stream(seed, 1).next_u64());

        Rng spurious_rng(seed);
        std::vector<std::size_t> wrong_set;
        while (wrong_set.size() < p0) {
            const std::size_t idx = p0 + spurious_rng.uniform_int(p - p0);
            if (std::find(wrong_set.begin(), wrong_set.end(), idx) == wrong_set.end())
                wrong_set.push_back(idx);
        }
        const std::vector<std::vector<double>> weight_sets{
            uniform_weights(p), doubled_weights(g.true_set, p), doubled_weights(wrong_set, p)};
        double* totals[3] = {&f1_uniform, &f1_correct, &f1_incorrect};
        for (int w = 0; w < 3; ++w) {
            const auto props = restart_averaged_proportions(g.dataset, hp, weight_sets[w],
                                                            Rng::stream(seed, 10 + w).next_u64(),
                                                            default_workers());
            const auto sel = threshold_global_se(props, null_matrix, 0.05);
            *totals[w] += precision_recall_f1(confusion(sel.selected, g.true_set, p)).f1;
        }
    }
    f1_uniform /= reps;
    f1_correct /= reps;
    f1_incorrect /= reps;
    char buf[160];
    std::snprintf(buf, sizeof buf, "uniform %.3f, correct %.3f (>= uniform - 0.02), incorrect %.3f (>= uniform - 0.10)",
                  f1_uniform, f1_correct, f1_incorrect);
    detail = buf;
    return f1_correct >= f1_uniform - 0.02 && f1_incorrect >= f1_uniform - 0.10;
}

// ---------------------------------------------------------------------------
// 8. Local-threshold false-positive calibration on null data.
bool criterion_fp_calibration(std::string& detail) {
    const std::size_t n_datasets = 30, k = 10;
    Hyperparams hp;
    std::vector<std::size_t> selected_counts(n_datasets, 0);
    parallel_for(n_datasets, default_workers(), [&](std::size_t i) {
        const auto data = gen_null(100, k, 8800 + i);
        const auto res = run_strategy(data, hp, uniform_weights(k), Strategy::kLocal,
                                      {.alpha = 0.05, .permutations = 100, .perm_restarts = 1, .workers = 1},
                                      9900 + i);
        selected_counts[i] = res.selected.size();
    });
    std::size_t total = 0;
    for (std::size_t c : selected_counts) total += c;
    const double rate = static_cast<double>(total) / static_cast<double>(n_datasets * k);
    char buf[128];
    std::snprintf(buf, sizeof buf, "per-variable selection rate %.4f (within 0.05 +/- 0.05)", rate);
    detail = buf;
    return rate <= 0.10;
}

const Criterion kCriteria[] = {
    {1, "conjugate reduction oracle", criterion_conjugate},
    {2, "tree-prior depth frequencies", criterion_tree_prior},
    {3, "null inclusion calibration", criterion_null_calibration},
    {4, "threshold nesting and exact C*", criterion_nesting},
    {5, "friedman recovery (global-se)", criterion_friedman},
    {6, "sparse linear recovery (global-max)", criterion_sparse_linear},
    {7, "informed prior effect", criterion_prior_effect},
    {8, "local false-positive calibration", criterion_fp_calibration},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    bool all_pass = true;
    for (const auto& criterion : kCriteria) {
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), criterion.number) == wanted.end())
            continue;
        std::string detail;
        bool pass = false;
        try {
            pass = criterion.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d %s: %s — %s\n", criterion.number, pass ? "PASS" : "FAIL",
                    criterion.name, detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && pass;
    }
    return all_pass ? 0 : 1;
}
