#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"
#include "bartsel/tree.hpp"

namespace bartsel {

// Sum-of-trees ensemble state at one Gibbs iteration. Leaf values and
// sigma_sq live on the standardized response scale.
struct Forest {
    std::vector<DecisionTree> trees;
    double sigma_sq = 1.0;

    std::size_t m() const { return trees.size(); }
};

struct MoveProbs {
    double grow = 0.28;
    double prune = 0.28;
    double change = 0.44;

    double sum() const { return grow + prune + change; }
};

struct Hyperparams {
    std::size_t m = 20;              // trees in the ensemble
    double tree_prior_alpha = 0.95;  // split probability alpha * (1 + depth)^-beta
    double tree_prior_beta = 2.0;
    double k_mu = 2.0;               // leaf prior sd = 0.5 / (k_mu * sqrt(m))
    double nu = 3.0;                 // sigma^2 prior degrees of freedom
    double q = 0.9;                  // prior mass below the data-based variance estimate
    std::size_t n_burn = 250;
    std::size_t n_post = 1000;
    std::size_t n_restarts = 5;
    MoveProbs move_probs;
    bool disable_tree_moves = false;  // leaf/sigma draws only; used by diagnostics
    bool prior_only = false;          // drop the likelihood term everywhere (structure-prior sampling)

    double sigma_mu() const { return 0.5 / (k_mu * std::sqrt(static_cast<double>(m))); }

    void validate() const {
        if (m < 1) throw ValidationError("m must be >= 1");
        if (!(tree_prior_alpha > 0.0) || !(tree_prior_alpha < 1.0))
            throw ValidationError("tree_prior_alpha must be in (0, 1)");
        if (tree_prior_beta < 0.0) throw ValidationError("tree_prior_beta must be >= 0");
        if (!(k_mu > 0.0)) throw ValidationError("k_mu must be positive");
        if (!(nu > 0.0)) throw ValidationError("nu must be positive");
        if (!(q > 0.0) || !(q < 1.0)) throw ValidationError("q must be in (0, 1)");
        if (n_restarts < 1) throw ValidationError("n_restarts must be >= 1");
        if (move_probs.grow < 0 || move_probs.prune < 0 || move_probs.change < 0 ||
            std::fabs(move_probs.sum() - 1.0) > 1e-12)
            throw ValidationError("move probabilities must be nonnegative and sum to 1");
    }
};

// Retained post-burn-in draws from one chain.
struct PosteriorSamples {
    std::vector<Forest> forests;
    std::vector<double> sigma_sq_draws;
    // Per-sample inclusion proportions; filled lazily by the inclusion pass.
    std::vector<std::vector<double>> inclusion_per_sample;
    std::vector<bool> all_stump_flags;
    Standardization standardization;
    std::size_t accepted_moves = 0;
    std::size_t proposed_moves = 0;

    std::size_t size() const { return forests.size(); }
};

inline double forest_predict(const Forest& forest, std::span<const double> x, const Standardization& std_map) {
    double sum = 0.0;
    for (const auto& tree : forest.trees) sum += tree_predict(tree, x);
    return std_map.destandardize(sum);
}

inline double posterior_mean_prediction(const PosteriorSamples& samples, std::span<const double> x) {
    if (samples.forests.empty()) throw ValidationError("posterior_mean_prediction on empty samples");
    double sum = 0.0;
    for (const auto& forest : samples.forests) sum += forest_predict(forest, x, samples.standardization);
    return sum / static_cast<double>(samples.forests.size());
}

}  // namespace bartsel
