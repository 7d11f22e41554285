#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bartsel/errors.hpp"
#include "bartsel/model.hpp"
#include "bartsel/parallel.hpp"
#include "bartsel/rng.hpp"
#include "bartsel/sampler.hpp"

namespace bartsel {

// Proportion of splitting rules using each variable within one Gibbs sample.
// An ensemble with no splits anywhere carries the all-stump flag instead.
struct InclusionVector {
    std::vector<double> p;
    bool all_stump = false;
};

inline InclusionVector per_sample_proportions(const Forest& forest, std::size_t k) {
    std::vector<std::size_t> counts(k, 0);
    std::size_t total = 0;
    for (const auto& tree : forest.trees) {
        for (const auto& nd : tree.nodes()) {
            if (nd.is_leaf()) continue;
            ++counts[nd.rule.variable_index];
            ++total;
        }
    }
    InclusionVector out;
    out.p.assign(k, 0.0);
    if (total == 0) {
        out.all_stump = true;
        return out;
    }
    for (std::size_t j = 0; j < k; ++j) out.p[j] = static_cast<double>(counts[j]) / static_cast<double>(total);
    return out;
}

// Populates samples.inclusion_per_sample; no-op when already filled.
inline void fill_inclusion(PosteriorSamples& samples, std::size_t k) {
    if (samples.inclusion_per_sample.size() == samples.forests.size()) return;
    samples.inclusion_per_sample.clear();
    samples.all_stump_flags.clear();
    samples.inclusion_per_sample.reserve(samples.forests.size());
    samples.all_stump_flags.reserve(samples.forests.size());
    for (const auto& forest : samples.forests) {
        auto inc = per_sample_proportions(forest, k);
        samples.inclusion_per_sample.push_back(std::move(inc.p));
        samples.all_stump_flags.push_back(inc.all_stump);
    }
}

// Mean over non-flagged samples; all-stump samples do not enter the average.
inline std::vector<double> posterior_mean_proportions(PosteriorSamples& samples, std::size_t k) {
    fill_inclusion(samples, k);
    std::vector<double> mean(k, 0.0);
    std::size_t used = 0;
    for (std::size_t s = 0; s < samples.inclusion_per_sample.size(); ++s) {
        if (samples.all_stump_flags[s]) continue;
        ++used;
        for (std::size_t j = 0; j < k; ++j) mean[j] += samples.inclusion_per_sample[s][j];
    }
    if (used == 0) throw ValidationError("no splits in posterior");
    for (auto& v : mean) v /= static_cast<double>(used);
    return mean;
}

struct RestartAverageResult {
    std::vector<double> proportions;
    std::vector<std::uint64_t> chain_seeds;
    double acceptance_rate = 0.0;
};

// Mean of posterior-mean proportions over n_restarts independent chains,
// each seeded from (master_seed, restart index). Chains run in parallel.
inline RestartAverageResult restart_averaged_proportions_full(const Dataset& data, const Hyperparams& hp,
                                                              std::span<const double> split_weights,
                                                              std::uint64_t master_seed,
                                                              std::size_t n_workers = 1) {
    hp.validate();
    const std::size_t r = hp.n_restarts;
    std::vector<std::vector<double>> per_chain(r);
    std::vector<std::uint64_t> seeds(r);
    std::vector<std::size_t> accepted(r, 0), proposed(r, 0);
    for (std::size_t i = 0; i < r; ++i) seeds[i] = Rng::stream(master_seed, i).next_u64();
    std::vector<double> weights(split_weights.begin(), split_weights.end());
    parallel_for(r, n_workers, [&](std::size_t i) {
        auto samples = run_chain(data, hp, weights, seeds[i]);
        per_chain[i] = posterior_mean_proportions(samples, data.k());
        accepted[i] = samples.accepted_moves;
        proposed[i] = samples.proposed_moves;
    });
    RestartAverageResult out;
    out.chain_seeds = std::move(seeds);
    out.proportions.assign(data.k(), 0.0);
    for (const auto& chain : per_chain)
        for (std::size_t j = 0; j < data.k(); ++j) out.proportions[j] += chain[j];
    for (auto& v : out.proportions) v /= static_cast<double>(r);
    std::size_t acc = 0, prop = 0;
    for (std::size_t i = 0; i < r; ++i) {
        acc += accepted[i];
        prop += proposed[i];
    }
    out.acceptance_rate = prop == 0 ? 0.0 : static_cast<double>(acc) / static_cast<double>(prop);
    return out;
}

inline std::vector<double> restart_averaged_proportions(const Dataset& data, const Hyperparams& hp,
                                                        std::span<const double> split_weights,
                                                        std::uint64_t master_seed, std::size_t n_workers = 1) {
    return restart_averaged_proportions_full(data, hp, split_weights, master_seed, n_workers).proportions;
}

}  // namespace bartsel
