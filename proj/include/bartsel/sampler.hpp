#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"
#include "bartsel/math.hpp"
#include "bartsel/model.hpp"
#include "bartsel/rng.hpp"
#include "bartsel/tree.hpp"

namespace bartsel {

enum class MoveKind { kGrow, kPrune, kChange };

// One Metropolis-Hastings structure proposal. log_forward / log_reverse are
// the log transition probabilities of the proposal and its exact reversal.
struct MoveProposal {
    MoveKind kind = MoveKind::kGrow;
    int target = 0;          // leaf (grow), prunable node (prune), internal node (change)
    int target_in_new = 0;   // index of the same site in the applied tree
    SplitRule new_rule;      // grow / change
    SplitRule removed_rule;  // prune / change
    double log_forward = 0.0;
    double log_reverse = 0.0;
    std::vector<std::size_t> rows;  // dataset rows reaching the target node
    // distinct-value counts at the target for the new / removed rule's
    // variable; 0 when not applicable to the move kind
    std::size_t new_rule_value_count = 0;
    std::size_t removed_rule_value_count = 0;
};

struct LeafStat {
    std::size_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double r) {
        ++n;
        sum += r;
        sum_sq += r * r;
    }
};

namespace detail {

inline std::vector<double> distinct_values(const Dataset& data, std::size_t var,
                                           std::span<const std::size_t> rows) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (std::size_t r : rows) v.push_back(data.predictors[var][r]);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline std::size_t distinct_count(const Dataset& data, std::size_t var, std::span<const std::size_t> rows) {
    thread_local std::vector<double> buf;
    buf.clear();
    buf.reserve(rows.size());
    for (std::size_t r : rows) buf.push_back(data.predictors[var][r]);
    std::sort(buf.begin(), buf.end());
    return static_cast<std::size_t>(std::unique(buf.begin(), buf.end()) - buf.begin());
}

inline double split_prob(int depth, const Hyperparams& hp) {
    return hp.tree_prior_alpha * std::pow(1.0 + depth, -hp.tree_prior_beta);
}

}  // namespace detail

// log integral of N(residuals | mu, sigma_sq I) N(mu | 0, sigma_mu_sq) over mu
inline double node_log_marginal(const LeafStat& stat, double sigma_sq, double sigma_mu_sq) {
    if (stat.n == 0) throw ValidationError("node_log_marginal on empty node");
    const double n = static_cast<double>(stat.n);
    const double denom = sigma_sq + n * sigma_mu_sq;
    return -0.5 * n * std::log(2.0 * M_PI * sigma_sq) + 0.5 * std::log(sigma_sq / denom) -
           0.5 * stat.sum_sq / sigma_sq + 0.5 * sigma_mu_sq * stat.sum * stat.sum / (sigma_sq * denom);
}

inline double node_log_marginal(std::span<const double> residuals, double sigma_sq, double sigma_mu_sq) {
    LeafStat stat;
    for (double r : residuals) stat.add(r);
    return node_log_marginal(stat, sigma_sq, sigma_mu_sq);
}

// Tree structure prior: each node at depth d splits with probability
// alpha (1+d)^-beta; a split's rule carries probability
// (w_k / sum w) * 1 / #distinct values of x_k among the rows reaching the node.
// `rows` are the rows reaching `root`; terms are summed over root's subtree.
inline double subtree_log_structure_prior(const DecisionTree& tree, const Dataset& data, const Hyperparams& hp,
                                          std::span<const double> split_weights, int root,
                                          std::span<const std::size_t> rows) {
    double weight_total = 0.0;
    for (double w : split_weights) weight_total += w;

    double lp = 0.0;
    std::vector<std::pair<int, std::vector<std::size_t>>> stack;
    stack.emplace_back(root, std::vector<std::size_t>(rows.begin(), rows.end()));
    while (!stack.empty()) {
        auto [i, node_rows] = std::move(stack.back());
        stack.pop_back();
        const auto& nd = tree.node(i);
        const double p_split = detail::split_prob(nd.depth, hp);
        if (nd.is_leaf()) {
            lp += std::log1p(-p_split);
            continue;
        }
        const std::size_t n_values = detail::distinct_count(data, nd.rule.variable_index, node_rows);
        lp += std::log(p_split) + std::log(split_weights[nd.rule.variable_index] / weight_total) -
              std::log(static_cast<double>(n_values));
        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : node_rows) {
            if (data.predictors[nd.rule.variable_index][r] < nd.rule.split_value)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        stack.emplace_back(nd.left, std::move(left_rows));
        stack.emplace_back(nd.right, std::move(right_rows));
    }
    return lp;
}

inline double log_tree_structure_prior(const DecisionTree& tree, const Dataset& data, const Hyperparams& hp,
                                       std::span<const double> split_weights) {
    std::vector<std::size_t> all(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) all[i] = i;
    return subtree_log_structure_prior(tree, data, hp, split_weights, 0, all);
}

namespace detail {

// One traversal computing subtree structure prior plus (optionally) the sum
// of leaf marginals, partitioning `rows` in place. Same terms as
// subtree_log_structure_prior and per-leaf node_log_marginal.
inline double eval_subtree(const DecisionTree& tree, const Dataset& data, const Hyperparams& hp,
                           std::span<const double> split_weights, double weight_total, int node,
                           std::span<std::size_t> rows, std::span<const double> residuals,
                           double sigma_sq, double sigma_mu_sq, bool include_likelihood,
                           std::size_t root_v_count = 0) {
    const auto& nd = tree.node(node);
    const double p_split = split_prob(nd.depth, hp);
    if (nd.is_leaf()) {
        double value = std::log1p(-p_split);
        if (include_likelihood) {
            LeafStat stat;
            for (std::size_t r : rows) stat.add(residuals[r]);
            value += node_log_marginal(stat, sigma_sq, sigma_mu_sq);
        }
        return value;
    }
    // a nonzero root_v_count is the caller's already-computed count for this node
    const std::size_t n_values =
        root_v_count != 0 ? root_v_count : distinct_count(data, nd.rule.variable_index, rows);
    double value = std::log(p_split) + std::log(split_weights[nd.rule.variable_index] / weight_total) -
                   std::log(static_cast<double>(n_values));
    const double* column = data.predictors[nd.rule.variable_index].data();
    const double cut = nd.rule.split_value;
    const auto mid = std::partition(rows.begin(), rows.end(), [&](std::size_t r) { return column[r] < cut; });
    const auto split_at = static_cast<std::size_t>(mid - rows.begin());
    value += eval_subtree(tree, data, hp, split_weights, weight_total, nd.left, rows.subspan(0, split_at),
                          residuals, sigma_sq, sigma_mu_sq, include_likelihood);
    value += eval_subtree(tree, data, hp, split_weights, weight_total, nd.right, rows.subspan(split_at),
                          residuals, sigma_sq, sigma_mu_sq, include_likelihood);
    return value;
}

}  // namespace detail

// Kind probabilities after dropping moves the tree cannot take. Only a stump
// restricts the menu: grow is the single legal move there.
inline double log_kind_prob(MoveKind kind, bool is_stump, const MoveProbs& probs) {
    if (is_stump) return kind == MoveKind::kGrow ? 0.0 : -std::numeric_limits<double>::infinity();
    switch (kind) {
        case MoveKind::kGrow: return std::log(probs.grow);
        case MoveKind::kPrune: return std::log(probs.prune);
        case MoveKind::kChange: return std::log(probs.change);
    }
    return 0.0;
}

inline MoveProposal propose_move(const DecisionTree& tree, const Dataset& data, const Hyperparams& hp,
                                 std::span<const double> split_weights, Rng& rng) {
    double weight_total = 0.0;
    for (double w : split_weights) weight_total += w;

    MoveProposal prop;
    if (tree.is_stump()) {
        prop.kind = MoveKind::kGrow;
    } else {
        const double probs[3] = {hp.move_probs.grow, hp.move_probs.prune, hp.move_probs.change};
        prop.kind = static_cast<MoveKind>(rng.discrete(probs));
    }

    switch (prop.kind) {
        case MoveKind::kGrow: {
            const auto leaves = tree.leaves();
            prop.target = leaves[rng.uniform_int(leaves.size())];
            prop.rows = tree.rows_in_node(data, prop.target);
            const std::size_t var = rng.discrete(split_weights);
            const auto values = detail::distinct_values(data, var, prop.rows);
            prop.new_rule = {var, values[rng.uniform_int(values.size())]};
            prop.new_rule_value_count = values.size();
            prop.log_forward = log_kind_prob(MoveKind::kGrow, tree.is_stump(), hp.move_probs) -
                               std::log(static_cast<double>(leaves.size())) +
                               std::log(split_weights[var] / weight_total) -
                               std::log(static_cast<double>(values.size()));
            // growing a leaf makes it prunable; its parent stops being prunable
            // if it was (both children were leaves)
            std::size_t prunable_new = tree.prunable_nodes().size() + 1;
            const int parent = tree.node(prop.target).parent;
            if (parent >= 0 && tree.node(tree.node(parent).left).is_leaf() &&
                tree.node(tree.node(parent).right).is_leaf())
                --prunable_new;
            prop.log_reverse = log_kind_prob(MoveKind::kPrune, false, hp.move_probs) -
                               std::log(static_cast<double>(prunable_new));
            break;
        }
        case MoveKind::kPrune: {
            const auto prunable = tree.prunable_nodes();
            prop.target = prunable[rng.uniform_int(prunable.size())];
            prop.removed_rule = tree.node(prop.target).rule;
            prop.log_forward = log_kind_prob(MoveKind::kPrune, false, hp.move_probs) -
                               std::log(static_cast<double>(prunable.size()));
            prop.rows = tree.rows_in_node(data, prop.target);
            const std::size_t n_values = detail::distinct_count(data, prop.removed_rule.variable_index, prop.rows);
            prop.removed_rule_value_count = n_values;
            const bool new_is_stump = tree.internal_count() == 1;
            prop.log_reverse = log_kind_prob(MoveKind::kGrow, new_is_stump, hp.move_probs) -
                               std::log(static_cast<double>(tree.leaf_count() - 1)) +
                               std::log(split_weights[prop.removed_rule.variable_index] / weight_total) -
                               std::log(static_cast<double>(n_values));
            break;
        }
        case MoveKind::kChange: {
            const auto internal = tree.internal_nodes();
            prop.target = internal[rng.uniform_int(internal.size())];
            prop.removed_rule = tree.node(prop.target).rule;
            prop.rows = tree.rows_in_node(data, prop.target);
            const std::size_t var = rng.discrete(split_weights);
            const auto new_values = detail::distinct_values(data, var, prop.rows);
            prop.new_rule = {var, new_values[rng.uniform_int(new_values.size())]};
            prop.new_rule_value_count = new_values.size();
            const std::size_t n_old_values =
                detail::distinct_count(data, prop.removed_rule.variable_index, prop.rows);
            prop.removed_rule_value_count = n_old_values;
            const double log_kind = log_kind_prob(MoveKind::kChange, false, hp.move_probs) -
                                    std::log(static_cast<double>(internal.size()));
            prop.log_forward = log_kind + std::log(split_weights[var] / weight_total) -
                               std::log(static_cast<double>(new_values.size()));
            prop.log_reverse = log_kind +
                               std::log(split_weights[prop.removed_rule.variable_index] / weight_total) -
                               std::log(static_cast<double>(n_old_values));
            break;
        }
    }
    prop.target_in_new = prop.target;
    return prop;
}

// Builds the proposed tree. Returns nullopt when the move would leave a leaf
// with no training rows; such proposals are rejected outright. Updates
// proposal.target_in_new (pruning can relocate node indices).
inline std::optional<DecisionTree> apply_move(const DecisionTree& tree, const Dataset& data,
                                              MoveProposal& proposal) {
    DecisionTree next = tree;
    switch (proposal.kind) {
        case MoveKind::kGrow:
            next.grow(proposal.target, proposal.new_rule);
            break;
        case MoveKind::kPrune: {
            // track where the target lands after swap-removal of its children
            const auto& nd = next.node(proposal.target);
            int hi = std::max(nd.left, nd.right), lo = std::min(nd.left, nd.right);
            int self = proposal.target;
            next.prune(proposal.target);
            const int last1 = static_cast<int>(tree.size()) - 1;
            if (self == last1) self = hi;
            const int last2 = last1 - 1;
            if (self == last2) self = lo;
            proposal.target_in_new = self;
            break;
        }
        case MoveKind::kChange:
            next.set_rule(proposal.target, proposal.new_rule);
            break;
    }
    if (proposal.kind != MoveKind::kPrune) {
        if (proposal.rows.empty()) proposal.rows = tree.rows_in_node(data, proposal.target);
        std::vector<std::size_t> counts(next.size(), 0);
        for (std::size_t r : proposal.rows) {
            int i = proposal.target_in_new;
            while (!next.node(i).is_leaf()) {
                const auto& rule = next.node(i).rule;
                i = (data.predictors[rule.variable_index][r] < rule.split_value) ? next.node(i).left
                                                                                 : next.node(i).right;
            }
            ++counts[static_cast<std::size_t>(i)];
        }
        for (int i : next.subtree_nodes(proposal.target_in_new))
            if (next.node(i).is_leaf() && counts[static_cast<std::size_t>(i)] == 0) return std::nullopt;
    }
    return next;
}

// log acceptance ratio: [new prior + new marginal + log_reverse] minus
// [old prior + old marginal + log_forward], with both prior and marginal
// restricted to the proposal's subtree (everything else cancels).
inline double mh_log_ratio(const MoveProposal& proposal, const DecisionTree& old_tree,
                           const DecisionTree& new_tree, const Dataset& data,
                           std::span<const double> residuals, double sigma_sq, const Hyperparams& hp,
                           std::span<const double> split_weights) {
    const double sigma_mu_sq = hp.sigma_mu() * hp.sigma_mu();
    double weight_total = 0.0;
    for (double w : split_weights) weight_total += w;
    const std::vector<std::size_t> base_rows =
        proposal.rows.empty() ? old_tree.rows_in_node(data, proposal.target) : proposal.rows;
    std::vector<std::size_t> scratch(base_rows);
    const double new_side =
        detail::eval_subtree(new_tree, data, hp, split_weights, weight_total, proposal.target_in_new, scratch,
                             residuals, sigma_sq, sigma_mu_sq, !hp.prior_only,
                             proposal.new_rule_value_count);
    scratch = base_rows;
    const double old_side =
        detail::eval_subtree(old_tree, data, hp, split_weights, weight_total, proposal.target, scratch,
                             residuals, sigma_sq, sigma_mu_sq, !hp.prior_only,
                             proposal.removed_rule_value_count);
    return new_side - old_side + proposal.log_reverse - proposal.log_forward;
}

// Conjugate normal draw per leaf given the tree's partial residuals.
inline void draw_leaf_values(DecisionTree& tree, const Dataset& data, std::span<const double> residuals,
                             double sigma_sq, double sigma_mu_sq, Rng& rng) {
    const auto leaf_of = tree.route_all(data);
    std::vector<LeafStat> stats(tree.size());
    for (std::size_t r = 0; r < data.n(); ++r) stats[static_cast<std::size_t>(leaf_of[r])].add(residuals[r]);
    for (int i = 0; i < static_cast<int>(tree.size()); ++i) {
        if (!tree.node(i).is_leaf()) continue;
        const auto& stat = stats[static_cast<std::size_t>(i)];
        if (stat.n == 0) throw ValidationError("draw_leaf_values on empty leaf");
        const double precision = static_cast<double>(stat.n) / sigma_sq + 1.0 / sigma_mu_sq;
        const double mean = (stat.sum / sigma_sq) / precision;
        tree.set_leaf_value(i, rng.normal(mean, std::sqrt(1.0 / precision)));
    }
}

// Scaled inverse chi-squared draw with nu + n degrees of freedom and scale
// (nu lambda + sum r^2) / (nu + n).
inline double draw_sigma_sq(std::span<const double> residuals, double nu, double lambda, Rng& rng) {
    if (!(nu > 0.0) || !(lambda > 0.0)) throw ValidationError("draw_sigma_sq needs nu, lambda > 0");
    double sum_sq = 0.0;
    for (double r : residuals) sum_sq += r * r;
    return (nu * lambda + sum_sq) / rng.chi_squared(nu + static_cast<double>(residuals.size()));
}

// lambda such that the sigma^2 prior puts mass q below a data-based estimate:
// residual variance of a least-squares fit when it is identified, otherwise
// the sample variance of the standardized response.
inline double calibrate_lambda(const Dataset& data, std::span<const double> y_std, const Hyperparams& hp) {
    double sigma_hat_sq = 0.0;
    if (data.n() > data.k() + 1) {
        const auto n = static_cast<Eigen::Index>(data.n());
        const auto k = static_cast<Eigen::Index>(data.k());
        Eigen::MatrixXd design(n, k + 1);
        design.col(0).setOnes();
        for (Eigen::Index j = 0; j < k; ++j)
            for (Eigen::Index i = 0; i < n; ++i) design(i, j + 1) = data.predictors[j][i];
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = y_std[i];
        const Eigen::VectorXd resid = y - design * design.colPivHouseholderQr().solve(y);
        sigma_hat_sq = sample_variance({resid.data(), static_cast<std::size_t>(resid.size())});
    }
    if (!(sigma_hat_sq > 0.0) || !std::isfinite(sigma_hat_sq)) sigma_hat_sq = sample_variance(y_std);
    return sigma_hat_sq * chi_squared_quantile(1.0 - hp.q, hp.nu) / hp.nu;
}

// Everything one chain carries between Gibbs iterations.
struct ChainState {
    Forest forest;
    std::vector<std::vector<double>> tree_fits;  // m x n, standardized scale
    std::vector<double> residual;                // y_std - total fit
    std::vector<double> y_std;
    double lambda = 1.0;
    Rng rng;
    std::size_t iteration = 0;
    std::size_t accepted = 0;
    std::size_t proposed = 0;

    std::vector<double> partial_residual(std::size_t tree_index) const {
        std::vector<double> partial(residual);
        const auto& fit = tree_fits[tree_index];
        for (std::size_t i = 0; i < partial.size(); ++i) partial[i] += fit[i];
        return partial;
    }

    // Drift check against from-scratch recomputation of all fits.
    double residual_cache_error(const Dataset& data) const {
        double worst = 0.0;
        for (std::size_t i = 0; i < data.n(); ++i) {
            double total = 0.0;
            const auto x = data.row(i);
            for (const auto& tree : forest.trees) total += tree_predict(tree, x);
            worst = std::max(worst, std::fabs(residual[i] - (y_std[i] - total)));
        }
        return worst;
    }
};

inline ChainState init_chain_state(const Dataset& data, std::span<const double> y_std, const Hyperparams& hp,
                                   double lambda, std::uint64_t seed) {
    ChainState state{.forest = {}, .rng = Rng(seed)};
    state.y_std.assign(y_std.begin(), y_std.end());
    state.lambda = lambda;
    const double sigma_mu = hp.sigma_mu();
    state.forest.trees.assign(hp.m, DecisionTree{});
    state.tree_fits.assign(hp.m, std::vector<double>(data.n(), 0.0));
    state.residual = state.y_std;
    for (std::size_t t = 0; t < hp.m; ++t) {
        const double mu = state.rng.normal(0.0, sigma_mu);
        state.forest.trees[t].set_leaf_value(0, mu);
        for (std::size_t i = 0; i < data.n(); ++i) {
            state.tree_fits[t][i] = mu;
            state.residual[i] -= mu;
        }
    }
    state.forest.sigma_sq = hp.nu * lambda / state.rng.chi_squared(hp.nu);
    return state;
}

// One sweep: per tree, one MH structure move then a full leaf redraw; finally
// a sigma^2 draw from the full-residual conditional.
inline void gibbs_iteration(ChainState& state, const Dataset& data, const Hyperparams& hp,
                            std::span<const double> split_weights) {
    const double sigma_mu = hp.sigma_mu();
    const double sigma_mu_sq = sigma_mu * sigma_mu;
    for (std::size_t t = 0; t < hp.m; ++t) {
        auto& tree = state.forest.trees[t];
        const auto partial = state.partial_residual(t);
        if (!hp.disable_tree_moves) {
            auto proposal = propose_move(tree, data, hp, split_weights, state.rng);
            ++state.proposed;
            if (auto next = apply_move(tree, data, proposal)) {
                const double ratio =
                    mh_log_ratio(proposal, tree, *next, data, partial, state.forest.sigma_sq, hp, split_weights);
                if (std::isfinite(ratio) && std::log(state.rng.uniform()) < ratio) {
                    tree = std::move(*next);
                    ++state.accepted;
                }
            }
        }
        const auto leaf_of = tree.route_all(data);
        if (hp.prior_only) {
            for (int i = 0; i < static_cast<int>(tree.size()); ++i)
                if (tree.node(i).is_leaf()) tree.set_leaf_value(i, state.rng.normal(0.0, sigma_mu));
        } else {
            // conjugate leaf draws, same order and draws as draw_leaf_values
            std::vector<LeafStat> stats(tree.size());
            for (std::size_t r = 0; r < data.n(); ++r)
                stats[static_cast<std::size_t>(leaf_of[r])].add(partial[r]);
            for (int i = 0; i < static_cast<int>(tree.size()); ++i) {
                if (!tree.node(i).is_leaf()) continue;
                const auto& stat = stats[static_cast<std::size_t>(i)];
                if (stat.n == 0) throw ValidationError("draw_leaf_values on empty leaf");
                const double precision = static_cast<double>(stat.n) / state.forest.sigma_sq + 1.0 / sigma_mu_sq;
                const double mean = (stat.sum / state.forest.sigma_sq) / precision;
                tree.set_leaf_value(i, state.rng.normal(mean, std::sqrt(1.0 / precision)));
            }
        }
        auto& fit = state.tree_fits[t];
        for (std::size_t i = 0; i < data.n(); ++i) {
            fit[i] = tree.node(leaf_of[i]).leaf_value;
            state.residual[i] = partial[i] - fit[i];
        }
    }
    state.forest.sigma_sq = hp.prior_only
                                ? hp.nu * state.lambda / state.rng.chi_squared(hp.nu)
                                : draw_sigma_sq(state.residual, hp.nu, state.lambda, state.rng);
    ++state.iteration;
}

// Full single-chain run: burn-in then retained snapshots. Deterministic in
// (dataset, hyperparams, weights, seed).
inline PosteriorSamples run_chain(const Dataset& data, const Hyperparams& hp,
                                  std::span<const double> split_weights, std::uint64_t seed) {
    data.validate();
    hp.validate();
    if (hp.n_post == 0) throw ValidationError("no retained samples");
    if (split_weights.size() != data.k()) throw ValidationError("split weight length mismatch");
    for (double w : split_weights)
        if (!(w > 0.0)) throw ValidationError("split weights must be strictly positive");

    auto [y_std, std_map] = standardize_response(data.response);
    const double lambda = calibrate_lambda(data, y_std, hp);
    ChainState state = init_chain_state(data, y_std, hp, lambda, seed);

    for (std::size_t it = 0; it < hp.n_burn; ++it) gibbs_iteration(state, data, hp, split_weights);

    PosteriorSamples samples;
    samples.standardization = std_map;
    samples.forests.reserve(hp.n_post);
    samples.sigma_sq_draws.reserve(hp.n_post);
    for (std::size_t it = 0; it < hp.n_post; ++it) {
        gibbs_iteration(state, data, hp, split_weights);
        samples.forests.push_back(state.forest);
        samples.sigma_sq_draws.push_back(state.forest.sigma_sq);
    }
    samples.accepted_moves = state.accepted;
    samples.proposed_moves = state.proposed;
    return samples;
}

}  // namespace bartsel
