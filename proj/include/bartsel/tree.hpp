#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"

namespace bartsel {

struct SplitRule {
    std::size_t variable_index = 0;
    double split_value = 0.0;
};

// Routing convention: x[variable] < split_value goes left, >= goes right.
struct TreeNode {
    SplitRule rule;          // meaningful only when internal
    double leaf_value = 0.0; // meaningful only when leaf
    int left = -1;
    int right = -1;
    int parent = -1;
    int depth = 0;

    bool is_leaf() const { return left < 0; }
};

// Binary regression tree stored as a compact node vector (index 0 is the
// root), so forests snapshot with a plain copy.
class DecisionTree {
public:
    DecisionTree() : nodes_(1) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return nodes_.size(); }
    bool is_stump() const { return nodes_.size() == 1; }

    std::size_t leaf_count() const {
        std::size_t c = 0;
        for (const auto& nd : nodes_) c += nd.is_leaf();
        return c;
    }
    std::size_t internal_count() const { return nodes_.size() - leaf_count(); }

    std::vector<int> leaves() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
            if (nodes_[i].is_leaf()) out.push_back(i);
        return out;
    }
    std::vector<int> internal_nodes() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
            if (!nodes_[i].is_leaf()) out.push_back(i);
        return out;
    }
    // internal nodes whose children are both leaves; the only prune targets
    std::vector<int> prunable_nodes() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
            const auto& nd = nodes_[i];
            if (!nd.is_leaf() && nodes_[nd.left].is_leaf() && nodes_[nd.right].is_leaf()) out.push_back(i);
        }
        return out;
    }

    void set_leaf_value(int i, double mu) {
        if (!nodes_[i].is_leaf()) throw std::logic_error("set_leaf_value on internal node");
        nodes_[i].leaf_value = mu;
    }

    void set_rule(int i, const SplitRule& rule) {
        if (nodes_[i].is_leaf()) throw std::logic_error("set_rule on leaf");
        nodes_[i].rule = rule;
    }

    // Splits leaf `i`; children start as leaves with zero value.
    void grow(int i, const SplitRule& rule) {
        if (!nodes_[i].is_leaf()) throw std::logic_error("grow on internal node");
        TreeNode child;
        child.parent = i;
        child.depth = nodes_[i].depth + 1;
        const int l = static_cast<int>(nodes_.size());
        nodes_.push_back(child);
        nodes_.push_back(child);
        nodes_[i].rule = rule;
        nodes_[i].left = l;
        nodes_[i].right = l + 1;
    }

    // Collapses node `i` (both children must be leaves) back into a leaf.
    void prune(int i, double leaf_value = 0.0) {
        const int l = nodes_[i].left, r = nodes_[i].right;
        if (l < 0 || !nodes_[l].is_leaf() || !nodes_[r].is_leaf()) throw std::logic_error("prune target not prunable");
        nodes_[i].left = nodes_[i].right = -1;
        nodes_[i].leaf_value = leaf_value;
        remove_node(l > r ? l : r);
        remove_node(l > r ? r : l);
    }

    int route(std::span<const double> x) const {
        int i = 0;
        while (!nodes_[i].is_leaf()) {
            const auto& rule = nodes_[i].rule;
            i = (x[rule.variable_index] < rule.split_value) ? nodes_[i].left : nodes_[i].right;
        }
        return i;
    }

    // Leaf index for each dataset row.
    std::vector<int> route_all(const Dataset& data) const {
        std::vector<int> leaf_of(data.n(), 0);
        if (is_stump()) return leaf_of;
        for (std::size_t obs = 0; obs < data.n(); ++obs) {
            int i = 0;
            while (!nodes_[i].is_leaf()) {
                const auto& rule = nodes_[i].rule;
                i = (data.predictors[rule.variable_index][obs] < rule.split_value) ? nodes_[i].left : nodes_[i].right;
            }
            leaf_of[obs] = i;
        }
        return leaf_of;
    }

    // Rows whose routing path passes through node `target`.
    std::vector<std::size_t> rows_in_node(const Dataset& data, int target) const {
        std::vector<std::size_t> rows;
        for (std::size_t obs = 0; obs < data.n(); ++obs) {
            int i = 0;
            for (;;) {
                if (i == target) {
                    rows.push_back(obs);
                    break;
                }
                if (nodes_[i].is_leaf()) break;
                const auto& rule = nodes_[i].rule;
                i = (data.predictors[rule.variable_index][obs] < rule.split_value) ? nodes_[i].left : nodes_[i].right;
            }
        }
        return rows;
    }

    std::vector<int> subtree_nodes(int root) const {
        std::vector<int> stack{root}, out;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            out.push_back(i);
            if (!nodes_[i].is_leaf()) {
                stack.push_back(nodes_[i].left);
                stack.push_back(nodes_[i].right);
            }
        }
        return out;
    }

    void check_structure() const {
        if (nodes_.empty()) throw std::logic_error("empty tree");
        for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
            const auto& nd = nodes_[i];
            if ((nd.left < 0) != (nd.right < 0)) throw std::logic_error("half-split node");
            if (!nd.is_leaf()) {
                if (nodes_[nd.left].parent != i || nodes_[nd.right].parent != i)
                    throw std::logic_error("bad parent link");
                if (nodes_[nd.left].depth != nd.depth + 1 || nodes_[nd.right].depth != nd.depth + 1)
                    throw std::logic_error("bad depth bookkeeping");
            }
        }
        if (leaf_count() != internal_count() + 1) throw std::logic_error("leaf count invariant broken");
    }

private:
    // Swap-with-back removal keeping all indices consistent.
    void remove_node(int i) {
        const int last = static_cast<int>(nodes_.size()) - 1;
        if (i != last) {
            nodes_[i] = nodes_[last];
            const auto& moved = nodes_[i];
            if (moved.parent >= 0) {
                auto& p = nodes_[moved.parent];
                if (p.left == last) p.left = i;
                if (p.right == last) p.right = i;
            }
            if (!moved.is_leaf()) {
                nodes_[moved.left].parent = i;
                nodes_[moved.right].parent = i;
            }
        }
        nodes_.pop_back();
    }

    std::vector<TreeNode> nodes_;
};

inline double tree_predict(const DecisionTree& tree, std::span<const double> x) {
    return tree.node(tree.route(x)).leaf_value;
}

}  // namespace bartsel
