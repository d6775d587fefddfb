#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pistis/json_io.hpp"
#include "pistis/listwise.hpp"
#include "pistis/util.hpp"

namespace pistis {

// Axis-aligned regression tree stored as a flat node array. Split selection
// is exact greedy SSE minimization; ties resolve to the lowest feature index
// and threshold, so building is fully deterministic.
struct TreeNode {
    int feature = -1;          // -1 marks a leaf
    double threshold = 0.0;    // go left when x[feature] <= threshold
    double value = 0.0;        // leaf prediction
    int left = -1;
    int right = -1;
};

class RegressionTree {
public:
    static RegressionTree fit(const std::vector<std::vector<double>>& rows,
                              const std::vector<double>& targets, size_t max_depth,
                              size_t min_leaf = 1) {
        RegressionTree tree;
        std::vector<size_t> idx(rows.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        tree.build(rows, targets, idx, max_depth, min_leaf);
        return tree;
    }

    double predict(const std::vector<double>& x) const {
        int node = 0;
        while (nodes_[node].feature >= 0) {
            node = x[nodes_[node].feature] <= nodes_[node].threshold ? nodes_[node].left
                                                                     : nodes_[node].right;
        }
        return nodes_[node].value;
    }

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::vector<TreeNode>& nodes() { return nodes_; }

private:
    int build(const std::vector<std::vector<double>>& rows, const std::vector<double>& targets,
              const std::vector<size_t>& idx, size_t depth, size_t min_leaf) {
        double sum = 0.0;
        for (size_t i : idx) sum += targets[i];
        double mean = sum / static_cast<double>(idx.size());

        int node_id = static_cast<int>(nodes_.size());
        nodes_.push_back(TreeNode{});
        nodes_[node_id].value = mean;
        if (depth == 0 || idx.size() < 2 * min_leaf) return node_id;

        size_t n_features = rows[idx[0]].size();
        double best_sse = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;

        double base_sse = 0.0;
        for (size_t i : idx) base_sse += (targets[i] - mean) * (targets[i] - mean);

        for (size_t f = 0; f < n_features; ++f) {
            std::vector<std::pair<double, double>> vals;  // (x_f, target)
            vals.reserve(idx.size());
            for (size_t i : idx) vals.emplace_back(rows[i][f], targets[i]);
            std::sort(vals.begin(), vals.end());

            double left_sum = 0.0, left_sq = 0.0;
            double total_sum = 0.0, total_sq = 0.0;
            for (auto& [x, t] : vals) {
                total_sum += t;
                total_sq += t * t;
            }
            for (size_t split = 1; split < vals.size(); ++split) {
                double t = vals[split - 1].second;
                left_sum += t;
                left_sq += t * t;
                if (vals[split].first == vals[split - 1].first) continue;
                if (split < min_leaf || vals.size() - split < min_leaf) continue;
                double nl = static_cast<double>(split);
                double nr = static_cast<double>(vals.size() - split);
                double right_sum = total_sum - left_sum;
                double right_sq = total_sq - left_sq;
                double sse = (left_sq - left_sum * left_sum / nl) +
                             (right_sq - right_sum * right_sum / nr);
                if (sse + 1e-12 < best_sse) {
                    best_sse = sse;
                    best_feature = static_cast<int>(f);
                    best_threshold = (vals[split - 1].first + vals[split].first) / 2.0;
                }
            }
        }

        if (best_feature < 0 || best_sse >= base_sse - 1e-12) return node_id;

        std::vector<size_t> left_idx, right_idx;
        for (size_t i : idx) {
            (rows[i][best_feature] <= best_threshold ? left_idx : right_idx).push_back(i);
        }
        if (left_idx.empty() || right_idx.empty()) return node_id;

        nodes_[node_id].feature = best_feature;
        nodes_[node_id].threshold = best_threshold;
        int l = build(rows, targets, left_idx, depth - 1, min_leaf);
        int r = build(rows, targets, right_idx, depth - 1, min_leaf);
        nodes_[node_id].left = l;
        nodes_[node_id].right = r;
        return node_id;
    }

    std::vector<TreeNode> nodes_;
};

// Least-squares boosted trees: prediction = base + shrinkage * sum tree(x).
struct GbdtModel {
    double base = 0.0;
    double shrinkage = 0.1;
    size_t max_depth = 3;
    std::vector<RegressionTree> trees;
    std::vector<double> training_mse;  // after each boosting round

    double predict(const std::vector<double>& x) const {
        double y = base;
        for (const auto& t : trees) y += shrinkage * t.predict(x);
        return y;
    }
};

inline GbdtModel fit_gbdt(const std::vector<std::vector<double>>& rows,
                          const std::vector<double>& targets, size_t n_trees, size_t max_depth,
                          double shrinkage, uint64_t /*seed*/ = 0) {
    if (n_trees == 0) throw Error(ErrorCode::invalid_argument, "tree count must be positive");
    if (rows.empty() || rows.size() != targets.size()) {
        throw Error(ErrorCode::invalid_argument, "rows/targets size mismatch");
    }
    GbdtModel model;
    model.shrinkage = shrinkage;
    model.max_depth = max_depth;
    double sum = 0.0;
    for (double t : targets) sum += t;
    model.base = sum / static_cast<double>(targets.size());

    std::vector<double> residuals(targets.size());
    std::vector<double> predictions(targets.size(), model.base);
    for (size_t round = 0; round < n_trees; ++round) {
        for (size_t i = 0; i < targets.size(); ++i) residuals[i] = targets[i] - predictions[i];
        auto tree = RegressionTree::fit(rows, residuals, max_depth);
        for (size_t i = 0; i < targets.size(); ++i) {
            predictions[i] += shrinkage * tree.predict(rows[i]);
        }
        double mse = 0.0;
        for (size_t i = 0; i < targets.size(); ++i) {
            double d = targets[i] - predictions[i];
            mse += d * d;
        }
        model.training_mse.push_back(mse / static_cast<double>(targets.size()));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

struct DistillationData {
    std::vector<std::vector<double>> rows;  // item feature vectors
    std::vector<double> targets;            // marginal contributions
};

// Distillation targets: the drop in predicted list quality when an item is
// replaced by the dataset's mean item. A pointwise tree model cannot see list
// context, so it learns each item's marginal effect instead.
inline DistillationData distillation_targets(const ListwiseModel& model,
                                             const std::vector<ListwiseSample>& samples) {
    if (samples.empty()) throw Error(ErrorCode::invalid_argument, "empty dataset");
    std::vector<double> mean_item(kItemFeatureCount, 0.0);
    size_t count = 0;
    for (const auto& s : samples) {
        for (const auto& row : s.item_features) {
            for (size_t c = 0; c < kItemFeatureCount; ++c) mean_item[c] += row[c];
            ++count;
        }
    }
    for (double& v : mean_item) v /= static_cast<double>(count);

    DistillationData data;
    for (const auto& s : samples) {
        double full = model.predict_quality(s.query_features, s.item_features);
        for (size_t i = 0; i < s.item_features.size(); ++i) {
            auto ablated = s.item_features;
            ablated[i] = mean_item;
            double without = model.predict_quality(s.query_features, ablated);
            data.rows.push_back(s.item_features[i]);
            data.targets.push_back(full - without);
        }
    }
    return data;
}

inline GbdtModel distill_to_gbdt(const ListwiseModel& model,
                                 const std::vector<ListwiseSample>& samples, size_t n_trees,
                                 size_t max_depth, double shrinkage, uint64_t seed = 0) {
    if (!model.fitted()) throw Error(ErrorCode::not_fitted, "model not fitted");
    auto data = distillation_targets(model, samples);
    return fit_gbdt(data.rows, data.targets, n_trees, max_depth, shrinkage, seed);
}

}  // namespace pistis
