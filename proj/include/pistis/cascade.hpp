#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pistis/cross_scorer.hpp"
#include "pistis/listwise.hpp"
#include "pistis/matching.hpp"
#include "pistis/memory_store.hpp"

namespace pistis {

// Truncation parameters for the cascade. Violations of p_r <= p_pr <= p_m are
// configuration errors, never silently clamped.
struct CascadeConfig {
    size_t p_m = 10;
    size_t p_pr = 5;
    size_t p_r = 5;  // also the shot count k
    double l_th_ms = 1000.0;
    MatchMode mode = MatchMode::hybrid;
    size_t reason_paths = 3;

    void validate() const {
        if (p_r < 1 || p_r > p_pr || p_pr > p_m) {
            throw Error(ErrorCode::invalid_argument,
                        "truncations must satisfy 1 <= p_r <= p_pr <= p_m (got p_m=" +
                            std::to_string(p_m) + ", p_pr=" + std::to_string(p_pr) +
                            ", p_r=" + std::to_string(p_r) + ")");
        }
        if (l_th_ms <= 0.0) throw Error(ErrorCode::invalid_argument, "latency budget must be positive");
        if (reason_paths < 1) throw Error(ErrorCode::invalid_argument, "reason_paths must be >= 1");
    }
};

enum class RankStage { pre_ranked, ranked, re_ranked };

struct RankedList {
    std::vector<std::string> ids;
    std::vector<double> scores;
    RankStage stage = RankStage::pre_ranked;
    bool degraded = false;  // remote scorer failed; matching order used
};

// Rescores candidates with the cross scorer, truncates to p_pr. A remote
// scorer failure degrades to the matching order instead of failing the query.
inline RankedList pre_rank(const MemoryStore& store, const std::string& query,
                           const std::vector<Candidate>& candidates, const CrossScorer& scorer,
                           size_t p_pr) {
    RankedList out;
    out.stage = RankStage::pre_ranked;

    std::vector<std::string> texts;
    texts.reserve(candidates.size());
    for (const auto& c : candidates) {
        const Document* d = store.find(c.doc_id);
        texts.push_back(d ? d->text : std::string{});
    }

    std::vector<double> scores;
    try {
        scores = scorer.score_batch(query, texts);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::http) throw;
        out.degraded = true;
        for (const auto& c : candidates) {
            if (out.ids.size() >= p_pr) break;
            out.ids.push_back(c.doc_id);
            out.scores.push_back(c.score);
        }
        return out;
    }

    std::vector<size_t> order(candidates.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a].doc_id < candidates[b].doc_id;
    });
    for (size_t i = 0; i < order.size() && i < p_pr; ++i) {
        out.ids.push_back(candidates[order[i]].doc_id);
        out.scores.push_back(scores[order[i]]);
    }
    return out;
}

// Reorders the pre-ranked pool down to p_r items by maximizing the listwise
// model's predicted quality. Scores are the predicted quality of each prefix.
inline RankedList rank(const FeatureContext& ctx, const MemoryStore& store, const Document& query,
                       const RankedList& pre_ranked, const ListwiseModel& model, size_t p_r) {
    if (!model.fitted()) throw Error(ErrorCode::not_fitted, "model not fitted");
    if (p_r > pre_ranked.ids.size()) {
        throw Error(ErrorCode::invalid_argument, "p_r exceeds pre-ranked pool size");
    }

    std::vector<const Document*> docs;
    std::vector<size_t> positions;
    for (size_t i = 0; i < pre_ranked.ids.size(); ++i) {
        const Document* d = store.find(pre_ranked.ids[i]);
        if (!d) throw Error(ErrorCode::data, "unknown document \"" + pre_ranked.ids[i] + "\"");
        docs.push_back(d);
        positions.push_back(i);
    }
    auto features = featurize(ctx, query, docs, positions, docs.size());
    auto order = model.select_order(features.query_features, features.item_features, p_r);

    RankedList out;
    out.stage = RankStage::ranked;
    std::vector<std::vector<double>> prefix;
    for (size_t idx : order) {
        out.ids.push_back(pre_ranked.ids[idx]);
        prefix.push_back(features.item_features[idx]);
        out.scores.push_back(model.predict_quality(features.query_features, prefix));
    }
    return out;
}

using ReRankCriterion = std::function<double(const Document&)>;

// Numeric suffix of the id, as a recency proxy (newer items get larger ids in
// this corpus format).
inline ReRankCriterion recency_criterion() {
    return [](const Document& d) {
        size_t end = d.id.size();
        size_t begin = end;
        while (begin > 0 && std::isdigit(static_cast<unsigned char>(d.id[begin - 1]))) --begin;
        if (begin == end) return 0.0;
        return std::stod(d.id.substr(begin, end - begin));
    };
}

inline ReRankCriterion trust_criterion() {
    return [](const Document& d) { return d.trust; };
}

// Optional pointwise refinement: stable sort by the summed criterion scores.
// Empty criteria list is the identity.
inline RankedList re_rank(const MemoryStore& store, const RankedList& ranked,
                          const std::vector<ReRankCriterion>& criteria) {
    RankedList out;
    out.stage = RankStage::re_ranked;
    out.degraded = ranked.degraded;
    if (criteria.empty()) {
        out.ids = ranked.ids;
        out.scores = ranked.scores;
        return out;
    }

    std::vector<double> totals(ranked.ids.size(), 0.0);
    for (size_t i = 0; i < ranked.ids.size(); ++i) {
        const Document* d = store.find(ranked.ids[i]);
        if (!d) throw Error(ErrorCode::data, "unknown document \"" + ranked.ids[i] + "\"");
        for (const auto& criterion : criteria) totals[i] += criterion(*d);
    }
    std::vector<size_t> order(ranked.ids.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return totals[a] > totals[b]; });
    for (size_t idx : order) {
        out.ids.push_back(ranked.ids[idx]);
        out.scores.push_back(totals[idx]);
    }
    return out;
}

}  // namespace pistis
