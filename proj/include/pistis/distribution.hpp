#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pistis/document.hpp"
#include "pistis/util.hpp"

namespace pistis {

// Additively smoothed token distribution over an explicit vocabulary.
struct TokenDistribution {
    std::map<std::string, double> probs;
    double smoothing = 0.0;

    static TokenDistribution from_counts(const std::map<std::string, size_t>& counts,
                                         const std::set<std::string>& vocab,
                                         double alpha) {
        TokenDistribution dist;
        dist.smoothing = alpha;
        double total = 0.0;
        for (const auto& t : vocab) {
            auto it = counts.find(t);
            total += alpha + (it == counts.end() ? 0.0 : static_cast<double>(it->second));
        }
        for (const auto& t : vocab) {
            auto it = counts.find(t);
            double c = alpha + (it == counts.end() ? 0.0 : static_cast<double>(it->second));
            dist.probs[t] = c / total;
        }
        return dist;
    }

    static TokenDistribution from_tokens(const std::vector<std::string>& tokens,
                                         const std::set<std::string>& vocab,
                                         double alpha) {
        std::map<std::string, size_t> counts;
        for (const auto& t : tokens) ++counts[t];
        return from_counts(counts, vocab, alpha);
    }
};

// KL(p || q) = sum p(t) ln(p(t)/q(t)), natural log. Requires both
// distributions to be smoothing-completed over the same vocabulary.
inline double kl_divergence(const TokenDistribution& p, const TokenDistribution& q) {
    if (p.probs.size() != q.probs.size()) {
        throw Error(ErrorCode::invalid_argument, "distributions have different supports");
    }
    double kl = 0.0;
    auto qi = q.probs.begin();
    for (auto pi = p.probs.begin(); pi != p.probs.end(); ++pi, ++qi) {
        if (pi->first != qi->first) {
            throw Error(ErrorCode::invalid_argument, "distributions have different supports");
        }
        if (pi->second <= 0.0 || qi->second <= 0.0) {
            throw Error(ErrorCode::invalid_argument, "invalid distribution");
        }
        kl += pi->second * std::log(pi->second / qi->second);
    }
    return kl;
}

struct FilterResult {
    std::vector<Document> kept;
    std::vector<Document> dropped;
    std::vector<double> divergences;  // KL(doc || corpus) per input doc
};

inline constexpr double kAutoKlThreshold = -1.0;

// Drops documents whose token distribution diverges from the corpus-wide
// distribution by more than `threshold` nats. `threshold` < 0 selects the
// default of 4x the median per-document divergence; `alpha` < 0 selects
// 0.5 / |vocab|.
inline FilterResult filter_outliers(const std::vector<Document>& docs,
                                    double threshold = kAutoKlThreshold,
                                    double alpha = -1.0) {
    if (docs.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");

    std::set<std::string> vocab;
    std::map<std::string, size_t> corpus_counts;
    for (const auto& d : docs) {
        for (const auto& t : d.tokens) {
            vocab.insert(t);
            ++corpus_counts[t];
        }
    }
    if (vocab.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
    if (alpha < 0.0) alpha = 0.5 / static_cast<double>(vocab.size());

    auto corpus_dist = TokenDistribution::from_counts(corpus_counts, vocab, alpha);

    FilterResult result;
    result.divergences.reserve(docs.size());
    for (const auto& d : docs) {
        auto doc_dist = TokenDistribution::from_tokens(d.tokens, vocab, alpha);
        result.divergences.push_back(kl_divergence(doc_dist, corpus_dist));
    }

    if (threshold < 0.0) {
        std::vector<double> sorted = result.divergences;
        std::sort(sorted.begin(), sorted.end());
        double median = sorted[sorted.size() / 2];
        // Floor keeps degenerate corpora (all divergences 0) from dropping everything.
        threshold = std::max(4.0 * median, 1e-9);
    }
    if (threshold <= 0.0) {
        throw Error(ErrorCode::invalid_argument, "KL threshold must be positive");
    }

    for (size_t i = 0; i < docs.size(); ++i) {
        if (result.divergences[i] > threshold) {
            result.dropped.push_back(docs[i]);
        } else {
            result.kept.push_back(docs[i]);
        }
    }
    return result;
}

}  // namespace pistis
