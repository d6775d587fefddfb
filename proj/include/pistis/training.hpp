#pragma once

#include <map>
#include <string>
#include <vector>

#include "pistis/cascade.hpp"
#include "pistis/feedback_sim.hpp"
#include "pistis/listwise.hpp"
#include "pistis/matching.hpp"
#include "pistis/memory_store.hpp"

namespace pistis {

struct TrainingDataOptions {
    MatchMode mode = MatchMode::bm25;
    size_t p_m = 10;
    size_t p_pr = 5;
};

// Turns feedback records into listwise samples. Features are recomputed the
// same way the online cascade computes them: the intent is matched and
// pre-ranked to rebuild the candidate pool, and each recorded example gets
// its position within that pool. Intents not present in the query corpus
// fall back to a synthetic query document without a topic tag.
inline std::vector<ListwiseSample> build_training_samples(
    const std::vector<MemoryRecord>& records, const MemoryStore& store,
    const InvertedIndex& index, const VectorIndex& vindex, const CrossScorer& scorer,
    const std::vector<Document>& query_corpus, const TrainingDataOptions& options) {
    FeatureContext ctx{index, vindex};

    std::map<std::string, const Document*> query_lookup;
    for (const auto& q : query_corpus) query_lookup[normalize_prompt(q.text)] = &q;

    MatchOptions mopts;
    mopts.mode = options.mode;
    mopts.top_k = options.p_m;
    mopts.exclude_self = true;
    mopts.use_cache = false;

    std::map<std::string, std::vector<std::string>> pool_cache;
    std::map<std::string, Document> synthetic_queries;

    std::vector<ListwiseSample> samples;
    samples.reserve(records.size());
    for (const auto& record : records) {
        std::string key = normalize_prompt(record.intent);

        const Document* query = nullptr;
        if (auto it = query_lookup.find(key); it != query_lookup.end()) {
            query = it->second;
        } else {
            auto [sit, inserted] = synthetic_queries.try_emplace(key);
            if (inserted) sit->second = Document::make("intent", record.intent);
            query = &sit->second;
        }

        auto pit = pool_cache.find(key);
        if (pit == pool_cache.end()) {
            auto matched = match(store, index, vindex, record.intent, mopts);
            auto pool = pre_rank(store, record.intent, matched.candidates, scorer, options.p_pr);
            pit = pool_cache.emplace(key, std::move(pool.ids)).first;
        }
        const auto& pool_ids = pit->second;

        std::vector<const Document*> docs;
        std::vector<size_t> positions;
        bool usable = true;
        for (const auto& id : record.example_ids) {
            const Document* d = store.find(id);
            if (!d) {
                usable = false;  // example dropped from memory since recording
                break;
            }
            docs.push_back(d);
            size_t pos = pool_ids.size();
            for (size_t i = 0; i < pool_ids.size(); ++i) {
                if (pool_ids[i] == id) {
                    pos = i;
                    break;
                }
            }
            positions.push_back(std::min(pos, pool_ids.empty() ? size_t{0} : pool_ids.size() - 1));
        }
        if (!usable || docs.empty()) continue;

        ListwiseSample sample;
        auto features = featurize(ctx, *query, docs, positions,
                                  std::max(pool_ids.size(), docs.size()));
        sample.query_features = std::move(features.query_features);
        sample.item_features = std::move(features.item_features);
        sample.label = record.label.value;
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace pistis
