#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pistis/cascade.hpp"
#include "pistis/generation.hpp"
#include "pistis/matching.hpp"
#include "pistis/memory_store.hpp"
#include "pistis/prompt.hpp"

namespace pistis {

// Monte Carlo plan: m draws of k-ordered lists from an n-item pool. Draws may
// repeat; identical ordered lists are de-duplicated, so the yield per pool is
// at most n!/(n-k)!.
struct SimulationPlan {
    size_t n = 5;
    size_t k = 3;
    size_t m = 100;
    uint64_t seed = 7;
    size_t quota = 0;  // per-label stratified-sampling quota (0 = keep all)

    static SimulationPlan parse(const std::string& spec) {
        auto parts = split(spec, ',');
        if (parts.size() != 4) {
            throw Error(ErrorCode::invalid_argument, "plan must be n,k,m,seed");
        }
        SimulationPlan plan;
        plan.n = std::stoull(parts[0]);
        plan.k = std::stoull(parts[1]);
        plan.m = std::stoull(parts[2]);
        plan.seed = std::stoull(parts[3]);
        return plan;
    }
};

// Each draw picks a uniform k-subset and a uniform order (one partial
// Fisher-Yates pass). Duplicates collapse; draw order is preserved.
inline std::vector<std::vector<std::string>> sample_lists(const SimulationPlan& plan,
                                                          const std::vector<std::string>& pool) {
    if (plan.k > pool.size()) {
        throw Error(ErrorCode::invalid_argument,
                    "k=" + std::to_string(plan.k) + " exceeds pool size " +
                        std::to_string(pool.size()));
    }
    if (plan.k == 0) throw Error(ErrorCode::invalid_argument, "k must be >= 1");

    Rng rng(splitmix64(plan.seed));
    std::vector<std::vector<std::string>> lists;
    std::set<std::vector<std::string>> seen;
    std::vector<size_t> indices(pool.size());
    for (size_t draw = 0; draw < plan.m; ++draw) {
        for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        std::vector<std::string> list;
        list.reserve(plan.k);
        for (size_t i = 0; i < plan.k; ++i) {
            size_t j = i + static_cast<size_t>(rng.next_below(indices.size() - i));
            std::swap(indices[i], indices[j]);
            list.push_back(pool[indices[i]]);
        }
        if (seen.insert(list).second) lists.push_back(std::move(list));
    }
    return lists;
}

// Uniform within-class sample without replacement, up to `quota` per label;
// classes at or under the quota pass through whole. Output preserves the
// input's relative order.
inline std::vector<MemoryRecord> stratified_sample(const std::vector<MemoryRecord>& records,
                                                   size_t quota, uint64_t seed) {
    std::map<LabelValue, std::vector<size_t>> classes;
    for (size_t i = 0; i < records.size(); ++i) classes[records[i].label.value].push_back(i);

    std::set<size_t> selected;
    for (auto& [label, members] : classes) {
        if (members.size() <= quota) {
            selected.insert(members.begin(), members.end());
            continue;
        }
        Rng rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(label) + 1)));
        for (size_t i = 0; i < quota; ++i) {
            size_t j = i + static_cast<size_t>(rng.next_below(members.size() - i));
            std::swap(members[i], members[j]);
            selected.insert(members[i]);
        }
    }

    std::vector<MemoryRecord> out;
    out.reserve(selected.size());
    for (size_t i : selected) out.push_back(records[i]);
    return out;
}

struct SimulationSetup {
    const MemoryStore& store;
    const InvertedIndex& index;
    const VectorIndex& vindex;
    const CrossScorer& scorer;
    PromptTemplate prompt_template;
    const ExtractorBank& bank;
    Generator& generator;
    MatchMode mode = MatchMode::bm25;
    size_t p_m = 10;
};

struct SimulationResult {
    std::vector<MemoryRecord> records;
    std::map<LabelValue, size_t> label_counts;
    size_t queries_processed = 0;
    size_t queries_skipped = 0;   // candidate pool smaller than k
    size_t generator_failures = 0;
};

// Behavior simulation over a multiple-choice query corpus: retrieve with
// self-exclusion, pre-rank to the top-n pool, draw sampled orderings, prompt,
// generate, extract, label. Queries run in ascending id order and draws keep
// their draw index, so the output stream is stable given a seed.
inline SimulationResult simulate(const SimulationPlan& plan, const SimulationSetup& setup,
                                 const std::vector<Document>& queries) {
    if (queries.empty()) throw Error(ErrorCode::invalid_argument, "no queries to simulate");

    std::vector<const Document*> ordered;
    ordered.reserve(queries.size());
    for (const auto& q : queries) ordered.push_back(&q);
    std::sort(ordered.begin(), ordered.end(),
              [](const Document* a, const Document* b) { return a->id < b->id; });

    MatchOptions opts;
    opts.mode = setup.mode;
    opts.top_k = setup.p_m;
    opts.exclude_self = true;
    opts.use_cache = false;

    SimulationResult result;
    for (const Document* query : ordered) {
        if (!query->gold_answer) {
            throw Error(ErrorCode::data, "query \"" + query->id + "\" has no gold answer");
        }
        auto matched = match(setup.store, setup.index, setup.vindex, query->text, opts);
        auto pool = pre_rank(setup.store, query->text, matched.candidates, setup.scorer, plan.n);
        if (pool.ids.size() < plan.k) {
            ++result.queries_skipped;
            continue;
        }
        ++result.queries_processed;

        SimulationPlan per_query = plan;
        per_query.seed = splitmix64(plan.seed ^ fnv1a64(query->id));
        auto lists = sample_lists(per_query, pool.ids);

        for (const auto& list : lists) {
            std::vector<const Document*> docs;
            docs.reserve(list.size());
            for (const auto& id : list) {
                const Document* d = setup.store.find(id);
                if (!d) throw Error(ErrorCode::data, "unknown document \"" + id + "\"");
                docs.push_back(d);
            }
            std::string prompt = build_prompt(setup.prompt_template, docs, *query);

            std::string output;
            try {
                GeneratorParams params;
                params.seed = plan.seed;
                output = setup.generator.generate(prompt, params);
            } catch (const std::exception&) {
                ++result.generator_failures;
                continue;
            }

            MemoryRecord record;
            record.intent = query->text;
            record.example_ids = list;
            record.output = output;
            record.label = assign_label(setup.bank.extract(output), *query->gold_answer);
            ++result.label_counts[record.label.value];
            result.records.push_back(std::move(record));
        }
    }
    return result;
}

}  // namespace pistis
