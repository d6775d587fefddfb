#pragma once

#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pistis/cascade.hpp"
#include "pistis/generation.hpp"
#include "pistis/kv_cache.hpp"
#include "pistis/listwise.hpp"
#include "pistis/matching.hpp"
#include "pistis/memory_store.hpp"
#include "pistis/prompt.hpp"

namespace pistis {

// Wall-clock timing measures real durations; mock timing derives each stage
// duration from the work actually performed, which keeps full mock-mode runs
// byte-reproducible and gives the tuner a latency surface that grows with
// the truncation parameters.
enum class LatencyMode { wall, mock };

struct StageTiming {
    double match_ms = 0.0;
    double pre_rank_ms = 0.0;
    double rank_ms = 0.0;
    double generate_ms = 0.0;
    double aggregate_ms = 0.0;
    double total_ms = 0.0;
};

namespace detail {

inline double arrangements(size_t n, size_t k) {
    double a = 1.0;
    for (size_t i = 0; i < k; ++i) a *= static_cast<double>(n - i);
    return a;
}

struct MockCost {
    static double match(size_t p_m) { return 0.4 + 0.03 * static_cast<double>(p_m); }
    static double pre_rank(size_t candidates) {
        return 0.2 + 0.05 * static_cast<double>(candidates);
    }
    static double rank(size_t pool, size_t p_r) {
        if (pool == 0) return 0.0;
        double evals = pool <= 6 ? arrangements(pool, p_r)
                                 : 8.0 * static_cast<double>(p_r) * static_cast<double>(pool);
        return 0.1 + 0.02 * evals;
    }
    static double generate(size_t paths, size_t prompt_chars) {
        return static_cast<double>(paths) * (3.0 + 0.001 * static_cast<double>(prompt_chars));
    }
    static double aggregate(size_t paths) { return 0.05 + 0.05 * static_cast<double>(paths); }
};

class StageStopwatch {
public:
    void start() { begin_ = std::chrono::steady_clock::now(); }
    double stop() const {
        auto end = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(end - begin_).count();
    }

private:
    std::chrono::steady_clock::time_point begin_;
};

}  // namespace detail

enum class PipelineMode { baseline, aligned };

inline const char* pipeline_mode_name(PipelineMode m) {
    return m == PipelineMode::baseline ? "baseline" : "aligned";
}

struct QueryTrace {
    std::vector<std::string> matched;
    std::vector<std::string> pre_ranked;
    std::vector<std::string> ranked;
    bool cache_hit = false;
    bool pre_rank_degraded = false;
    std::string mode;
};

struct RunResult {
    std::string answer_text;
    std::optional<char> answer_letter;
    double confidence = 0.0;
    std::vector<std::string> citations;
    StageTiming timing;
    QueryTrace trace;
};

// Everything a query needs. Indexes and model are immutable and shared;
// `cache` is the only mutable piece and is optional.
struct PipelineContext {
    const MemoryStore& store;
    const InvertedIndex& index;
    const VectorIndex& vindex;
    const CrossScorer& scorer;
    Generator& generator;
    const ExtractorBank& bank;
    const ListwiseModel* model = nullptr;  // required for aligned mode
    PromptTemplate prompt_template;
    CascadeConfig cascade;
    LatencyMode latency = LatencyMode::mock;
    std::vector<ReRankCriterion> criteria;
    std::vector<std::string> blocklist;
    bool markdown = false;
    uint64_t seed = 7;
    KvCache* cache = nullptr;
    bool cache_answers = false;
    bool exclude_self = false;
};

inline RunResult run_query(const PipelineContext& ctx, const Document& query, PipelineMode mode) {
    ctx.cascade.validate();
    if (mode == PipelineMode::aligned && (!ctx.model || !ctx.model->fitted())) {
        throw Error(ErrorCode::not_fitted, "model not fitted");
    }

    RunResult result;
    result.trace.mode = pipeline_mode_name(mode);
    detail::StageStopwatch watch;
    bool mock_time = ctx.latency == LatencyMode::mock;

    // Matching (with prompt-answer cache short circuit).
    MatchOptions mopts;
    mopts.mode = ctx.cascade.mode;
    mopts.top_k = ctx.cascade.p_m;
    mopts.exclude_self = ctx.exclude_self;
    mopts.use_cache = ctx.cache != nullptr;
    watch.start();
    auto matched = match(ctx.store, ctx.index, ctx.vindex, query.text, mopts, ctx.cache);
    result.timing.match_ms = mock_time ? detail::MockCost::match(ctx.cascade.p_m) : watch.stop();
    for (const auto& c : matched.candidates) result.trace.matched.push_back(c.doc_id);

    if (matched.cached_answer) {
        result.trace.cache_hit = true;
        result.answer_text = *matched.cached_answer;
        result.answer_letter = ctx.bank.extract(result.answer_text);
        result.confidence = 1.0;
        result.timing.total_ms = result.timing.match_ms;
        return result;
    }

    // Pre-ranking.
    watch.start();
    auto pool = pre_rank(ctx.store, query.text, matched.candidates, ctx.scorer, ctx.cascade.p_pr);
    result.timing.pre_rank_ms =
        mock_time ? detail::MockCost::pre_rank(matched.candidates.size()) : watch.stop();
    result.trace.pre_ranked = pool.ids;
    result.trace.pre_rank_degraded = pool.degraded;

    // Ranking: the aligned ranker reorders the pool; the naive baseline keeps
    // the pre-rank (semantic) order.
    size_t shots = std::min(ctx.cascade.p_r, pool.ids.size());
    RankedList ranked;
    watch.start();
    if (mode == PipelineMode::aligned && shots > 0) {
        FeatureContext fctx{ctx.index, ctx.vindex};
        ranked = rank(fctx, ctx.store, query, pool, *ctx.model, shots);
        result.timing.rank_ms =
            mock_time ? detail::MockCost::rank(pool.ids.size(), shots) : watch.stop();
    } else {
        ranked.stage = RankStage::ranked;
        ranked.ids.assign(pool.ids.begin(), pool.ids.begin() + shots);
        ranked.scores.assign(pool.scores.begin(), pool.scores.begin() + shots);
        result.timing.rank_ms = 0.0;
    }
    if (!ctx.criteria.empty()) {
        ranked = re_rank(ctx.store, ranked, ctx.criteria);
    }
    result.trace.ranked = ranked.ids;

    // Prompting + multi-path reasoning.
    std::vector<const Document*> examples;
    for (const auto& id : ranked.ids) {
        const Document* d = ctx.store.find(id);
        if (!d) throw Error(ErrorCode::data, "unknown document \"" + id + "\"");
        examples.push_back(d);
    }
    std::string prompt = build_prompt(ctx.prompt_template, examples, query);
    watch.start();
    auto outputs = reason_multipath(ctx.generator, prompt, ctx.cascade.reason_paths, ctx.seed);
    result.timing.generate_ms =
        mock_time ? detail::MockCost::generate(ctx.cascade.reason_paths, prompt.size())
                  : watch.stop();

    // Aggregation, citations, safety, formatting.
    watch.start();
    auto agg = aggregate_self_consistency(outputs, ctx.bank);
    for (const Document* d : examples) agg.citations.push_back(d->id);
    std::sort(agg.citations.begin(), agg.citations.end());
    std::string formatted = format_answer(agg, examples, ctx.markdown);
    agg.safety = safety_filter(formatted, ctx.blocklist);
    result.timing.aggregate_ms =
        mock_time ? detail::MockCost::aggregate(outputs.size()) : watch.stop();

    result.answer_text = agg.safety.redacted_text;
    result.answer_letter = agg.answer;
    result.confidence = agg.confidence;
    result.citations = agg.citations;
    result.timing.total_ms = result.timing.match_ms + result.timing.pre_rank_ms +
                             result.timing.rank_ms + result.timing.generate_ms +
                             result.timing.aggregate_ms;

    if (ctx.cache && ctx.cache_answers) {
        ctx.cache->put_answer(normalize_prompt(query.text), result.answer_text);
    }
    return result;
}

// --------------------------------------------------------------------------
// Evaluation
// --------------------------------------------------------------------------

struct EvalRow {
    std::string query_id;
    std::string predicted;  // empty when no answer was extracted
    std::string gold;
    bool correct = false;
    bool cache_hit = false;
    StageTiming timing;
};

struct LatencySummary {
    StageTiming mean;
    StageTiming p50;
    StageTiming p95;
};

struct EvalReport {
    double accuracy = 0.0;
    size_t correct = 0;
    size_t total = 0;
    LatencySummary latency;
    std::vector<EvalRow> rows;
    std::string mode;
    CascadeConfig config;

    Json to_json() const {
        Json j;
        j["accuracy"] = accuracy;
        j["correct"] = correct;
        j["total"] = total;
        j["mode"] = mode;
        j["config"] = {{"p_m", config.p_m},
                       {"p_pr", config.p_pr},
                       {"p_r", config.p_r},
                       {"l_th_ms", config.l_th_ms},
                       {"mode", match_mode_name(config.mode)},
                       {"reason_paths", config.reason_paths}};
        auto timing_json = [](const StageTiming& t) {
            return Json{{"match_ms", t.match_ms},         {"pre_rank_ms", t.pre_rank_ms},
                        {"rank_ms", t.rank_ms},           {"generate_ms", t.generate_ms},
                        {"aggregate_ms", t.aggregate_ms}, {"total_ms", t.total_ms}};
        };
        j["latency"] = {{"mean", timing_json(latency.mean)},
                        {"p50", timing_json(latency.p50)},
                        {"p95", timing_json(latency.p95)}};
        Json rows_json = Json::array();
        for (const auto& r : rows) {
            rows_json.push_back(Json{{"query_id", r.query_id},
                                     {"predicted", r.predicted},
                                     {"gold", r.gold},
                                     {"correct", r.correct},
                                     {"cache_hit", r.cache_hit},
                                     {"total_ms", r.timing.total_ms}});
        }
        j["rows"] = rows_json;
        return j;
    }

    void save(const std::string& path) const {
        auto out = open_for_write(path);
        out << to_json().dump(2) << "\n";
    }
};

namespace detail {

inline LatencySummary summarize_latency(const std::vector<EvalRow>& rows) {
    auto collect = [&](auto field) {
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) v.push_back(field(r.timing));
        return v;
    };
    LatencySummary s;
    struct Field {
        double StageTiming::*member;
    };
    const std::vector<Field> fields = {{&StageTiming::match_ms},    {&StageTiming::pre_rank_ms},
                                       {&StageTiming::rank_ms},     {&StageTiming::generate_ms},
                                       {&StageTiming::aggregate_ms}, {&StageTiming::total_ms}};
    for (const auto& f : fields) {
        auto values = collect([&](const StageTiming& t) { return t.*(f.member); });
        s.mean.*(f.member) = mean(values);
        s.p50.*(f.member) = percentile(values, 50.0);
        s.p95.*(f.member) = percentile(values, 95.0);
    }
    return s;
}

}  // namespace detail

// Runs every query (ascending id order in the report), scores extracted
// answers against gold letters, and aggregates per-stage latency. Queries may
// fan out over `workers` threads; row assembly is index-addressed, so the
// report does not depend on scheduling.
inline EvalReport evaluate(const PipelineContext& ctx, const std::vector<Document>& queries,
                           PipelineMode mode, size_t workers = 1) {
    if (queries.empty()) throw Error(ErrorCode::invalid_argument, "empty query set");

    std::vector<const Document*> ordered;
    ordered.reserve(queries.size());
    for (const auto& q : queries) {
        if (!q.gold_answer) {
            throw Error(ErrorCode::data, "query \"" + q.id + "\" has no gold answer");
        }
        ordered.push_back(&q);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const Document* a, const Document* b) { return a->id < b->id; });

    EvalReport report;
    report.mode = pipeline_mode_name(mode);
    report.config = ctx.cascade;
    report.rows.resize(ordered.size());

    std::exception_ptr failure;
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= ordered.size() || failed.load()) return;
            const Document& q = *ordered[i];
            try {
                auto run = run_query(ctx, q, mode);
                EvalRow row;
                row.query_id = q.id;
                row.predicted = run.answer_letter ? std::string(1, *run.answer_letter) : "";
                row.gold = std::string(1, *q.gold_answer);
                row.correct = run.answer_letter && *run.answer_letter == *q.gold_answer;
                row.cache_hit = run.trace.cache_hit;
                row.timing = run.timing;
                report.rows[i] = std::move(row);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };

    workers = std::max<size_t>(1, std::min(workers, ordered.size()));
    if (ctx.cache != nullptr || !ctx.generator.thread_safe()) workers = 1;
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (const auto& row : report.rows) {
        if (row.correct) ++report.correct;
    }
    report.total = report.rows.size();
    report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
    report.latency = detail::summarize_latency(report.rows);
    return report;
}

}  // namespace pistis
