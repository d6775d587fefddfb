#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "helpers/synthetic.hpp"
#include "pistis/pistis.hpp"

using namespace pistis;
namespace fs = std::filesystem;

namespace {

// Shared mock-mode harness over the synthetic corpus.
struct Harness {
    std::vector<Document> memory;
    std::vector<Document> queries;
    MemoryStore store;
    InvertedIndex index;
    VectorIndex vindex;
    MockGenerator generator;
    TokenOverlapScorer scorer;
    ExtractorBank bank = ExtractorBank::standard();
    ListwiseModel model;
    KvCache cache{64};

    explicit Harness(size_t topics = 6, size_t docs_per_topic = 6, size_t n_queries = 18,
                     double no_answer_rate = 0.05)
        : memory(synth::memory_corpus(topics, docs_per_topic)),
          queries(synth::query_corpus(n_queries, topics)),
          generator(0.25, no_answer_rate) {
        for (auto& d : memory) store.add_document(d);
        std::tie(index, vindex) = build_indexes(store.documents(), 32);
        generator.register_documents(memory);
        generator.register_documents(queries);
    }

    void train(size_t epochs = 80) {
        SimulationSetup setup{store,  index, vindex,    scorer, PromptTemplate::english(),
                              bank,   generator, MatchMode::bm25, 10};
        SimulationPlan plan;
        plan.n = 5;
        plan.k = 3;
        plan.m = 200;
        plan.seed = 7;
        auto sim = simulate(plan, setup, queries);
        auto sampled = stratified_sample(sim.records, 150, 7);
        TrainingDataOptions opts;
        opts.mode = MatchMode::bm25;
        opts.p_m = 10;
        opts.p_pr = 5;
        auto samples =
            build_training_samples(sampled, store, index, vindex, scorer, queries, opts);
        ListwiseHyperparams hp;
        hp.epochs = epochs;
        model = ListwiseModel::fit(samples, 5, hp, 7);
    }

    PipelineContext context(bool with_cache = false) {
        CascadeConfig cascade;
        cascade.p_m = 10;
        cascade.p_pr = 5;
        cascade.p_r = 3;
        cascade.mode = MatchMode::bm25;
        cascade.reason_paths = 1;
        return PipelineContext{store,
                               index,
                               vindex,
                               scorer,
                               generator,
                               bank,
                               model.fitted() ? &model : nullptr,
                               PromptTemplate::english(),
                               cascade,
                               LatencyMode::mock,
                               {},
                               {},
                               false,
                               7,
                               with_cache ? &cache : nullptr,
                               with_cache,
                               false};
    }
};

}  // namespace

TEST_CASE("cache hits skip every stage after matching") {
    Harness h;
    auto ctx = h.context(true);
    h.cache.put_answer(normalize_prompt(h.queries[0].text), "Answer: Q");

    auto run = run_query(ctx, h.queries[0], PipelineMode::baseline);
    CHECK(run.trace.cache_hit);
    CHECK(run.answer_text == "Answer: Q");
    CHECK(run.timing.pre_rank_ms == 0.0);
    CHECK(run.timing.rank_ms == 0.0);
    CHECK(run.timing.generate_ms == 0.0);
    CHECK(run.timing.total_ms == run.timing.match_ms);
}

TEST_CASE("answers are cached for identical normalized queries") {
    Harness h;
    auto ctx = h.context(true);
    auto first = run_query(ctx, h.queries[1], PipelineMode::baseline);
    CHECK_FALSE(first.trace.cache_hit);
    auto second = run_query(ctx, h.queries[1], PipelineMode::baseline);
    CHECK(second.trace.cache_hit);
    CHECK(second.answer_text == first.answer_text);
}

TEST_CASE("baseline and aligned traces differ only at the rank stage") {
    Harness h;
    h.train();
    auto ctx = h.context();

    bool any_rank_difference = false;
    for (const auto& q : h.queries) {
        auto baseline = run_query(ctx, q, PipelineMode::baseline);
        auto aligned = run_query(ctx, q, PipelineMode::aligned);
        CHECK(baseline.trace.matched == aligned.trace.matched);
        CHECK(baseline.trace.pre_ranked == aligned.trace.pre_ranked);
        if (baseline.trace.ranked != aligned.trace.ranked) any_rank_difference = true;

        // Each rank-stage output draws only from the pre-ranked pool.
        for (const auto& id : aligned.trace.ranked) {
            CHECK(std::find(aligned.trace.pre_ranked.begin(), aligned.trace.pre_ranked.end(),
                            id) != aligned.trace.pre_ranked.end());
        }
        CHECK(aligned.trace.ranked.size() == baseline.trace.ranked.size());
    }
    CHECK(any_rank_difference);
}

TEST_CASE("aligned mode without a model is an error") {
    Harness h;
    auto ctx = h.context();
    CHECK_THROWS_WITH_AS(run_query(ctx, h.queries[0], PipelineMode::aligned), "model not fitted",
                         Error);
}

TEST_CASE("mock stage timings sum exactly to the total") {
    Harness h;
    auto ctx = h.context();
    auto run = run_query(ctx, h.queries[2], PipelineMode::baseline);
    double sum = run.timing.match_ms + run.timing.pre_rank_ms + run.timing.rank_ms +
                 run.timing.generate_ms + run.timing.aggregate_ms;
    CHECK(std::abs(sum - run.timing.total_ms) <= 0.05 * run.timing.total_ms);
    CHECK(run.timing.total_ms >= run.timing.generate_ms);
}

TEST_CASE("the end-to-end trace matches the golden fixture") {
    Harness h;
    auto ctx = h.context();
    auto run = run_query(ctx, h.queries[0], PipelineMode::baseline);

    Json trace;
    trace["query"] = h.queries[0].id;
    trace["matched"] = run.trace.matched;
    trace["pre_ranked"] = run.trace.pre_ranked;
    trace["ranked"] = run.trace.ranked;
    trace["answer"] = run.answer_text;

    std::ifstream in(std::string(PISTIS_DATA_DIR) + "/golden_trace.json");
    REQUIRE(in.good());
    Json golden = Json::parse(in);
    CHECK(trace == golden);
}

TEST_CASE("evaluation reports accuracy 1.0 on an all-correct fixture") {
    // Queries that share a full keyword window with one same-topic document:
    // pre-ranking puts that document first, so the mock always answers gold.
    Harness h(4, 5, 0, 0.0);
    std::vector<Document> easy;
    for (size_t i = 0; i < 8; ++i) {
        size_t t = i % 4;
        std::string text = "What links " + synth::keyword(t, 0) + " " + synth::keyword(t, 1) +
                           " " + synth::keyword(t, 2) + " and e" + std::to_string(i) + "?\n" +
                           synth::kOptions;
        easy.push_back(Document::make("easy-" + std::to_string(i), text,
                                      synth::topic_name(t), synth::option_letter(t)));
    }
    h.generator.register_documents(easy);
    auto ctx = h.context();
    auto report = evaluate(ctx, easy, PipelineMode::baseline);
    CHECK(report.accuracy == doctest::Approx(1.0));
    CHECK(report.correct == 8);
    CHECK(report.rows.size() == 8);
}

TEST_CASE("evaluation rows are sorted by query id and complete") {
    Harness h;
    auto ctx = h.context();
    auto report = evaluate(ctx, h.queries, PipelineMode::baseline);
    CHECK(report.rows.size() == h.queries.size());
    for (size_t i = 1; i < report.rows.size(); ++i) {
        CHECK(report.rows[i - 1].query_id < report.rows[i].query_id);
    }
    CHECK(report.total == h.queries.size());
}

TEST_CASE("evaluation with workers matches single-threaded evaluation") {
    Harness h;
    auto ctx = h.context();
    auto seq = evaluate(ctx, h.queries, PipelineMode::baseline, 1);
    auto par = evaluate(ctx, h.queries, PipelineMode::baseline, 4);
    CHECK(seq.accuracy == par.accuracy);
    REQUIRE(seq.rows.size() == par.rows.size());
    for (size_t i = 0; i < seq.rows.size(); ++i) {
        CHECK(seq.rows[i].query_id == par.rows[i].query_id);
        CHECK(seq.rows[i].predicted == par.rows[i].predicted);
        CHECK(seq.rows[i].timing.total_ms == par.rows[i].timing.total_ms);
    }
}

TEST_CASE("empty query sets are rejected") {
    Harness h;
    auto ctx = h.context();
    CHECK_THROWS_AS(evaluate(ctx, {}, PipelineMode::baseline), Error);
}

TEST_CASE("tune returns the single feasible point") {
    Harness h;
    auto ctx = h.context();
    TuneSpace space;
    space.p_m_grid = {10};
    space.p_pr_grid = {5};
    space.p_r_grid = {3};
    space.l_th_ms = 1e9;
    auto result = tune(space, ctx.cascade, [&](const CascadeConfig& c) {
        PipelineContext candidate = ctx;
        candidate.cascade = c;
        return evaluate(candidate, h.queries, PipelineMode::baseline);
    });
    CHECK(result.best.p_m == 10);
    CHECK(result.best.p_pr == 5);
    CHECK(result.best.p_r == 3);
    CHECK(result.frontier.size() == 1);
}

// The brute-force oracle re-scans the emitted frontier CSV.
TEST_CASE("tune equals a brute-force scan of its own frontier") {
    Harness h;
    auto ctx = h.context();
    TuneSpace space;
    space.p_m_grid = {4, 8, 10};
    space.p_pr_grid = {2, 4, 5};
    space.p_r_grid = {1, 2, 3};
    auto evaluator = [&](const CascadeConfig& c) {
        PipelineContext candidate = ctx;
        candidate.cascade = c;
        return evaluate(candidate, h.queries, PipelineMode::baseline);
    };

    // Calibrate the budget to the median observed p95 so that both feasible
    // and infeasible grid points exist.
    space.l_th_ms = 1e9;
    auto survey = tune(space, ctx.cascade, evaluator);
    std::vector<double> p95s;
    for (const auto& r : survey.frontier) p95s.push_back(r.lat_p95);
    std::sort(p95s.begin(), p95s.end());
    space.l_th_ms = p95s[p95s.size() / 2];
    REQUIRE(p95s.front() < space.l_th_ms);
    REQUIRE(p95s.back() > space.l_th_ms);

    auto result = tune(space, ctx.cascade, evaluator);

    auto rows = frontier_from_csv(frontier_to_csv(result.frontier));
    REQUIRE(!rows.empty());
    const FrontierRow* best = nullptr;
    for (const auto& r : rows) {
        if (r.lat_p95 > space.l_th_ms) continue;
        if (!best || r.accuracy > best->accuracy ||
            (r.accuracy == best->accuracy && r.lat_p95 < best->lat_p95) ||
            (r.accuracy == best->accuracy && r.lat_p95 == best->lat_p95 &&
             std::array<size_t, 3>{r.p_m, r.p_pr, r.p_r} <
                 std::array<size_t, 3>{best->p_m, best->p_pr, best->p_r})) {
            best = &r;
        }
    }
    REQUIRE(best != nullptr);
    CHECK(result.best.p_m == best->p_m);
    CHECK(result.best.p_pr == best->p_pr);
    CHECK(result.best.p_r == best->p_r);

    // Some grid point must actually be infeasible for the budget to bite.
    bool any_infeasible = false;
    for (const auto& r : rows) any_infeasible |= r.lat_p95 > space.l_th_ms;
    CHECK(any_infeasible);
}

TEST_CASE("a budget below every latency is infeasible") {
    Harness h;
    auto ctx = h.context();
    TuneSpace space;
    space.p_m_grid = {4, 8};
    space.p_pr_grid = {2, 4};
    space.p_r_grid = {1, 2};
    space.l_th_ms = 0.001;
    auto evaluator = [&](const CascadeConfig& c) {
        PipelineContext candidate = ctx;
        candidate.cascade = c;
        return evaluate(candidate, h.queries, PipelineMode::baseline);
    };
    try {
        tune(space, ctx.cascade, evaluator);
        FAIL("expected infeasible");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::infeasible);
        CHECK(std::string(e.what()).find("minimum observed") != std::string::npos);
    }
}

TEST_CASE("downgrade keeps the config unchanged inside the hysteresis band") {
    CascadeConfig base;  // 10/5/5, paths 3
    base.l_th_ms = 100.0;
    auto level = downgrade_step(base, 80.0, base.l_th_ms, base);
    CHECK_FALSE(level.changed);
    CHECK(level.config.p_m == 10);
}

TEST_CASE("under 0.7 L_th at max config nothing changes") {
    CascadeConfig base;
    base.l_th_ms = 100.0;
    auto level = downgrade_step(base, 10.0, base.l_th_ms, base);
    CHECK_FALSE(level.changed);
}

// Rule arithmetic: 10 - ceil(10/4) = 7, floored at p_pr.
TEST_CASE("an over-budget step shaves a quarter off p_m") {
    CascadeConfig base;
    base.l_th_ms = 100.0;
    auto level = downgrade_step(base, 150.0, base.l_th_ms, base);
    CHECK(level.changed);
    CHECK(level.config.p_m == 7);
    CHECK(level.config.p_pr == 5);
    CHECK(level.config.p_r == 5);
}

TEST_CASE("repeated over-budget steps converge to the degraded fixed point") {
    CascadeConfig base;
    base.l_th_ms = 100.0;
    CascadeConfig current = base;
    int steps = 0;
    for (; steps < 20; ++steps) {
        auto level = downgrade_step(current, 1e6, base.l_th_ms, base);
        bool changed = level.changed;
        current = level.config;
        CHECK(current.p_r <= current.p_pr);
        CHECK(current.p_pr <= current.p_m);
        if (!changed) break;
    }
    CHECK(steps <= 6);
    CHECK(current.p_m == base.p_r);
    CHECK(current.p_pr == base.p_r);
    CHECK(current.reason_paths == 1);

    // Fixed point: further pressure changes nothing.
    auto level = downgrade_step(current, 1e6, base.l_th_ms, base);
    CHECK_FALSE(level.changed);
}

TEST_CASE("hysteresis restores service toward the base config") {
    CascadeConfig base;
    base.l_th_ms = 100.0;
    CascadeConfig degraded = base;
    degraded.p_m = 5;
    degraded.p_pr = 5;
    degraded.reason_paths = 1;

    auto step1 = downgrade_step(degraded, 10.0, base.l_th_ms, base);
    CHECK(step1.config.reason_paths == base.reason_paths);  // paths first
    auto step2 = downgrade_step(step1.config, 10.0, base.l_th_ms, base);
    CHECK(step2.config.p_m > 5);  // p_pr is pinned at p_m, so p_m grows next
    CascadeConfig current = step2.config;
    for (int i = 0; i < 10; ++i) {
        current = downgrade_step(current, 10.0, base.l_th_ms, base).config;
    }
    CHECK(current.p_m == base.p_m);
    CHECK(current.p_pr == base.p_pr);
    CHECK(current.reason_paths == base.reason_paths);
}

TEST_CASE("config files, env vars, and flags layer in order") {
    auto path = (fs::temp_directory_path() / "pistis_config_test.toml").string();
    {
        std::ofstream out(path);
        out << "# comment\n";
        out << "p_m = 12\n";
        out << "mode = \"bm25\"\n";
        out << "l_th_ms = 250.5\n";
    }
    unsetenv("PISTIS_P_PR");
    PistisConfig config;
    config.load_file(path);
    CHECK(config.p_m == 12);
    CHECK(config.mode == "bm25");
    CHECK(config.l_th_ms == doctest::Approx(250.5));

    setenv("PISTIS_P_PR", "4", 1);
    config.load_env();
    CHECK(config.p_pr == 4);
    unsetenv("PISTIS_P_PR");

    config.apply("p_r", "2");
    CHECK(config.p_r == 2);
    CHECK_NOTHROW(config.cascade().validate());

    CHECK_THROWS_AS(config.apply("bogus_key", "1"), Error);
    config.apply("p_r", "9");
    CHECK_THROWS_AS(config.cascade(), Error);  // 9 > p_pr: config error, no clamping
    fs::remove(path);
}

TEST_CASE("blocklisted terms are redacted from the final answer") {
    Harness h;
    auto ctx = h.context();
    std::vector<std::string> blocklist = {"answer"};
    ctx.blocklist = blocklist;
    auto run = run_query(ctx, h.queries[0], PipelineMode::baseline);
    CHECK(run.answer_text.find("Answer") == std::string::npos);
}
