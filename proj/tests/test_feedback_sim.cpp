#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "helpers/synthetic.hpp"
#include "pistis/pistis.hpp"

using namespace pistis;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<MemoryRecord> fake_records(size_t positives, size_t evens, size_t negatives) {
    std::vector<MemoryRecord> records;
    auto add = [&](LabelValue v, size_t count) {
        for (size_t i = 0; i < count; ++i) {
            MemoryRecord r;
            r.intent = "q" + std::to_string(records.size());
            r.example_ids = {"d1"};
            r.output = "Answer: A";
            r.label.value = v;
            records.push_back(std::move(r));
        }
    };
    add(LabelValue::Positive, positives);
    add(LabelValue::Even, evens);
    add(LabelValue::Negative, negatives);
    return records;
}

}  // namespace

TEST_CASE("sample_lists covers all C(5,3) subsets with enough draws") {
    std::vector<std::string> pool = {"a", "b", "c", "d", "e"};
    SimulationPlan plan;
    plan.n = 5;
    plan.k = 3;
    plan.m = 2000;
    plan.seed = 11;
    auto lists = sample_lists(plan, pool);

    std::set<std::set<std::string>> subsets;
    std::set<std::vector<std::string>> ordered;
    for (const auto& l : lists) {
        subsets.insert(std::set<std::string>(l.begin(), l.end()));
        CHECK(ordered.insert(l).second);  // de-duplicated
        CHECK(l.size() == 3);
    }
    CHECK(subsets.size() == 10);        // all C(5,3)
    CHECK(ordered.size() <= 60);        // at most 5*4*3 ordered lists
}

TEST_CASE("k = n draws full-pool permutations") {
    std::vector<std::string> pool = {"x", "y", "z"};
    SimulationPlan plan;
    plan.n = 3;
    plan.k = 3;
    plan.m = 50;
    plan.seed = 4;
    auto lists = sample_lists(plan, pool);
    for (const auto& l : lists) {
        CHECK(std::set<std::string>(l.begin(), l.end()) ==
              std::set<std::string>{"x", "y", "z"});
    }
}

TEST_CASE("sampling is deterministic per seed") {
    std::vector<std::string> pool = {"a", "b", "c", "d"};
    SimulationPlan plan;
    plan.k = 2;
    plan.m = 30;
    plan.seed = 9;
    auto seed9 = sample_lists(plan, pool);
    CHECK(seed9 == sample_lists(plan, pool));
    plan.seed = 10;
    CHECK(seed9 != sample_lists(plan, pool));
}

TEST_CASE("k larger than the pool is rejected") {
    SimulationPlan plan;
    plan.k = 5;
    plan.m = 1;
    CHECK_THROWS_AS(sample_lists(plan, {"a", "b"}), Error);
}

TEST_CASE("plan strings parse") {
    auto plan = SimulationPlan::parse("8,3,500,42");
    CHECK(plan.n == 8);
    CHECK(plan.k == 3);
    CHECK(plan.m == 500);
    CHECK(plan.seed == 42);
    CHECK_THROWS_AS(SimulationPlan::parse("8,3"), Error);
}

TEST_CASE("stratified sampling respects quotas") {
    auto records = fake_records(1000, 500, 100);
    auto sampled = stratified_sample(records, 300, 13);
    std::map<LabelValue, size_t> counts;
    for (const auto& r : sampled) ++counts[r.label.value];
    CHECK(counts[LabelValue::Positive] == 300);
    CHECK(counts[LabelValue::Even] == 300);
    CHECK(counts[LabelValue::Negative] == 100);
}

TEST_CASE("stratified sampling edge quotas") {
    auto records = fake_records(5, 3, 2);
    CHECK(stratified_sample(records, 0, 1).empty());
    auto all = stratified_sample(records, 100, 1);
    CHECK(all.size() == records.size());
    CHECK(stratified_sample(records, 2, 7).size() == 6);
    // Determinism.
    auto a = stratified_sample(fake_records(50, 50, 50), 10, 3);
    auto b = stratified_sample(fake_records(50, 50, 50), 10, 3);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].intent == b[i].intent);
}

TEST_CASE("simulation output is deterministic and parseable") {
    auto memory = synth::memory_corpus(6, 6);
    auto queries = synth::query_corpus(12, 6);
    MemoryStore store;
    for (auto& d : memory) store.add_document(d);
    auto [ii, vi] = build_indexes(store.documents(), 32);

    MockGenerator generator(0.25, 0.05);
    generator.register_documents(memory);
    generator.register_documents(queries);
    TokenOverlapScorer scorer;
    auto bank = ExtractorBank::standard();

    SimulationSetup setup{store,  ii,   vi,        scorer, PromptTemplate::english(),
                          bank,   generator, MatchMode::bm25, 10};
    SimulationPlan plan;
    plan.n = 5;
    plan.k = 3;
    plan.m = 60;
    plan.seed = 7;

    auto run1 = simulate(plan, setup, queries);
    auto run2 = simulate(plan, setup, queries);

    auto path1 = (fs::temp_directory_path() / "pistis_sim1.jsonl").string();
    auto path2 = (fs::temp_directory_path() / "pistis_sim2.jsonl").string();
    save_feedback(path1, run1.records);
    save_feedback(path2, run2.records);
    CHECK(read_file(path1) == read_file(path2));

    auto loaded = load_feedback(path1);
    CHECK(loaded.size() == run1.records.size());

    size_t label_total = 0;
    for (const auto& [label, count] : run1.label_counts) label_total += count;
    CHECK(label_total == run1.records.size());
    fs::remove(path1);
    fs::remove(path2);
}

// The mock's closed-form rule, checked per record: topic-match-first lists
// are always Positive, and every label equals re-extracting the stored
// output against the query's gold answer.
TEST_CASE("simulated labels follow the order-sensitive mock rule") {
    auto memory = synth::memory_corpus(6, 6);
    auto queries = synth::query_corpus(18, 6);
    MemoryStore store;
    for (auto& d : memory) store.add_document(d);
    auto [ii, vi] = build_indexes(store.documents(), 32);

    MockGenerator generator(0.25, 0.05);
    generator.register_documents(memory);
    generator.register_documents(queries);
    TokenOverlapScorer scorer;
    auto bank = ExtractorBank::standard();

    SimulationSetup setup{store,  ii,   vi,        scorer, PromptTemplate::english(),
                          bank,   generator, MatchMode::bm25, 10};
    SimulationPlan plan;
    plan.n = 5;
    plan.k = 3;
    plan.m = 40;
    plan.seed = 3;

    auto result = simulate(plan, setup, queries);
    REQUIRE(result.records.size() > 50);

    std::map<std::string, const Document*> query_by_text;
    for (const auto& q : queries) query_by_text[normalize_prompt(q.text)] = &q;

    size_t topic_first = 0;
    for (const auto& r : result.records) {
        const Document* q = query_by_text.at(normalize_prompt(r.intent));
        const Document* first = store.find(r.example_ids[0]);
        REQUIRE(first != nullptr);
        if (first->topic && q->topic && *first->topic == *q->topic) {
            ++topic_first;
            CHECK(r.label.value == LabelValue::Positive);
        }
        CHECK(r.label.value == assign_label(bank.extract(r.output), *q->gold_answer).value);
    }
    CHECK(topic_first > 0);
    CHECK(result.label_counts[LabelValue::Even] > 0);
}

TEST_CASE("queries without a gold answer are a data error") {
    auto memory = synth::memory_corpus(3, 4);
    MemoryStore store;
    for (auto& d : memory) store.add_document(d);
    auto [ii, vi] = build_indexes(store.documents(), 16);
    MockGenerator generator;
    generator.register_documents(memory);
    TokenOverlapScorer scorer;
    auto bank = ExtractorBank::standard();
    SimulationSetup setup{store,  ii,   vi,        scorer, PromptTemplate::english(),
                          bank,   generator, MatchMode::bm25, 10};
    SimulationPlan plan;
    plan.n = 4;
    plan.k = 2;
    plan.m = 5;
    std::vector<Document> queries = {Document::make("q", "no gold answer here")};
    CHECK_THROWS_AS(simulate(plan, setup, queries), Error);
}
