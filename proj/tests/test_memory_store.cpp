#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pistis/memory_store.hpp"

using namespace pistis;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("pistis_store_" + name)).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("duplicate document ids are rejected") {
    MemoryStore store;
    store.add_document(Document::make("a", "text one"));
    CHECK_THROWS_AS(store.add_document(Document::make("a", "text two")), Error);
}

TEST_CASE("empty store round-trips") {
    auto path = temp_path("empty.jsonl");
    MemoryStore store;
    store.persist(path);
    auto loaded = MemoryStore::load(path);
    CHECK(loaded.documents().empty());
    CHECK(loaded.records().empty());
    fs::remove(path);
}

TEST_CASE("populated store round-trips bit-exactly") {
    MemoryStore store;
    for (int i = 0; i < 100; ++i) {
        auto doc = Document::make("doc-" + std::to_string(i),
                                  "token" + std::to_string(i) + " shared text body",
                                  "topic" + std::to_string(i % 5),
                                  static_cast<char>('A' + i % 4));
        if (i % 7 == 0) doc.trust = 0.5;
        store.add_document(std::move(doc));
    }
    MemoryRecord r;
    r.intent = "what is doc 3 about?";
    r.example_ids = {"doc-3", "doc-4"};
    r.output = "Answer: B";
    r.label = FeedbackLabel{LabelValue::Positive, LabelSource::Simulated};
    store.add_record(r);
    r.label = FeedbackLabel::from_action(LabelSource::Dislike);
    store.add_record(r);
    store.cache().put_answer("what is doc 3 about?", "Answer: B");
    store.cache().put_answer("another prompt", "Answer: C");
    store.cache().put_session_turn("session-1", SessionTurn{"q1", "a1"});
    store.cache().put_session_turn("session-1", SessionTurn{"q2", "a2"});

    auto path1 = temp_path("full1.jsonl");
    auto path2 = temp_path("full2.jsonl");
    store.persist(path1);
    auto loaded = MemoryStore::load(path1);
    loaded.persist(path2);

    CHECK(read_file(path1) == read_file(path2));
    CHECK(loaded.documents().size() == 100);
    CHECK(loaded.records().size() == 2);
    CHECK(loaded.records()[1].label.source == LabelSource::Dislike);
    CHECK(loaded.cache().get_answer("what is doc 3 about?").value() == "Answer: B");
    auto session = loaded.cache().get_session("session-1");
    REQUIRE(session.has_value());
    REQUIRE(session->size() == 2);
    CHECK((*session)[0].query == "q1");
    fs::remove(path1);
    fs::remove(path2);
}

TEST_CASE("a truncated JSON line reports its line number") {
    auto path = temp_path("broken.jsonl");
    {
        std::ofstream out(path);
        out << R"({"kind":"meta","version":1,"cache_capacity":10,"turns_per_session":4})" << "\n";
        out << R"({"kind":"doc","id":"a","text":"ok"})" << "\n";
        out << R"({"kind":"doc","id":"b","text":"trunc)" << "\n";
    }
    try {
        MemoryStore::load(path);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("cache get after put returns the value") {
    KvCache cache(4);
    cache.put_answer("key", "value");
    CHECK(cache.get_answer("key").value() == "value");
    CHECK_FALSE(cache.get_answer("missing").has_value());
}

TEST_CASE("LRU eviction at capacity 2") {
    LruMap<std::string> map(2);
    map.put("a", "1");
    map.put("b", "2");
    map.put("c", "3");
    CHECK_FALSE(map.get("a").has_value());
    CHECK(map.get("b").value() == "2");
    CHECK(map.get("c").value() == "3");

    // A get refreshes recency.
    map.get("b");
    map.put("d", "4");
    CHECK_FALSE(map.get("c").has_value());
    CHECK(map.get("b").has_value());
}

TEST_CASE("empty cache keys are rejected") {
    KvCache cache(4);
    CHECK_THROWS_AS(cache.put_answer("", "x"), Error);
}

// Both spellings normalize to the same key.
TEST_CASE("prompt keys are normalized by whitespace collapse and lowercasing") {
    KvCache cache(8);
    cache.put_answer(normalize_prompt("Q  ?"), "cached");
    CHECK(cache.get_answer(normalize_prompt("q ?")).value() == "cached");
}

TEST_CASE("session history is bounded per session") {
    KvCache cache(8, 3);
    for (int i = 0; i < 5; ++i) {
        cache.put_session_turn("s", SessionTurn{"q" + std::to_string(i), "a"});
    }
    auto history = cache.get_session("s");
    REQUIRE(history.has_value());
    REQUIRE(history->size() == 3);
    CHECK((*history)[0].query == "q2");
    CHECK((*history)[2].query == "q4");
}

TEST_CASE("corpus files load with validation") {
    auto path = temp_path("corpus.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"a","text":"hello world","topic":"t","gold_answer":"B"})" << "\n";
        out << R"({"id":"b","text":"second doc","trust":0.25})" << "\n";
    }
    auto docs = load_corpus(path);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].gold_answer.value() == 'B');
    CHECK(docs[0].tokens == std::vector<std::string>{"hello", "world"});
    CHECK(docs[1].trust == doctest::Approx(0.25));
    fs::remove(path);
}

TEST_CASE("feedback files round-trip labels") {
    auto path = temp_path("feedback.jsonl");
    std::vector<MemoryRecord> records(2);
    records[0].intent = "q1";
    records[0].example_ids = {"a", "b"};
    records[0].output = "Answer: A";
    records[0].label.value = LabelValue::Positive;
    records[1].intent = "q2";
    records[1].example_ids = {"c"};
    records[1].output = "nope";
    records[1].label.value = LabelValue::Negative;
    save_feedback(path, records);
    auto loaded = load_feedback(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].label.value == LabelValue::Positive);
    CHECK(loaded[1].label.value == LabelValue::Negative);
    CHECK(loaded[1].example_ids == std::vector<std::string>{"c"});
    fs::remove(path);
}

TEST_CASE("user action labels map one-to-one") {
    CHECK(FeedbackLabel::from_action(LabelSource::Copy).value == LabelValue::Positive);
    CHECK(FeedbackLabel::from_action(LabelSource::Regenerate).value == LabelValue::Even);
    CHECK(FeedbackLabel::from_action(LabelSource::Dislike).value == LabelValue::Negative);
    CHECK_THROWS_AS(FeedbackLabel::from_action(LabelSource::Simulated), Error);
}
