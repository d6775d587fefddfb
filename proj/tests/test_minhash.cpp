#include <doctest.h>

#include <cmath>

#include "helpers/oracles.hpp"
#include "pistis/minhash.hpp"
#include "pistis/util.hpp"

using namespace pistis;

namespace {

std::vector<std::string> random_tokens(Rng& rng, size_t count, size_t vocab) {
    std::vector<std::string> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        out.push_back("w" + std::to_string(rng.next_below(vocab)));
    }
    return out;
}

}  // namespace

TEST_CASE("identical token lists and seeds give identical signatures") {
    std::vector<std::string> tokens = {"the", "quick", "brown", "fox", "jumps"};
    auto a = minhash_signature(tokens, 64, 42);
    auto b = minhash_signature(tokens, 64, 42);
    CHECK(a.hashes == b.hashes);
    CHECK(estimate_jaccard(a, b) == doctest::Approx(1.0));
}

TEST_CASE("same shingle set estimates Jaccard 1.0") {
    // Both lists produce the single whole-list shingle when shorter than 3.
    auto a = minhash_signature({"x", "y"}, 128, 7);
    auto b = minhash_signature({"x", "y"}, 128, 7);
    CHECK(estimate_jaccard(a, b) == doctest::Approx(1.0));
}

TEST_CASE("disjoint shingle sets estimate 0") {
    auto a = minhash_signature({"a", "b", "c", "d"}, 128, 3);
    auto b = minhash_signature({"p", "q", "r", "s"}, 128, 3);
    CHECK(estimate_jaccard(a, b) == doctest::Approx(0.0));
}

TEST_CASE("empty token list is rejected") {
    CHECK_THROWS_WITH_AS(minhash_signature({}, 128, 0), "empty document", Error);
}

TEST_CASE("signatures with different hash counts or seeds are incompatible") {
    auto a = minhash_signature({"a", "b", "c"}, 64, 1);
    auto b = minhash_signature({"a", "b", "c"}, 128, 1);
    auto c = minhash_signature({"a", "b", "c"}, 64, 2);
    CHECK_THROWS_WITH_AS(estimate_jaccard(a, b), "incompatible signatures", Error);
    CHECK_THROWS_WITH_AS(estimate_jaccard(a, c), "incompatible signatures", Error);
}

TEST_CASE("estimate is symmetric and within [0,1]") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        auto ta = random_tokens(rng, 8 + rng.next_below(20), 30);
        auto tb = random_tokens(rng, 8 + rng.next_below(20), 30);
        auto a = minhash_signature(ta, 128, 5);
        auto b = minhash_signature(tb, 128, 5);
        double ab = estimate_jaccard(a, b);
        CHECK(ab == estimate_jaccard(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }
}

// Expected values from the exact shingle-set intersection oracle.
TEST_CASE("1000 random pairs: mean absolute error at most 0.05 at 128 hashes") {
    Rng rng(2024);
    double total_err = 0.0;
    size_t in_band = 0;
    const size_t pairs = 1000;
    for (size_t p = 0; p < pairs; ++p) {
        auto base = random_tokens(rng, 20 + rng.next_below(30), 50);
        // Mutate a random fraction to sweep the Jaccard range.
        auto other = base;
        size_t mutations = rng.next_below(base.size());
        for (size_t m = 0; m < mutations; ++m) {
            other[rng.next_below(other.size())] = "m" + std::to_string(rng.next_below(50));
        }
        double exact = oracle::exact_jaccard(base, other);
        auto sa = minhash_signature(base, 128, 77);
        auto sb = minhash_signature(other, 128, 77);
        double est = estimate_jaccard(sa, sb);
        total_err += std::abs(est - exact);
        double band = 2.0 * std::sqrt(exact * (1.0 - exact) / 128.0);
        if (std::abs(est - exact) <= band) ++in_band;
    }
    CHECK(total_err / static_cast<double>(pairs) <= 0.05);
    // Two-sigma coverage should hold for at least 93% of pairs.
    CHECK(static_cast<double>(in_band) / static_cast<double>(pairs) >= 0.93);
}

TEST_CASE("pair with exact J=0.5: mean estimate over 10k seeds lands in [0.45, 0.55]") {
    // 11 tokens, 8 shared prefix: 9 shingles each, 6 common -> J = 6/12.
    std::vector<std::string> a, b;
    for (int i = 0; i < 8; ++i) {
        a.push_back("c" + std::to_string(i));
        b.push_back("c" + std::to_string(i));
    }
    for (int i = 0; i < 3; ++i) {
        a.push_back("a" + std::to_string(i));
        b.push_back("b" + std::to_string(i));
    }
    REQUIRE(oracle::exact_jaccard(a, b) == doctest::Approx(0.5));

    double sum = 0.0;
    const size_t trials = 10000;
    for (size_t seed = 0; seed < trials; ++seed) {
        auto sa = minhash_signature(a, 128, seed);
        auto sb = minhash_signature(b, 128, seed);
        sum += estimate_jaccard(sa, sb);
    }
    double mean_estimate = sum / static_cast<double>(trials);
    CHECK(mean_estimate >= 0.45);
    CHECK(mean_estimate <= 0.55);
}

TEST_CASE("deduplicate removes an exact duplicate pair at threshold 0.9") {
    std::vector<Document> docs;
    docs.push_back(Document::make("doc-a", "the quick brown fox jumps over the lazy dog"));
    docs.push_back(Document::make("doc-b", "completely different words in this text body here"));
    docs.push_back(Document::make("doc-c", "the quick brown fox jumps over the lazy dog"));
    auto result = deduplicate(docs, 0.9);
    REQUIRE(result.size() == 2);
    CHECK(result[0].id == "doc-a");
    CHECK(result[1].id == "doc-b");
}

TEST_CASE("all-distinct corpus passes through unchanged") {
    std::vector<Document> docs;
    Rng rng(5);
    for (int i = 0; i < 12; ++i) {
        std::string text;
        for (int w = 0; w < 12; ++w) {
            text += "d" + std::to_string(i) + "w" + std::to_string(w) + " ";
        }
        docs.push_back(Document::make("doc-" + std::to_string(i), text));
    }
    auto result = deduplicate(docs, 0.9);
    CHECK(result.size() == docs.size());
}

// Ground truth decided by the exact-Jaccard oracle: the 10 planted copies are
// near-duplicates (J >= 0.95) of their bases; everything else is far apart.
TEST_CASE("planted near-duplicates are removed exactly") {
    std::vector<Document> docs;
    Rng rng(31);
    std::vector<std::vector<std::string>> token_lists;
    for (int i = 0; i < 40; ++i) {
        std::vector<std::string> tokens;
        for (int w = 0; w < 60; ++w) {
            tokens.push_back("b" + std::to_string(i) + "w" + std::to_string(w));
        }
        token_lists.push_back(tokens);
        std::string text;
        for (const auto& t : tokens) text += t + " ";
        char id[16];
        std::snprintf(id, sizeof(id), "doc-%02d", i);
        docs.push_back(Document::make(id, text));
    }
    // Ten near-copies with one appended token; ids sort after the bases.
    std::vector<std::string> copy_ids;
    for (int i = 0; i < 10; ++i) {
        auto tokens = token_lists[i * 3];
        tokens.push_back("extra" + std::to_string(i));
        REQUIRE(oracle::exact_jaccard(token_lists[i * 3], tokens) >= 0.95);
        std::string text;
        for (const auto& t : tokens) text += t + " ";
        char id[16];
        std::snprintf(id, sizeof(id), "dup-%02d", i);
        copy_ids.push_back(id);
        docs.push_back(Document::make(id, text));
    }

    auto result = deduplicate(docs, 0.9);
    REQUIRE(result.size() == 40);
    for (const auto& d : result) {
        CHECK(d.id.rfind("doc-", 0) == 0);
    }

    // Idempotent: a second pass changes nothing.
    auto again = deduplicate(result, 0.9);
    REQUIRE(again.size() == result.size());
    for (size_t i = 0; i < again.size(); ++i) CHECK(again[i].id == result[i].id);
}
