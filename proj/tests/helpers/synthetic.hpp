#pragma once

// Synthetic multiple-choice corpus used across the test suites.
//
// Memory documents come in `n_topics` topics with `docs_per_topic` documents
// each. Document j of topic t mentions a sliding window of three topic
// keywords (w_j, w_j+1, w_j+2 of 12), one unique token, and fixed option
// boilerplate, so every document has the same token length.
//
// Queries mention ONE keyword of their own topic and TWO consecutive
// keywords of a distractor topic. Lexical retrieval therefore ranks the
// distractor's documents first while same-topic documents still reach the
// candidate pool — exactly the regime where semantic order and the
// order-sensitive generator disagree.

#include <cstdio>
#include <string>
#include <vector>

#include "pistis/document.hpp"

namespace synth {

inline std::string keyword(size_t topic, size_t j) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "t%02zuw%02zu", topic, j % 12);
    return buf;
}

inline std::string topic_name(size_t topic) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "topic%02zu", topic);
    return buf;
}

inline char option_letter(size_t i) { return static_cast<char>('A' + (i % 4)); }

constexpr const char* kOptions = "(A) red (B) blue (C) green (D) gray";

inline std::vector<pistis::Document> memory_corpus(size_t n_topics = 20,
                                                   size_t docs_per_topic = 10) {
    std::vector<pistis::Document> docs;
    for (size_t t = 0; t < n_topics; ++t) {
        for (size_t j = 0; j < docs_per_topic; ++j) {
            char id[48];
            std::snprintf(id, sizeof(id), "mem-%02zu-%02zu", t, j);
            char uniq[48];
            std::snprintf(uniq, sizeof(uniq), "u%02zux%02zu", t, j);
            std::string text = "What links " + keyword(t, j) + " " + keyword(t, j + 1) + " " +
                               keyword(t, j + 2) + " and " + uniq + "?\n" + kOptions;
            docs.push_back(pistis::Document::make(id, text, topic_name(t),
                                                  option_letter(t + j)));
        }
    }
    return docs;
}

inline std::vector<pistis::Document> query_corpus(size_t n_queries = 500, size_t n_topics = 20) {
    std::vector<pistis::Document> queries;
    for (size_t q = 0; q < n_queries; ++q) {
        size_t t = q % n_topics;
        size_t u = (t + 1) % n_topics;
        size_t own = (q / n_topics) % 12;
        size_t other = (q / n_topics + 5) % 12;
        char id[48];
        std::snprintf(id, sizeof(id), "qry-%04zu", q);
        char uniq[48];
        std::snprintf(uniq, sizeof(uniq), "v%04zu", q);
        std::string text = "What links " + synth::keyword(t, own) + " " +
                           synth::keyword(u, other) + " " + synth::keyword(u, other + 1) +
                           " and " + uniq + "?\n" + kOptions;
        queries.push_back(pistis::Document::make(id, text, topic_name(t),
                                                 option_letter(t + q / n_topics)));
    }
    return queries;
}

}  // namespace synth
