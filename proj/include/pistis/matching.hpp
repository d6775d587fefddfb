#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pistis/json_io.hpp"
#include "pistis/kv_cache.hpp"
#include "pistis/memory_store.hpp"

namespace pistis {

constexpr double kBm25K1 = 1.2;
constexpr double kBm25B = 0.75;
constexpr double kRrfConstant = 60.0;
constexpr size_t kDefaultEmbeddingDim = 64;

enum class MatchMode { bm25, tfidf, vector, hybrid };

inline MatchMode match_mode_from_name(const std::string& s) {
    if (s == "bm25") return MatchMode::bm25;
    if (s == "tfidf") return MatchMode::tfidf;
    if (s == "vector") return MatchMode::vector;
    if (s == "hybrid") return MatchMode::hybrid;
    throw Error(ErrorCode::invalid_argument, "unknown match mode \"" + s + "\"");
}

inline const char* match_mode_name(MatchMode m) {
    switch (m) {
        case MatchMode::bm25: return "bm25";
        case MatchMode::tfidf: return "tfidf";
        case MatchMode::vector: return "vector";
        case MatchMode::hybrid: return "hybrid";
    }
    return "hybrid";
}

enum class CandidateSource { bm25, tfidf, vector, hybrid, cache };

struct Candidate {
    std::string doc_id;
    double score = 0.0;
    CandidateSource source = CandidateSource::bm25;
};

// Token -> (doc id, term frequency) postings. Ordered containers keep builds
// and serializations byte-identical across runs.
struct InvertedIndex {
    std::map<std::string, std::vector<std::pair<std::string, size_t>>> postings;
    std::map<std::string, size_t> doc_lengths;
    double avg_doc_length = 0.0;
    size_t doc_count = 0;
};

struct VectorIndex {
    std::map<std::string, std::vector<double>> vectors;
    size_t dim = 0;
};

// Token counts feature-hashed into `dim` buckets, L2-normalized. Stands in
// for a learned embedder; preserves topical similarity well enough for
// desk-scale retrieval.
inline std::vector<double> toy_embedding(const std::vector<std::string>& tokens, size_t dim) {
    if (dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");
    std::vector<double> v(dim, 0.0);
    for (const auto& t : tokens) {
        v[fnv1a64(t) % dim] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

inline std::pair<InvertedIndex, VectorIndex> build_indexes(const std::vector<Document>& docs,
                                                           size_t dim = kDefaultEmbeddingDim) {
    if (docs.empty()) throw Error(ErrorCode::invalid_argument, "cannot index an empty corpus");
    if (dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");

    InvertedIndex ii;
    VectorIndex vi;
    vi.dim = dim;
    double total_len = 0.0;
    for (const auto& d : docs) {
        std::map<std::string, size_t> tf;
        for (const auto& t : d.tokens) ++tf[t];
        for (const auto& [tok, count] : tf) ii.postings[tok].emplace_back(d.id, count);
        ii.doc_lengths[d.id] = d.tokens.size();
        total_len += static_cast<double>(d.tokens.size());

        if (d.embedding) {
            if (d.embedding->size() != dim) {
                throw Error(ErrorCode::data, "document \"" + d.id + "\" embedding has dimension " +
                                                 std::to_string(d.embedding->size()) +
                                                 ", index expects " + std::to_string(dim));
            }
            vi.vectors[d.id] = *d.embedding;
        } else {
            vi.vectors[d.id] = toy_embedding(d.tokens, dim);
        }
    }
    ii.doc_count = docs.size();
    ii.avg_doc_length = total_len / static_cast<double>(docs.size());
    for (auto& [tok, list] : ii.postings) {
        std::sort(list.begin(), list.end());
    }
    return {std::move(ii), std::move(vi)};
}

namespace detail {

inline size_t term_frequency(const InvertedIndex& index, const std::string& token,
                             const std::string& doc_id) {
    auto it = index.postings.find(token);
    if (it == index.postings.end()) return 0;
    auto pit = std::lower_bound(it->second.begin(), it->second.end(),
                                std::make_pair(doc_id, size_t{0}));
    if (pit == it->second.end() || pit->first != doc_id) return 0;
    return pit->second;
}

inline std::vector<std::string> unique_tokens(const std::vector<std::string>& tokens) {
    std::set<std::string> seen(tokens.begin(), tokens.end());
    return {seen.begin(), seen.end()};
}

}  // namespace detail

// Okapi BM25 with IDF(t) = ln(1 + (N - df + 0.5)/(df + 0.5)). Query terms are
// deduplicated; zero when no query term occurs in the document.
inline double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                         const std::string& doc_id, double k1 = kBm25K1, double b = kBm25B) {
    auto len_it = index.doc_lengths.find(doc_id);
    if (len_it == index.doc_lengths.end()) {
        throw Error(ErrorCode::invalid_argument, "document \"" + doc_id + "\" not in index");
    }
    double len = static_cast<double>(len_it->second);
    double score = 0.0;
    for (const auto& t : detail::unique_tokens(query_tokens)) {
        auto pit = index.postings.find(t);
        if (pit == index.postings.end()) continue;
        size_t tf = detail::term_frequency(index, t, doc_id);
        if (tf == 0) continue;
        double df = static_cast<double>(pit->second.size());
        double n = static_cast<double>(index.doc_count);
        double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        double tfd = static_cast<double>(tf);
        score += idf * tfd * (k1 + 1.0) /
                 (tfd + k1 * (1.0 - b + b * len / index.avg_doc_length));
    }
    return score;
}

// Raw tf * ln(N/df), summed over deduplicated query terms.
inline double tfidf_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                          const std::string& doc_id) {
    if (!index.doc_lengths.count(doc_id)) {
        throw Error(ErrorCode::invalid_argument, "document \"" + doc_id + "\" not in index");
    }
    double score = 0.0;
    for (const auto& t : detail::unique_tokens(query_tokens)) {
        auto pit = index.postings.find(t);
        if (pit == index.postings.end()) continue;
        size_t tf = detail::term_frequency(index, t, doc_id);
        if (tf == 0) continue;
        double df = static_cast<double>(pit->second.size());
        score += static_cast<double>(tf) *
                 std::log(static_cast<double>(index.doc_count) / df);
    }
    return score;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::invalid_argument, "vector dimension mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace detail {

inline void sort_candidates(std::vector<Candidate>& c) {
    std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
}

}  // namespace detail

// Exact top-k cosine scan. This is the contract any approximate backend has
// to match (recall >= 0.95 on the brute-force suite).
inline std::vector<Candidate> vector_search(const VectorIndex& vindex,
                                            const std::vector<double>& query_vector,
                                            size_t top_k) {
    if (query_vector.size() != vindex.dim) {
        throw Error(ErrorCode::invalid_argument, "query vector dimension mismatch");
    }
    double norm = 0.0;
    for (double x : query_vector) norm += x * x;
    if (norm == 0.0) throw Error(ErrorCode::invalid_argument, "zero vector");

    std::vector<Candidate> all;
    all.reserve(vindex.vectors.size());
    for (const auto& [id, vec] : vindex.vectors) {
        all.push_back(Candidate{id, cosine_similarity(query_vector, vec), CandidateSource::vector});
    }
    detail::sort_candidates(all);
    if (all.size() > top_k) all.resize(top_k);
    return all;
}

struct MatchOptions {
    MatchMode mode = MatchMode::hybrid;
    size_t top_k = 10;  // p_m
    // When set, documents whose normalized text equals the normalized query
    // are excluded (simulation corpora store answers next to questions).
    bool exclude_self = false;
    bool use_cache = true;
};

struct MatchResult {
    std::vector<Candidate> candidates;
    std::optional<std::string> cached_answer;
};

namespace detail {

inline std::vector<Candidate> lexical_ranking(const InvertedIndex& index,
                                              const std::vector<std::string>& query_tokens,
                                              bool bm25) {
    // Union of postings for the query terms; zero-score docs never match.
    std::set<std::string> touched;
    for (const auto& t : unique_tokens(query_tokens)) {
        auto it = index.postings.find(t);
        if (it == index.postings.end()) continue;
        for (const auto& [id, tf] : it->second) touched.insert(id);
    }
    std::vector<Candidate> out;
    out.reserve(touched.size());
    for (const auto& id : touched) {
        double s = bm25 ? bm25_score(index, query_tokens, id)
                        : tfidf_score(index, query_tokens, id);
        if (s > 0.0) {
            out.push_back(Candidate{id, s, bm25 ? CandidateSource::bm25 : CandidateSource::tfidf});
        }
    }
    sort_candidates(out);
    return out;
}

}  // namespace detail

// Reciprocal-rank fusion with 1-based ranks: score(d) = sum over lists of
// 1/(60 + rank). Chosen over score normalization because lexical and cosine
// scores are incommensurable.
inline std::vector<Candidate> rrf_fuse(const std::vector<std::vector<Candidate>>& rankings) {
    std::map<std::string, double> fused;
    for (const auto& ranking : rankings) {
        for (size_t r = 0; r < ranking.size(); ++r) {
            fused[ranking[r].doc_id] += 1.0 / (kRrfConstant + static_cast<double>(r + 1));
        }
    }
    std::vector<Candidate> out;
    out.reserve(fused.size());
    for (const auto& [id, score] : fused) {
        out.push_back(Candidate{id, score, CandidateSource::hybrid});
    }
    detail::sort_candidates(out);
    return out;
}

// Top-p_m retrieval with a prompt-answer cache short circuit. The full
// ordering is computed before truncation, so match(q, p) is a prefix of
// match(q, p') for p <= p'.
inline MatchResult match(const MemoryStore& store, const InvertedIndex& index,
                         const VectorIndex& vindex, const std::string& query,
                         const MatchOptions& options, KvCache* cache = nullptr) {
    if (options.top_k == 0) throw Error(ErrorCode::invalid_argument, "p_m must be >= 1");

    MatchResult result;
    std::string normalized = normalize_prompt(query);
    if (cache && options.use_cache) {
        if (auto hit = cache->get_answer(normalized)) {
            result.cached_answer = *hit;
            result.candidates.push_back(Candidate{"cache", 1.0, CandidateSource::cache});
            return result;
        }
    }

    auto query_tokens = tokenize(query);
    std::vector<Candidate> ranking;
    switch (options.mode) {
        case MatchMode::bm25:
            ranking = detail::lexical_ranking(index, query_tokens, true);
            break;
        case MatchMode::tfidf:
            ranking = detail::lexical_ranking(index, query_tokens, false);
            break;
        case MatchMode::vector:
            ranking = vector_search(vindex, toy_embedding(query_tokens, vindex.dim),
                                    vindex.vectors.size());
            break;
        case MatchMode::hybrid: {
            auto lexical = detail::lexical_ranking(index, query_tokens, true);
            auto dense = vector_search(vindex, toy_embedding(query_tokens, vindex.dim),
                                       vindex.vectors.size());
            ranking = rrf_fuse({lexical, dense});
            break;
        }
    }

    if (options.exclude_self) {
        std::erase_if(ranking, [&](const Candidate& c) {
            const Document* d = store.find(c.doc_id);
            return d && normalize_prompt(d->text) == normalized;
        });
    }
    if (ranking.size() > options.top_k) ranking.resize(options.top_k);
    result.candidates = std::move(ranking);
    return result;
}

// --------------------------------------------------------------------------
// Index snapshot (JSONL sections: meta, postings, lengths, vectors)
// --------------------------------------------------------------------------

inline void save_indexes(const std::string& path, const InvertedIndex& ii,
                         const VectorIndex& vi) {
    auto out = open_for_write(path);
    Json meta;
    meta["section"] = "meta";
    meta["doc_count"] = ii.doc_count;
    meta["avg_doc_length"] = ii.avg_doc_length;
    meta["dim"] = vi.dim;
    out << meta.dump() << "\n";
    for (const auto& [tok, list] : ii.postings) {
        Json j;
        j["section"] = "posting";
        j["token"] = tok;
        Json arr = Json::array();
        for (const auto& [id, tf] : list) arr.push_back(Json::array({id, tf}));
        j["docs"] = arr;
        out << j.dump() << "\n";
    }
    for (const auto& [id, len] : ii.doc_lengths) {
        Json j;
        j["section"] = "length";
        j["id"] = id;
        j["len"] = len;
        out << j.dump() << "\n";
    }
    for (const auto& [id, vec] : vi.vectors) {
        Json j;
        j["section"] = "vector";
        j["id"] = id;
        j["v"] = vec;
        out << j.dump() << "\n";
    }
}

inline std::pair<InvertedIndex, VectorIndex> load_indexes(const std::string& path) {
    InvertedIndex ii;
    VectorIndex vi;
    bool saw_meta = false;
    for_each_jsonl(path, [&](size_t line_no, const Json& j) {
        auto section = j.value("section", std::string{});
        if (section == "meta") {
            ii.doc_count = j.at("doc_count").get<size_t>();
            ii.avg_doc_length = j.at("avg_doc_length").get<double>();
            vi.dim = j.at("dim").get<size_t>();
            saw_meta = true;
        } else if (section == "posting") {
            auto& list = ii.postings[j.at("token").get<std::string>()];
            for (const auto& e : j.at("docs")) {
                list.emplace_back(e.at(0).get<std::string>(), e.at(1).get<size_t>());
            }
        } else if (section == "length") {
            ii.doc_lengths[j.at("id").get<std::string>()] = j.at("len").get<size_t>();
        } else if (section == "vector") {
            vi.vectors[j.at("id").get<std::string>()] = j.at("v").get<std::vector<double>>();
        } else {
            throw Error(ErrorCode::data, path + ": line " + std::to_string(line_no) +
                                             ": unknown section \"" + section + "\"");
        }
    });
    if (!saw_meta) throw Error(ErrorCode::data, path + ": missing meta line");
    return {std::move(ii), std::move(vi)};
}

}  // namespace pistis
