#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pistis/document.hpp"
#include "pistis/util.hpp"

namespace pistis {

constexpr size_t kShingleSize = 3;
constexpr size_t kDefaultNumHashes = 128;

struct MinHashSignature {
    std::vector<uint64_t> hashes;
    uint64_t seed = 0;

    size_t num_hashes() const { return hashes.size(); }
};

namespace detail {

// Contiguous 3-token shingles, each reduced to one 64-bit base hash. Token
// lists shorter than the shingle size contribute a single whole-list shingle.
inline std::vector<uint64_t> shingle_hashes(const std::vector<std::string>& tokens) {
    std::vector<uint64_t> out;
    if (tokens.size() < kShingleSize) {
        std::string joined;
        for (const auto& t : tokens) {
            joined += t;
            joined.push_back('\x1f');
        }
        out.push_back(fnv1a64(joined));
        return out;
    }
    out.reserve(tokens.size() - kShingleSize + 1);
    for (size_t i = 0; i + kShingleSize <= tokens.size(); ++i) {
        std::string joined;
        for (size_t k = 0; k < kShingleSize; ++k) {
            joined += tokens[i + k];
            joined.push_back('\x1f');
        }
        out.push_back(fnv1a64(joined));
    }
    return out;
}

}  // namespace detail

// Per-position minimum of seeded 64-bit mixes over the shingle set. Equal
// shingle sets produce equal signatures; the probability that position i
// collides for two sets equals their Jaccard similarity.
inline MinHashSignature minhash_signature(const std::vector<std::string>& tokens,
                                          size_t num_hashes = kDefaultNumHashes,
                                          uint64_t seed = 0) {
    if (tokens.empty()) throw Error(ErrorCode::invalid_argument, "empty document");
    auto shingles = detail::shingle_hashes(tokens);
    MinHashSignature sig;
    sig.seed = seed;
    sig.hashes.assign(num_hashes, ~0ULL);
    for (size_t i = 0; i < num_hashes; ++i) {
        uint64_t salt = splitmix64(seed + 0x9e3779b97f4a7c15ULL * (i + 1));
        uint64_t best = ~0ULL;
        for (uint64_t s : shingles) {
            uint64_t h = splitmix64(s ^ salt);
            if (h < best) best = h;
        }
        sig.hashes[i] = best;
    }
    return sig;
}

// Fraction of signature positions that collide.
inline double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
    if (a.num_hashes() != b.num_hashes() || a.seed != b.seed) {
        throw Error(ErrorCode::invalid_argument, "incompatible signatures");
    }
    if (a.hashes.empty()) return 0.0;
    size_t same = 0;
    for (size_t i = 0; i < a.hashes.size(); ++i) {
        if (a.hashes[i] == b.hashes[i]) ++same;
    }
    return static_cast<double>(same) / static_cast<double>(a.hashes.size());
}

// Greedy near-duplicate removal: scan in ascending id order, drop a document
// when its estimated Jaccard with any kept document reaches the threshold.
// Output preserves input order. Idempotent.
inline std::vector<Document> deduplicate(const std::vector<Document>& docs,
                                         double threshold = 0.9,
                                         size_t num_hashes = kDefaultNumHashes,
                                         uint64_t seed = 0) {
    if (threshold <= 0.0 || threshold > 1.0) {
        throw Error(ErrorCode::invalid_argument, "dedup threshold must be in (0, 1]");
    }
    std::vector<size_t> order(docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return docs[a].id < docs[b].id; });

    std::vector<bool> keep(docs.size(), false);
    std::vector<MinHashSignature> kept_sigs;
    for (size_t idx : order) {
        auto sig = minhash_signature(docs[idx].tokens, num_hashes, seed);
        bool duplicate = false;
        for (const auto& ks : kept_sigs) {
            if (estimate_jaccard(sig, ks) >= threshold) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) {
            keep[idx] = true;
            kept_sigs.push_back(std::move(sig));
        }
    }

    std::vector<Document> out;
    out.reserve(docs.size());
    for (size_t i = 0; i < docs.size(); ++i) {
        if (keep[i]) out.push_back(docs[i]);
    }
    return out;
}

}  // namespace pistis
