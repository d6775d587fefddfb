#pragma once

#include <string>
#include <vector>

#include <httplib.h>

#include "pistis/json_io.hpp"
#include "pistis/tokenizer.hpp"
#include "pistis/util.hpp"

namespace pistis {

// Pre-ranking scorer: deterministic per (query, document).
class CrossScorer {
public:
    virtual ~CrossScorer() = default;
    virtual double score(const std::string& query, const std::string& doc) const = 0;

    virtual std::vector<double> score_batch(const std::string& query,
                                            const std::vector<std::string>& docs) const {
        std::vector<double> out;
        out.reserve(docs.size());
        for (const auto& d : docs) out.push_back(score(query, d));
        return out;
    }
};

// Default scorer: Jaccard overlap of token sets. Hermetic stand-in for the
// neural cross-encoders used at production scale.
class TokenOverlapScorer : public CrossScorer {
public:
    double score(const std::string& query, const std::string& doc) const override {
        return token_jaccard(tokenize(query), tokenize(doc));
    }
};

// Remote cross-scorer speaking POST /score
//   {"query": str, "documents": [str]} -> {"scores": [real]}
// Timeouts and non-200 responses surface as ErrorCode::http; the cascade
// treats that as stage degradation.
class RemoteHttpScorer : public CrossScorer {
public:
    explicit RemoteHttpScorer(std::string base_url, double timeout_seconds = 5.0)
        : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

    double score(const std::string& query, const std::string& doc) const override {
        return score_batch(query, {doc}).at(0);
    }

    std::vector<double> score_batch(const std::string& query,
                                    const std::vector<std::string>& docs) const override {
        httplib::Client client(base_url_);
        client.set_connection_timeout(std::chrono::duration<double>(timeout_seconds_));
        client.set_read_timeout(std::chrono::duration<double>(timeout_seconds_));

        Json body;
        body["query"] = query;
        body["documents"] = docs;
        auto res = client.Post("/score", body.dump(), "application/json");
        if (!res) throw Error(ErrorCode::http, "cross-scorer unreachable at " + base_url_);
        if (res->status != 200) {
            throw Error(ErrorCode::http,
                        "cross-scorer returned status " + std::to_string(res->status));
        }
        Json parsed = Json::parse(res->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("scores")) {
            throw Error(ErrorCode::http, "cross-scorer returned malformed body");
        }
        auto scores = parsed.at("scores").get<std::vector<double>>();
        if (scores.size() != docs.size()) {
            throw Error(ErrorCode::http, "cross-scorer returned wrong score count");
        }
        return scores;
    }

private:
    std::string base_url_;
    double timeout_seconds_;
};

}  // namespace pistis
