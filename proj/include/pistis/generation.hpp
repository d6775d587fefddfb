#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pistis/document.hpp"
#include "pistis/json_io.hpp"
#include "pistis/prompt.hpp"
#include "pistis/tokenizer.hpp"
#include "pistis/util.hpp"

namespace pistis {

struct GeneratorParams {
    double temperature = 0.0;
    uint64_t seed = 0;
    size_t path_id = 0;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual std::string generate(const std::string& prompt, const GeneratorParams& params) = 0;
    // True when concurrent generate() calls are safe (multi-path fan-out).
    virtual bool thread_safe() const { return false; }
};

// Deterministic generator whose only order sensitivity is "does the FIRST
// exemplar share the question's topic". If it does, the gold answer is
// returned. Otherwise a seeded hash of (prompt, seed, path_id) draws filler
// text at `no_answer_rate`, the gold answer below `correct_threshold`, and a
// fixed wrong letter the rest of the time. A pure function of its inputs
// given the corpus snapshot it was built from.
class MockGenerator : public Generator {
public:
    struct DocInfo {
        std::optional<std::string> topic;
        std::optional<char> gold;
    };

    explicit MockGenerator(double correct_threshold = 0.25, double no_answer_rate = 0.05,
                           char wrong_letter = 'Z')
        : correct_threshold_(correct_threshold),
          no_answer_rate_(no_answer_rate),
          wrong_letter_(wrong_letter) {}

    void register_documents(const std::vector<Document>& docs) {
        for (const auto& d : docs) {
            lookup_[normalize_prompt(d.text)] = DocInfo{d.topic, d.gold_answer};
        }
    }

    bool thread_safe() const override { return true; }

    std::string generate(const std::string& prompt, const GeneratorParams& params) override {
        auto blocks = split_blocks(prompt);
        if (blocks.size() < 2) return filler();

        // Last block is the instruction tail, the one before it the question.
        const std::string& question_text = blocks[blocks.size() - 2];
        auto qit = lookup_.find(normalize_prompt(question_text));
        if (qit == lookup_.end() || !qit->second.gold) return filler();
        char gold = *qit->second.gold;

        if (blocks.size() >= 3) {
            std::string first_exemplar = strip_answer_line(blocks[0]);
            auto eit = lookup_.find(normalize_prompt(first_exemplar));
            if (eit != lookup_.end() && eit->second.topic && qit->second.topic &&
                *eit->second.topic == *qit->second.topic) {
                return answer_line(gold);
            }
        }

        uint64_t h = splitmix64(fnv1a64(prompt) ^ splitmix64(params.seed) ^
                                splitmix64(0x517ab1e5ULL + params.path_id));
        double no_answer_draw = to_unit(h);
        double correct_draw = to_unit(splitmix64(h));
        if (no_answer_draw < no_answer_rate_) return filler();
        if (correct_draw < correct_threshold_) return answer_line(gold);
        return answer_line(wrong_letter_);
    }

private:
    static double to_unit(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

    static std::string filler() { return "I am not sure about this one."; }

    static std::string answer_line(char letter) { return std::string("Answer: ") + letter; }

    static std::vector<std::string> split_blocks(const std::string& prompt) {
        std::vector<std::string> blocks;
        size_t start = 0;
        while (start < prompt.size()) {
            size_t pos = prompt.find("\n\n", start);
            if (pos == std::string::npos) {
                auto tail = trim(prompt.substr(start));
                if (!tail.empty()) blocks.push_back(tail);
                break;
            }
            auto block = trim(prompt.substr(start, pos - start));
            if (!block.empty()) blocks.push_back(block);
            start = pos + 2;
        }
        return blocks;
    }

    static std::string strip_answer_line(const std::string& block) {
        size_t pos = block.rfind('\n');
        if (pos == std::string::npos) return block;
        auto last_line = block.substr(pos + 1);
        if (last_line.rfind("Answer:", 0) == 0) return block.substr(0, pos);
        return block;
    }

    double correct_threshold_;
    double no_answer_rate_;
    char wrong_letter_;
    std::map<std::string, DocInfo> lookup_;
};

// Chat-completions HTTP client. Request body:
//   {"model": ..., "messages": [{"role": "user", "content": prompt}],
//    "temperature": ..., "seed": ...}
// The first choice's message content is returned. 5xx responses are retried
// up to twice with backoff; anything else fails with a typed error.
class HttpGenerator : public Generator {
public:
    struct Config {
        std::string base_url;
        std::string model;
        std::string token;
        std::string path = "/v1/chat/completions";
        double timeout_seconds = 30.0;
        size_t max_retries = 2;
        size_t backoff_ms = 100;
    };

    explicit HttpGenerator(Config config) : config_(std::move(config)) {
        if (config_.base_url.empty()) {
            throw Error(ErrorCode::invalid_argument, "generator URL must be non-empty");
        }
    }

    static HttpGenerator from_env() {
        Config c;
        c.base_url = env_or_fail("GENERATOR_URL");
        c.model = env_or_fail("GENERATOR_MODEL");
        c.token = env_or_fail("GENERATOR_TOKEN");
        return HttpGenerator(std::move(c));
    }

    bool thread_safe() const override { return true; }

    std::string generate(const std::string& prompt, const GeneratorParams& params) override {
        Json body;
        body["model"] = config_.model;
        body["messages"] = Json::array({Json{{"role", "user"}, {"content", prompt}}});
        body["temperature"] = params.temperature;
        body["seed"] = params.seed;
        std::string payload = body.dump();

        std::string last_error;
        for (size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
            }
            httplib::Client client(config_.base_url);
            client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
            client.set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));
            httplib::Headers headers;
            if (!config_.token.empty()) {
                headers.emplace("Authorization", "Bearer " + config_.token);
            }
            auto res = client.Post(config_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error / timeout";
                continue;
            }
            if (res->status >= 500) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw Error(ErrorCode::http,
                            "generator returned status " + std::to_string(res->status));
            }
            return parse_content(res->body);
        }
        throw Error(ErrorCode::http, "generator failed after retries: " + last_error);
    }

private:
    static std::string env_or_fail(const char* name) {
        const char* v = std::getenv(name);
        if (!v || !*v) {
            throw Error(ErrorCode::invalid_argument,
                        std::string("environment variable ") + name + " is required in http mode");
        }
        return v;
    }

    static std::string parse_content(const std::string& body) {
        Json j = Json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty() ||
            !j["choices"][0].contains("message") ||
            !j["choices"][0]["message"].contains("content")) {
            throw Error(ErrorCode::http, "generator returned malformed body");
        }
        return j["choices"][0]["message"]["content"].get<std::string>();
    }

    Config config_;
};

// Runs n_paths generations with path ids 0..n-1. The returned list is in
// path-id order regardless of completion order. Failed paths are dropped;
// if every path fails, the error carries the per-path causes.
inline std::vector<std::string> reason_multipath(Generator& gen, const std::string& prompt,
                                                 size_t n_paths, uint64_t base_seed,
                                                 size_t max_concurrency = 4) {
    if (n_paths < 1) throw Error(ErrorCode::invalid_argument, "n_paths must be >= 1");

    std::vector<std::optional<std::string>> results(n_paths);
    std::vector<std::string> failures(n_paths);

    auto run_path = [&](size_t path) {
        GeneratorParams params;
        params.seed = base_seed;
        params.path_id = path;
        params.temperature = n_paths > 1 ? 0.7 : 0.0;
        try {
            results[path] = gen.generate(prompt, params);
        } catch (const std::exception& e) {
            failures[path] = e.what();
        }
    };

    if (n_paths == 1 || !gen.thread_safe()) {
        for (size_t p = 0; p < n_paths; ++p) run_path(p);
    } else {
        std::atomic<size_t> next{0};
        size_t workers = std::min(max_concurrency, n_paths);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    size_t p = next.fetch_add(1);
                    if (p >= n_paths) return;
                    run_path(p);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    std::vector<std::string> out;
    for (size_t p = 0; p < n_paths; ++p) {
        if (results[p]) out.push_back(std::move(*results[p]));
    }
    if (out.empty()) {
        std::string causes;
        for (size_t p = 0; p < n_paths; ++p) {
            causes += "\n  path " + std::to_string(p) + ": " + failures[p];
        }
        throw Error(ErrorCode::http, "all reasoning paths failed:" + causes);
    }
    return out;
}

struct SafetyResult {
    bool passed = true;
    std::string redacted_text;
    size_t redactions = 0;
};

struct AggregatedAnswer {
    std::optional<char> answer;
    std::map<char, size_t> votes;
    double confidence = 0.0;
    std::vector<std::string> citations;
    SafetyResult safety;
};

// Majority vote over extracted letters; outputs with no extraction carry no
// vote. Ties break to the lexicographically smallest letter.
inline AggregatedAnswer aggregate_self_consistency(const std::vector<std::string>& outputs,
                                                   const ExtractorBank& bank) {
    if (outputs.empty()) throw Error(ErrorCode::invalid_argument, "no outputs to aggregate");
    AggregatedAnswer agg;
    size_t valid = 0;
    for (const auto& text : outputs) {
        if (auto letter = bank.extract(text)) {
            ++agg.votes[*letter];
            ++valid;
        }
    }
    if (valid == 0) {
        agg.confidence = 0.0;
        return agg;
    }
    char best = 0;
    size_t best_count = 0;
    for (const auto& [letter, count] : agg.votes) {
        if (count > best_count) {  // map iteration is ascending, so ties keep
            best = letter;         // the lexicographically smallest letter
            best_count = count;
        }
    }
    agg.answer = best;
    agg.confidence = static_cast<double>(best_count) / static_cast<double>(valid);
    return agg;
}

// Case-insensitive whole-token redaction; matched tokens become U+25AE.
// Idempotent because the replacement mark never tokenizes as a word.
inline SafetyResult safety_filter(const std::string& text,
                                  const std::vector<std::string>& blocklist) {
    SafetyResult res;
    if (blocklist.empty()) {
        res.redacted_text = text;
        return res;
    }
    std::set<std::string> terms(blocklist.begin(), blocklist.end());
    std::string out;
    size_t cursor = 0;
    for (const auto& span : tokenize_spans(text)) {
        if (!terms.count(span.token)) continue;
        out.append(text, cursor, span.offset - cursor);
        out += "\xE2\x96\xAE";
        cursor = span.offset + span.length;
        ++res.redactions;
    }
    out.append(text, cursor, text.size() - cursor);
    res.redacted_text = std::move(out);
    res.passed = res.redactions == 0;
    return res;
}

// Answer line plus, in markdown mode, one bracketed citation per example in
// ascending id order.
inline std::string format_answer(const AggregatedAnswer& agg,
                                 const std::vector<const Document*>& examples, bool markdown) {
    std::string answer_text =
        agg.answer ? std::string(1, *agg.answer) : std::string("(no answer)");
    if (!markdown) {
        return "Answer: " + answer_text;
    }
    std::string out = "**Answer:** " + answer_text + "\n";
    if (!examples.empty()) {
        std::vector<std::string> ids;
        ids.reserve(examples.size());
        for (const Document* d : examples) ids.push_back(d->id);
        std::sort(ids.begin(), ids.end());
        out += "\nSources:\n";
        for (size_t i = 0; i < ids.size(); ++i) {
            out += "[" + std::to_string(i + 1) + "] " + ids[i] + "\n";
        }
    }
    return out;
}

}  // namespace pistis
