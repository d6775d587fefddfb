#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pistis/distribution.hpp"
#include "pistis/document.hpp"
#include "pistis/json_io.hpp"
#include "pistis/kv_cache.hpp"
#include "pistis/minhash.hpp"

namespace pistis {

namespace detail {

inline Json document_to_json(const Document& d) {
    Json j;
    j["id"] = d.id;
    j["text"] = d.text;
    if (d.topic) j["topic"] = *d.topic;
    if (d.gold_answer) j["gold_answer"] = std::string(1, *d.gold_answer);
    if (d.embedding) j["embedding"] = *d.embedding;
    if (d.trust != 1.0) j["trust"] = d.trust;
    return j;
}

inline Document document_from_json(const Json& j) {
    if (!j.contains("id") || !j.contains("text")) {
        throw Error(ErrorCode::data, "document needs \"id\" and \"text\"");
    }
    Document d = Document::make(j.at("id").get<std::string>(), j.at("text").get<std::string>());
    if (d.id.empty()) throw Error(ErrorCode::data, "document id must be non-empty");
    if (j.contains("topic")) d.topic = j.at("topic").get<std::string>();
    if (j.contains("gold_answer")) {
        auto s = j.at("gold_answer").get<std::string>();
        if (s.size() != 1) throw Error(ErrorCode::data, "gold_answer must be a single character");
        d.gold_answer = s[0];
    }
    if (j.contains("embedding")) d.embedding = j.at("embedding").get<std::vector<double>>();
    if (j.contains("trust")) d.trust = j.at("trust").get<double>();
    return d;
}

inline Json record_to_json(const MemoryRecord& r) {
    Json j;
    j["intent"] = r.intent;
    j["example_ids"] = r.example_ids;
    j["output"] = r.output;
    j["label"] = label_value_name(r.label.value);
    return j;
}

inline MemoryRecord record_from_json(const Json& j) {
    MemoryRecord r;
    r.intent = j.at("intent").get<std::string>();
    r.example_ids = j.at("example_ids").get<std::vector<std::string>>();
    r.output = j.at("output").get<std::string>();
    r.label.value = label_value_from_name(j.at("label").get<std::string>());
    r.label.source = LabelSource::Simulated;
    if (j.contains("source")) {
        auto s = j.at("source").get<std::string>();
        if (s == "copy") r.label.source = LabelSource::Copy;
        else if (s == "regenerate") r.label.source = LabelSource::Regenerate;
        else if (s == "dislike") r.label.source = LabelSource::Dislike;
        else if (s == "simulated") r.label.source = LabelSource::Simulated;
        else throw Error(ErrorCode::data, "unknown label source \"" + s + "\"");
    }
    if (r.example_ids.empty()) throw Error(ErrorCode::data, "example_ids must be non-empty");
    return r;
}

inline const char* label_source_name(LabelSource s) {
    switch (s) {
        case LabelSource::Copy: return "copy";
        case LabelSource::Regenerate: return "regenerate";
        case LabelSource::Dislike: return "dislike";
        case LabelSource::Simulated: return "simulated";
    }
    return "simulated";
}

}  // namespace detail

// Long-term memory: documents keyed by id (insertion order preserved),
// feedback records, and the matching-service K-V caches. Single writer,
// any number of concurrent readers.
class MemoryStore {
public:
    explicit MemoryStore(size_t cache_capacity = 10000) : cache_(cache_capacity) {}

    void add_document(Document doc) {
        if (doc.id.empty()) throw Error(ErrorCode::invalid_argument, "document id must be non-empty");
        if (by_id_.count(doc.id)) {
            throw Error(ErrorCode::invalid_argument, "duplicate document id \"" + doc.id + "\"");
        }
        by_id_[doc.id] = docs_.size();
        docs_.push_back(std::move(doc));
    }

    void add_record(MemoryRecord record) { records_.push_back(std::move(record)); }

    const std::vector<Document>& documents() const { return docs_; }
    const std::vector<MemoryRecord>& records() const { return records_; }
    KvCache& cache() { return cache_; }
    const KvCache& cache() const { return cache_; }

    const Document* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &docs_[it->second];
    }

    // Replaces the document set (used after dedup/filter passes).
    void set_documents(std::vector<Document> docs) {
        docs_ = std::move(docs);
        by_id_.clear();
        for (size_t i = 0; i < docs_.size(); ++i) {
            if (by_id_.count(docs_[i].id)) {
                throw Error(ErrorCode::invalid_argument,
                            "duplicate document id \"" + docs_[i].id + "\"");
            }
            by_id_[docs_[i].id] = i;
        }
    }

    size_t run_dedup(double threshold, size_t num_hashes, uint64_t seed) {
        size_t before = docs_.size();
        set_documents(deduplicate(docs_, threshold, num_hashes, seed));
        return before - docs_.size();
    }

    size_t run_filter(double kl_threshold, double alpha) {
        auto result = filter_outliers(docs_, kl_threshold, alpha);
        size_t dropped = result.dropped.size();
        set_documents(std::move(result.kept));
        return dropped;
    }

    // JSONL persistence: one typed line per entity; cache entries serialize
    // least-recently-used first so the round trip restores eviction order.
    void persist(const std::string& path) const {
        auto out = open_for_write(path);
        Json meta;
        meta["kind"] = "meta";
        meta["version"] = 1;
        meta["cache_capacity"] = cache_.prompt_answers().capacity();
        meta["turns_per_session"] = cache_.turns_per_session();
        out << meta.dump() << "\n";
        for (const auto& d : docs_) {
            Json j = detail::document_to_json(d);
            j["kind"] = "doc";
            out << j.dump() << "\n";
        }
        for (const auto& r : records_) {
            Json j = detail::record_to_json(r);
            j["kind"] = "record";
            j["source"] = detail::label_source_name(r.label.source);
            out << j.dump() << "\n";
        }
        for (const auto& [sid, turns] : cache_.sessions().entries()) {
            Json j;
            j["kind"] = "session";
            j["id"] = sid;
            Json arr = Json::array();
            for (const auto& t : turns) arr.push_back(Json::array({t.query, t.answer}));
            j["turns"] = arr;
            out << j.dump() << "\n";
        }
        for (const auto& [key, value] : cache_.prompt_answers().entries()) {
            Json j;
            j["kind"] = "prompt";
            j["key"] = key;
            j["value"] = value;
            out << j.dump() << "\n";
        }
    }

    static MemoryStore load(const std::string& path) {
        MemoryStore store;
        bool saw_meta = false;
        for_each_jsonl(path, [&](size_t line_no, const Json& j) {
            auto kind = j.value("kind", std::string{});
            if (kind == "meta") {
                store.cache_ = KvCache(j.at("cache_capacity").get<size_t>(),
                                       j.at("turns_per_session").get<size_t>());
                saw_meta = true;
            } else if (kind == "doc") {
                store.add_document(detail::document_from_json(j));
            } else if (kind == "record") {
                store.add_record(detail::record_from_json(j));
            } else if (kind == "session") {
                auto sid = j.at("id").get<std::string>();
                for (const auto& t : j.at("turns")) {
                    store.cache_.put_session_turn(
                        sid, SessionTurn{t.at(0).get<std::string>(), t.at(1).get<std::string>()});
                }
            } else if (kind == "prompt") {
                store.cache_.put_answer(j.at("key").get<std::string>(),
                                        j.at("value").get<std::string>());
            } else {
                throw Error(ErrorCode::data, path + ": line " + std::to_string(line_no) +
                                                 ": unknown record kind \"" + kind + "\"");
            }
        });
        if (!saw_meta) throw Error(ErrorCode::data, path + ": missing meta line");
        return store;
    }

private:
    std::vector<Document> docs_;
    std::map<std::string, size_t> by_id_;
    std::vector<MemoryRecord> records_;
    KvCache cache_;
};

// --------------------------------------------------------------------------
// External corpus / feedback files
// --------------------------------------------------------------------------

inline std::vector<Document> load_corpus(const std::string& path) {
    std::vector<Document> docs;
    for_each_jsonl(path, [&](size_t, const Json& j) {
        docs.push_back(detail::document_from_json(j));
    });
    return docs;
}

inline void save_corpus(const std::string& path, const std::vector<Document>& docs) {
    auto out = open_for_write(path);
    for (const auto& d : docs) out << detail::document_to_json(d).dump() << "\n";
}

inline std::vector<MemoryRecord> load_feedback(const std::string& path) {
    std::vector<MemoryRecord> records;
    for_each_jsonl(path, [&](size_t, const Json& j) {
        records.push_back(detail::record_from_json(j));
    });
    return records;
}

inline void save_feedback(const std::string& path, const std::vector<MemoryRecord>& records,
                          bool append = false) {
    auto out = open_for_write(path, append);
    for (const auto& r : records) out << detail::record_to_json(r).dump() << "\n";
}

}  // namespace pistis
