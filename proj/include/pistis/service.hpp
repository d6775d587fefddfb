#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>

#include "pistis/config.hpp"
#include "pistis/pipeline.hpp"
#include "pistis/tuner.hpp"

namespace pistis {

// Minimal query service. Requests run against immutable indexes and model;
// the downgrade controller and the K-V cache are the only mutable state.
//
//   POST /v1/query  {"query": str, "session": str?}
//                   -> {"answer", "confidence", "citations", "timings"}
//   GET  /v1/health -> config + index stats, 503 until load() completes
class QueryService {
public:
    struct Components {
        MemoryStore store;
        InvertedIndex index;
        VectorIndex vindex;
        ListwiseModel model;  // may stay unfitted for baseline-only service
        std::unique_ptr<Generator> generator;
        std::unique_ptr<CrossScorer> scorer;
        ExtractorBank bank = ExtractorBank::standard();
        PromptTemplate prompt_template;
        std::vector<std::string> blocklist;
        LatencyMode latency = LatencyMode::mock;
        bool markdown = false;
        uint64_t seed = 7;
        // Optional metadata for known questions, keyed by normalized text;
        // matching queries keep their topic tag through featurization.
        std::map<std::string, Document> query_metadata;
    };

    QueryService(CascadeConfig cascade, size_t latency_window = 20)
        : controller_(cascade, latency_window) {
        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            handle_health(res);
        });
        server_.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
            handle_query(req, res);
        });
    }

    ~QueryService() { stop(); }

    void load(Components components) {
        components_ = std::make_unique<Components>(std::move(components));
        ready_.store(true);
    }

    // Binds and serves on a background thread; port 0 picks a free port.
    // Returns the bound port.
    int start(const std::string& host, int port) {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
            if (bound <= 0) throw Error(ErrorCode::http, "cannot bind service socket");
        } else if (!server_.bind_to_port(host, port)) {
            throw Error(ErrorCode::http, "cannot bind port " + std::to_string(port));
        }
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    bool ready() const { return ready_.load(); }
    CascadeConfig current_config() const { return controller_.current(); }

private:
    void handle_health(httplib::Response& res) {
        if (!ready_.load()) {
            res.status = 503;
            res.set_content(Json{{"status", "loading"}}.dump(), "application/json");
            return;
        }
        auto config = controller_.current();
        Json j;
        j["status"] = "ok";
        j["config"] = {{"p_m", config.p_m},
                       {"p_pr", config.p_pr},
                       {"p_r", config.p_r},
                       {"l_th_ms", config.l_th_ms},
                       {"mode", match_mode_name(config.mode)},
                       {"reason_paths", config.reason_paths}};
        j["index"] = {{"documents", components_->store.documents().size()},
                      {"vocabulary", components_->index.postings.size()},
                      {"records", components_->store.records().size()}};
        res.set_content(j.dump(), "application/json");
    }

    void handle_query(const httplib::Request& req, httplib::Response& res) {
        if (!ready_.load()) {
            res.status = 503;
            res.set_content(Json{{"status", "loading"}}.dump(), "application/json");
            return;
        }
        Json body = Json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("query") || !body["query"].is_string()) {
            res.status = 400;
            res.set_content(Json{{"error", "body must be {\"query\": str, \"session\": str?}"}}.dump(),
                            "application/json");
            return;
        }
        std::string query_text = body["query"].get<std::string>();
        std::string session = body.value("session", std::string{});

        try {
            auto cascade = controller_.current();
            RunResult run;
            {
                // Cache access is serialized; everything else is immutable.
                std::lock_guard<std::mutex> lock(cache_mutex_);
                PipelineContext ctx{components_->store,
                                    components_->index,
                                    components_->vindex,
                                    *components_->scorer,
                                    *components_->generator,
                                    components_->bank,
                                    components_->model.fitted() ? &components_->model : nullptr,
                                    components_->prompt_template,
                                    cascade,
                                    components_->latency,
                                    {},
                                    components_->blocklist,
                                    components_->markdown,
                                    components_->seed,
                                    &mutable_store_cache(),
                                    true,
                                    false};
                auto query_doc = Document::make("query", query_text);
                auto meta = components_->query_metadata.find(normalize_prompt(query_text));
                if (meta != components_->query_metadata.end()) query_doc = meta->second;
                auto mode = components_->model.fitted() ? PipelineMode::aligned
                                                        : PipelineMode::baseline;
                run = run_query(ctx, query_doc, mode);
                if (!session.empty()) {
                    mutable_store_cache().put_session_turn(session,
                                                           SessionTurn{query_text, run.answer_text});
                }
            }
            controller_.record(run.timing.total_ms);

            Json j;
            j["answer"] = run.answer_text;
            j["confidence"] = run.confidence;
            j["citations"] = run.citations;
            j["timings"] = {{"match_ms", run.timing.match_ms},
                            {"pre_rank_ms", run.timing.pre_rank_ms},
                            {"rank_ms", run.timing.rank_ms},
                            {"generate_ms", run.timing.generate_ms},
                            {"aggregate_ms", run.timing.aggregate_ms},
                            {"total_ms", run.timing.total_ms},
                            {"cache_hit", run.trace.cache_hit}};
            res.set_content(j.dump(), "application/json");
        } catch (const Error& e) {
            res.status = 500;
            res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
        }
    }

    KvCache& mutable_store_cache() { return components_->store.cache(); }

    httplib::Server server_;
    std::thread thread_;
    std::atomic<bool> ready_{false};
    std::unique_ptr<Components> components_;
    DowngradeController controller_;
    std::mutex cache_mutex_;
};

}  // namespace pistis
